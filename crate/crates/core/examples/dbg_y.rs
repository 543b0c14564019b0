use feshbach_dyn::minibath::{EnvState, MiniBath, MiniBathSpec};
use feshbach_dyn::qops::{self, C64};

fn main() {
    let spec = MiniBathSpec {
        n_modes: 1,
        n_max: 4,
        mode_freqs: vec![1.1],
        f_coeffs: vec![C64::new(0.25, 0.1)],
        h_coeffs: vec![C64::new(0.1, -0.05)],
        omega0: 1.0,
        env_state: EnvState::Gibbs(2.0),
    };
    let mb = MiniBath::new(spec.clone()).unwrap();
    let d = mb.dim_total();
    let de = d / 2;
    let mut rho = qops::zeros(2, 2);
    rho[[0, 0]] = C64::new(0.7, 0.0);
    rho[[0, 1]] = C64::new(0.3, 0.15);
    rho[[1, 0]] = C64::new(0.3, -0.15);
    rho[[1, 1]] = C64::new(0.3, 0.0);
    let t = 2.0;

    // direct decomposition: kappa_t = U_t kappa0, split by P0/P1
    let kappa_s = qops::sqrt_psd(&rho).unwrap();
    let kappa0 = qops::kron(&kappa_s, mb.kappa_env());
    let u_t = qops::matrix_exp(mb.hamiltonian(), t).unwrap();
    let kappa_t = u_t.dot(&kappa0);
    let p0k = mb.p0_apply(&kappa_t);
    let p1k = mb.p1_apply(&kappa_t);
    let lhs = qops::partial_trace_env(&kappa_t.dot(&qops::dagger(&kappa_t)), 2, de).unwrap();
    let part0 = qops::partial_trace_env(&p0k.dot(&qops::dagger(&p0k)), 2, de).unwrap();
    let part1 = qops::partial_trace_env(&p1k.dot(&qops::dagger(&p1k)), 2, de).unwrap();
    let z_t = mb.exact_z(t).unwrap();
    let z_term = z_t.dot(&rho).dot(&qops::dagger(&z_t));
    println!("norm(lhs - part0 - part1) = {:.3e}", qops::frobenius_norm(&(&(&lhs - &part0) - &part1)));
    println!("norm(part0 - Z rho Zd)    = {:.3e}", qops::frobenius_norm(&(&part0 - &z_term)));

    // Y route from the library
    let rep = mb.exact_y_identity(&rho, t, 1e-3).unwrap();
    println!("library residual          = {:.3e} (krylov dim {}, exact {})", rep.residual, rep.krylov_dim, rep.krylov_exact);
    let lib_leak = &rep.rhs - &z_term;
    println!("norm(lib_leak - part1)    = {:.3e}", qops::frobenius_norm(&(&lib_leak - &part1)));

    // brute-force Y kappa0: g' = -i H11 g + v(t), g(0) = 0, integrating-factor trapezoid
    let n = 2000usize;
    let dt = t / n as f64;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    let zs = mb.exact_z_series(&times).unwrap();
    let mut g = qops::zeros(d, d);
    for k in 0..n {
        let v_k = mb.h10_apply(&qops::kron(&zs[k].dot(&kappa_s), mb.kappa_env()));
        let v_k1 = mb.h10_apply(&qops::kron(&zs[k + 1].dot(&kappa_s), mb.kappa_env()));
        let x0 = &g + &v_k.mapv(|z| z * (0.5 * dt));
        let mut term = x0.clone();
        let mut acc = x0.clone();
        for p in 1..14 {
            term = mb.h11_apply(&term).mapv(|z| z * (C64::new(0.0, -1.0) * dt / p as f64));
            acc = acc + &term;
        }
        g = acc + v_k1.mapv(|z| z * (0.5 * dt));
    }
    let leak_direct = qops::partial_trace_env(&g.dot(&qops::dagger(&g)), 2, de).unwrap();
    println!("norm(leak_direct - part1) = {:.3e}", qops::frobenius_norm(&(&leak_direct - &part1)));
    // and compare the amplitudes themselves: g should equal i * P1 kappa_t
    let i_p1k = p1k.mapv(|z| C64::new(0.0, 1.0) * z);
    println!("norm(g - i P1 kappa_t)    = {:.3e}", qops::frobenius_norm(&(&g - &i_p1k)));
}
