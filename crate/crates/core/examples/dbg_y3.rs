use feshbach_dyn::minibath::{EnvState, MiniBath, MiniBathSpec};
use feshbach_dyn::qops::{self, C64, CMat};

fn taylor_exp_h11(mb: &MiniBath, tau: f64, v: &CMat) -> CMat {
    let n = 400;
    let dt = tau / n as f64;
    let mut x = v.clone();
    for _ in 0..n {
        let mut term = x.clone();
        let mut acc = x.clone();
        for p in 1..14 {
            term = mb.h11_apply(&term).mapv(|z| z * (C64::new(0.0, -1.0) * dt / p as f64));
            acc = acc + &term;
        }
        x = acc;
    }
    x
}

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
    let mb = MiniBath::new(spec).unwrap();
    let tau = 1.0;
    let (actions, ortho, invar, m) = mb.debug_krylov(tau).unwrap();
    println!("krylov dim {m}, ortho defect {ortho:.3e}, invariance defect {invar:.3e}");
    for i in 0..2 {
        let u = mb.h10_apply(&mb.b_basis(i, 0));
        let direct = taylor_exp_h11(&mb, tau, &u);
        let diff = qops::max_abs_diff(&actions[i], &direct);
        println!("seed {i}: |krylov - taylor| = {diff:.3e}, |u| = {:.3e}", qops::frobenius_norm(&u));
        // norms should match too (unitary evolution within the invariant subspace)
        println!("  norms: krylov {:.6}, taylor {:.6}", qops::frobenius_norm(&actions[i]), qops::frobenius_norm(&direct));
    }
}
