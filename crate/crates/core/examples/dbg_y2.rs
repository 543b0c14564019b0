use feshbach_dyn::minibath::{EnvState, MiniBath, MiniBathSpec};
use feshbach_dyn::qops::{self, C64, CMat};

fn taylor_exp_h11(mb: &MiniBath, tau: f64, v: &CMat) -> CMat {
    // e^{-i tau H11} v by many small Taylor steps
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
    // kernel route: M(tau) from library vs Taylor propagation + contraction
    for tau in [0.5, 2.0] {
        let m_lib = mb.exact_kernel(&[tau]).unwrap().pop().unwrap();
        let mut m_taylor = qops::zeros(2, 2);
        for i in 0..2 {
            let u = mb.h10_apply(&mb.b_basis(i, 0));
            let w = taylor_exp_h11(&mb, tau, &u);
            let c = {
                // coefficients (B_a0, H w)
                let hw = mb.h_left(&w);
                mb.p0_coefficients(&hw)
            };
            for a in 0..2 {
                m_taylor[[a, i]] = c[a][0];
            }
        }
        let diff = qops::max_abs_diff(&m_lib, &m_taylor);
        println!("tau={tau}: |M_lib - M_taylor| = {diff:.3e}");
    }
}
