use feshbach_dyn::minibath::{EnvState, MiniBath, MiniBathSpec};
use feshbach_dyn::qops::{self, C64};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

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
    let d = mb.dim_total();
    let mut rng = StdRng::seed_from_u64(1);
    // projector sanity on this exact spec
    for trial in 0..5 {
        let mut mu = qops::zeros(d, d);
        for v in mu.iter_mut() {
            *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let p0 = mb.p0_apply(&mu);
        let idem = qops::max_abs_diff(&mb.p0_apply(&p0), &p0);
        let p1 = mb.p1_apply(&mu);
        let cross = qops::max_abs(&mb.p0_apply(&p1));
        println!("trial {trial}: idem defect {idem:.3e}, P0 P1 defect {cross:.3e}");
    }
    // chain: repeatedly apply h11_in_range-equivalent and track P0 mass
    let seed = mb.h10_apply(&mb.b_basis(1, 0));
    let mut w = mb.p1_apply(&seed);
    for step in 0..40 {
        let n = qops::frobenius_norm(&w);
        w.mapv_inplace(|x| x / n);
        let leak = qops::frobenius_norm(&mb.p0_apply(&w));
        if step % 5 == 0 || leak > 1e-8 {
            println!("step {step}: P0 mass {leak:.3e}");
        }
        w = mb.p1_apply(&mb.h_left(&w));
    }
}
