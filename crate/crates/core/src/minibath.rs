//! Exact finite-dimensional oracle: a qubit coupled to a few truncated
//! bosonic modes, with the exact block decomposition of the amplitude-space
//! generator and exact reduced dynamics.
//!
//! Amplitudes are full matrices on H_S ⊗ H_E; the Hamiltonian acts on them by
//! left multiplication and the reference projector is
//! `P0 mu = sum_ab B_ab (B_ab, mu)` with the orthonormal family
//! `B_ab = E_ab ⊗ kappa_E`, extended linearly from its action on product
//! amplitudes. All block operators H_ij = P_i H P_j act on this space.
//!
//! Z_t is read off by projecting `U_t (E_a0 ⊗ kappa_E)` back onto the B-basis
//! through the eigendecomposition of H. The memory kernel
//! `M(tau) = contraction of H01 e^{-i tau H11} H10` and the leakage operator
//! `Y_t = Int_0^t e^{-i(t-s)H11} H10 (Z_s ⊗ 1) ds` need the exponential
//! action of H11 on two seed vectors only (right multiplication commutes with
//! every block, so the remaining directions follow by linearity). That action
//! is computed in an adaptively grown block Krylov basis with full
//! reorthogonalization; it becomes exact when the reachable subspace
//! saturates, e.g. in the vacuum single-excitation sector.

use crate::qops::{self, eigh_hermitian, hs_dot, sqrt_psd, CMat, QopsError, C64};
use ndarray::{s, Array1};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MiniBathError {
    #[error("invalid specification: {0}")]
    BadSpec(String),
    #[error("total dimension {0} exceeds the cap of 256")]
    DimensionCap(usize),
    #[error("dense block matrices are limited to total dimension {cap}, got {dim}")]
    DenseCap { cap: usize, dim: usize },
    #[error("projection residual {0:.3e} above tolerance; projector inconsistency")]
    FactorizationResidual(f64),
    #[error("Krylov basis hit the cap of {0} vectors before converging")]
    KrylovCap(usize),
    #[error(transparent)]
    Qops(#[from] QopsError),
}

/// Environment reference state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvState {
    Vacuum,
    Gibbs(f64),
}

/// A qubit coupled to `n_modes` bosonic modes truncated at `n_max` quanta
/// per mode (n_max + 1 Fock levels each).
#[derive(Debug, Clone)]
pub struct MiniBathSpec {
    pub n_modes: usize,
    pub n_max: usize,
    pub mode_freqs: Vec<f64>,
    pub f_coeffs: Vec<C64>,
    pub h_coeffs: Vec<C64>,
    pub omega0: f64,
    pub env_state: EnvState,
}

impl MiniBathSpec {
    pub fn dim_env(&self) -> usize {
        (self.n_max + 1).pow(self.n_modes as u32)
    }

    pub fn dim_total(&self) -> usize {
        2 * self.dim_env()
    }

    pub fn validate(&self) -> Result<(), MiniBathError> {
        if !(1..=3).contains(&self.n_modes) {
            return Err(MiniBathError::BadSpec(format!(
                "n_modes must be 1..=3, got {}",
                self.n_modes
            )));
        }
        if !(1..=4).contains(&self.n_max) {
            return Err(MiniBathError::BadSpec(format!(
                "n_max must be 1..=4, got {}",
                self.n_max
            )));
        }
        if self.mode_freqs.len() != self.n_modes
            || self.f_coeffs.len() != self.n_modes
            || self.h_coeffs.len() != self.n_modes
        {
            return Err(MiniBathError::BadSpec(
                "mode_freqs, f_coeffs, h_coeffs must all have n_modes entries".into(),
            ));
        }
        if self.mode_freqs.iter().any(|&w| !(w > 0.0)) {
            return Err(MiniBathError::BadSpec("mode frequencies must be positive".into()));
        }
        if let EnvState::Gibbs(beta) = self.env_state {
            if !(beta > 0.0) {
                return Err(MiniBathError::BadSpec(format!(
                    "Gibbs state needs beta > 0, got {beta}"
                )));
            }
        }
        if self.dim_total() > 256 {
            return Err(MiniBathError::DimensionCap(self.dim_total()));
        }
        Ok(())
    }
}

/// Annihilation operator on a single truncated mode.
fn mode_annihilator(levels: usize) -> CMat {
    let mut a = qops::zeros(levels, levels);
    for n in 1..levels {
        a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Dense superoperator blocks on vectorized amplitudes (row-major vec).
/// Available for small total dimensions; the operator form on [`MiniBath`]
/// covers every size.
#[derive(Debug, Clone)]
pub struct FeshbachBlocks {
    pub p0: CMat,
    pub p1: CMat,
    pub h00: CMat,
    pub h01: CMat,
    pub h10: CMat,
    pub h11: CMat,
}

/// The assembled model with its spectral data.
pub struct MiniBath {
    pub spec: MiniBathSpec,
    dim_s: usize,
    dim_e: usize,
    dim: usize,
    /// total Hamiltonian on H_S ⊗ H_E
    h: CMat,
    /// interaction part
    v: CMat,
    /// free part H_S ⊗ 1 + 1 ⊗ H_E
    h0: CMat,
    h_env: CMat,
    /// environment reference state and its principal root
    omega_env: CMat,
    kappa_e: CMat,
    /// eigendecomposition of h
    evals: Array1<f64>,
    evecs: CMat,
    /// effective system Hamiltonian H_S + <H_E> 1 of the memory-kernel form
    h_eff: CMat,
}

impl MiniBath {
    pub fn new(spec: MiniBathSpec) -> Result<Self, MiniBathError> {
        spec.validate()?;
        let dim_s = 2;
        let dim_e = spec.dim_env();
        let dim = spec.dim_total();
        let levels = spec.n_max + 1;

        // per-mode ladder operators on H_E
        let mut a_ops: Vec<CMat> = Vec::with_capacity(spec.n_modes);
        for j in 0..spec.n_modes {
            let mut op = qops::identity(1);
            for k in 0..spec.n_modes {
                let factor =
                    if k == j { mode_annihilator(levels) } else { qops::identity(levels) };
                op = qops::kron(&op, &factor);
            }
            a_ops.push(op);
        }

        let mut h_env = qops::zeros(dim_e, dim_e);
        for (j, &w) in spec.mode_freqs.iter().enumerate() {
            let num = qops::dagger(&a_ops[j]).dot(&a_ops[j]);
            h_env = h_env + num.mapv(|x| x * w);
        }

        // B = a(f) + a†(h) with a(f) = sum_j conj(f_j) a_j
        let mut b_op = qops::zeros(dim_e, dim_e);
        for (j, a) in a_ops.iter().enumerate() {
            b_op = b_op
                + a.mapv(|x| x * spec.f_coeffs[j].conj())
                + qops::dagger(a).mapv(|x| x * spec.h_coeffs[j]);
        }

        let mut excited = qops::zeros(2, 2);
        excited[[0, 0]] = C64::new(1.0, 0.0);
        let mut sigma_plus = qops::zeros(2, 2);
        sigma_plus[[0, 1]] = C64::new(1.0, 0.0);
        let sigma_minus = qops::dagger(&sigma_plus);
        let h_sys = excited.mapv(|x| x * spec.omega0);

        let h0 =
            qops::kron(&h_sys, &qops::identity(dim_e)) + qops::kron(&qops::identity(2), &h_env);
        let v = qops::kron(&sigma_plus, &b_op) + qops::kron(&sigma_minus, &qops::dagger(&b_op));
        let h = &h0 + &v;

        let omega_env = match spec.env_state {
            EnvState::Vacuum => {
                let mut m = qops::zeros(dim_e, dim_e);
                m[[0, 0]] = C64::new(1.0, 0.0);
                m
            }
            EnvState::Gibbs(beta) => {
                // H_E is diagonal in the Fock basis
                let mut weights: Vec<f64> =
                    (0..dim_e).map(|i| (-beta * h_env[[i, i]].re).exp()).collect();
                let z: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= z);
                let mut m = qops::zeros(dim_e, dim_e);
                for (i, w) in weights.into_iter().enumerate() {
                    m[[i, i]] = C64::new(w, 0.0);
                }
                m
            }
        };
        let kappa_e = sqrt_psd(&omega_env)?;

        let (evals, evecs) = eigh_hermitian(&h, 1e-10)?;

        let env_energy: C64 = qops::trace(&h_env.dot(&omega_env));
        let h_eff = &h_sys + &qops::identity(2).mapv(|x| x * env_energy.re);

        Ok(Self {
            spec,
            dim_s,
            dim_e,
            dim,
            h,
            v,
            h0,
            h_env,
            omega_env,
            kappa_e,
            evals,
            evecs,
            h_eff,
        })
    }

    pub fn dim_total(&self) -> usize {
        self.dim
    }

    pub fn dim_env(&self) -> usize {
        self.dim_e
    }

    pub fn hamiltonian(&self) -> &CMat {
        &self.h
    }

    pub fn free_hamiltonian(&self) -> &CMat {
        &self.h0
    }

    pub fn interaction(&self) -> &CMat {
        &self.v
    }

    pub fn env_hamiltonian(&self) -> &CMat {
        &self.h_env
    }

    pub fn kappa_env(&self) -> &CMat {
        &self.kappa_e
    }

    pub fn env_state(&self) -> &CMat {
        &self.omega_env
    }

    /// H_eff = tr_E(H . 1 ⊗ Omega) of the memory-kernel equation.
    pub fn h_eff(&self) -> &CMat {
        &self.h_eff
    }

    /// Reference basis element B_ab = E_ab ⊗ kappa_E of range(P0).
    pub fn b_basis(&self, a: usize, b: usize) -> CMat {
        let mut unit = qops::zeros(self.dim_s, self.dim_s);
        unit[[a, b]] = C64::new(1.0, 0.0);
        qops::kron(&unit, &self.kappa_e)
    }

    /// Coefficients (B_ab, mu) of the projection onto range(P0).
    pub fn p0_coefficients(&self, mu: &CMat) -> [[C64; 2]; 2] {
        let mut c = [[C64::new(0.0, 0.0); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let block = mu.slice(s![
                    a * self.dim_e..(a + 1) * self.dim_e,
                    b * self.dim_e..(b + 1) * self.dim_e
                ]);
                let mut acc = C64::new(0.0, 0.0);
                for (x, y) in self.kappa_e.iter().zip(block.iter()) {
                    acc += x.conj() * y;
                }
                c[a][b] = acc;
            }
        }
        c
    }

    /// P0 mu = sum_ab B_ab (B_ab, mu).
    pub fn p0_apply(&self, mu: &CMat) -> CMat {
        let c = self.p0_coefficients(mu);
        let mut out = qops::zeros(self.dim, self.dim);
        for a in 0..2 {
            for b in 0..2 {
                let scaled = self.kappa_e.mapv(|x| x * c[a][b]);
                out.slice_mut(s![
                    a * self.dim_e..(a + 1) * self.dim_e,
                    b * self.dim_e..(b + 1) * self.dim_e
                ])
                .assign(&scaled);
            }
        }
        out
    }

    pub fn p1_apply(&self, mu: &CMat) -> CMat {
        mu - &self.p0_apply(mu)
    }

    /// Left multiplication by the total Hamiltonian.
    pub fn h_left(&self, mu: &CMat) -> CMat {
        self.h.dot(mu)
    }

    pub fn h00_apply(&self, mu: &CMat) -> CMat {
        self.p0_apply(&self.h.dot(&self.p0_apply(mu)))
    }

    pub fn h01_apply(&self, mu: &CMat) -> CMat {
        self.p0_apply(&self.h.dot(&self.p1_apply(mu)))
    }

    pub fn h10_apply(&self, mu: &CMat) -> CMat {
        self.p1_apply(&self.h.dot(&self.p0_apply(mu)))
    }

    pub fn h11_apply(&self, mu: &CMat) -> CMat {
        self.p1_apply(&self.h.dot(&self.p1_apply(mu)))
    }

    /// H11 action for inputs already in range(P1).
    fn h11_in_range(&self, mu: &CMat) -> CMat {
        self.p1_apply(&self.h.dot(mu))
    }

    /// Dense superoperator blocks on vectorized amplitudes; total dimension
    /// capped at 16 (the superoperators are dim^2 x dim^2).
    pub fn blocks_dense(&self) -> Result<FeshbachBlocks, MiniBathError> {
        const CAP: usize = 16;
        if self.dim > CAP {
            return Err(MiniBathError::DenseCap { cap: CAP, dim: self.dim });
        }
        let d2 = self.dim * self.dim;
        let mut p0 = qops::zeros(d2, d2);
        for a in 0..2 {
            for b in 0..2 {
                let basis = self.b_basis(a, b);
                let v: Vec<C64> = basis.iter().copied().collect();
                for (r, x) in v.iter().enumerate() {
                    for (c, y) in v.iter().enumerate() {
                        p0[[r, c]] += x * y.conj();
                    }
                }
            }
        }
        let p1 = qops::identity(d2) - &p0;
        // left multiplication in row-major vectorization: vec(H X) = (H ⊗ 1) vec(X)
        let h_left = qops::kron(&self.h, &qops::identity(self.dim));
        let h00 = p0.dot(&h_left).dot(&p0);
        let h01 = p0.dot(&h_left).dot(&p1);
        let h10 = p1.dot(&h_left).dot(&p0);
        let h11 = p1.dot(&h_left).dot(&p1);
        Ok(FeshbachBlocks { p0, p1, h00, h01, h10, h11 })
    }

    /// Interaction-picture coupling V(t) = e^{i H0 t} V e^{-i H0 t}.
    pub fn interaction_picture_v(&self, t: f64) -> Result<CMat, MiniBathError> {
        let u = qops::matrix_exp(&self.h0, -t)?; // e^{+i H0 t}
        let ud = qops::dagger(&u);
        Ok(u.dot(&self.v).dot(&ud))
    }

    /// Per-mode second moments (<a_j a_j†>, <a_j† a_j>) in the reference
    /// state. The Fock cap makes the emission moment fall short of 1 + n:
    /// the raising operator annihilates the top level.
    pub fn mode_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let levels = self.spec.n_max + 1;
        let mut emission = Vec::with_capacity(self.spec.n_modes);
        let mut absorption = Vec::with_capacity(self.spec.n_modes);
        for j in 0..self.spec.n_modes {
            let mut a_op = qops::identity(1);
            for k in 0..self.spec.n_modes {
                let factor =
                    if k == j { mode_annihilator(levels) } else { qops::identity(levels) };
                a_op = qops::kron(&a_op, &factor);
            }
            let ad = qops::dagger(&a_op);
            emission.push(qops::trace(&a_op.dot(&ad).dot(&self.omega_env)).re);
            absorption.push(qops::trace(&ad.dot(&a_op).dot(&self.omega_env)).re);
        }
        (emission, absorption)
    }

    /// Two-point kernels exactly matched to this truncated environment, for
    /// Born-like runs that are compared against the exact reduced dynamics.
    pub fn matched_kernels(
        &self,
        half: usize,
        dt: f64,
    ) -> Result<crate::spinboson::KernelSet, crate::bath::BathError> {
        let (emission, absorption) = self.mode_moments();
        crate::spinboson::KernelSet::from_mode_moments(
            self.spec.omega0,
            &self.spec.mode_freqs,
            &self.spec.f_coeffs,
            &self.spec.h_coeffs,
            &emission,
            &absorption,
            half,
            dt,
        )
    }

    /// Spectral coefficients for (B_ab, U_t (E_i0 ⊗ kappa_E)), indexed
    /// 4 i + 2 a + b.
    fn z_spectral_coeffs(&self) -> Vec<Array1<C64>> {
        let wd = qops::dagger(&self.evecs);
        let mut out = Vec::with_capacity(8);
        for i in 0..2 {
            let seed = self.b_basis(i, 0);
            let p = wd.dot(&seed);
            for a in 0..2 {
                for b in 0..2 {
                    let r = qops::dagger(&self.b_basis(a, b)).dot(&self.evecs);
                    let mut g = Array1::from_elem(self.dim, C64::new(0.0, 0.0));
                    for k in 0..self.dim {
                        let mut acc = C64::new(0.0, 0.0);
                        for m in 0..self.dim {
                            acc += p[[k, m]] * r[[m, k]];
                        }
                        g[k] = acc;
                    }
                    out.push(g);
                }
            }
        }
        out
    }

    /// Exact contraction operator Z_t (2x2), extracted by projecting the
    /// evolved basis amplitudes; errors if the projection fails to factor
    /// through the reference amplitude.
    pub fn exact_z(&self, t: f64) -> Result<CMat, MiniBathError> {
        Ok(self.exact_z_series(&[t])?.pop().unwrap())
    }

    /// Z_t on an arbitrary time grid via the spectral route.
    pub fn exact_z_series(&self, times: &[f64]) -> Result<Vec<CMat>, MiniBathError> {
        let coeffs = self.z_spectral_coeffs();
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let phases: Array1<C64> = self.evals.mapv(|w| (-C64::i() * w * t).exp());
            let mut z = qops::zeros(2, 2);
            let mut resid = 0.0f64;
            for i in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        let g = &coeffs[4 * i + 2 * a + b];
                        let val: C64 = g.iter().zip(phases.iter()).map(|(x, p)| x * p).sum();
                        if b == 0 {
                            z[[a, i]] = val;
                        } else {
                            resid = resid.max(val.norm());
                        }
                    }
                }
            }
            if resid > 1e-10 {
                return Err(MiniBathError::FactorizationResidual(resid));
            }
            out.push(z);
        }
        Ok(out)
    }

    /// Exact reduced dynamics Tr_E(U_t [rho ⊗ Omega] U_t†) on a time grid.
    pub fn exact_reduced_dynamics(&self, rho: &CMat, times: &[f64]) -> Vec<CMat> {
        let rho_tot = qops::kron(rho, &self.omega_env);
        let wd = qops::dagger(&self.evecs);
        let x = wd.dot(&rho_tot).dot(&self.evecs);
        // S^{ab}_{kl} = sum_e W_{(a e), k} conj(W_{(b e), l})
        let block = |a: usize| self.evecs.slice(s![a * self.dim_e..(a + 1) * self.dim_e, ..]);
        let mut y = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                let sab = block(a).t().dot(&block(b).mapv(|z| z.conj()));
                y.push(&x * &sab);
            }
        }
        times
            .iter()
            .map(|&t| {
                let phases: Array1<C64> = self.evals.mapv(|w| (-C64::i() * w * t).exp());
                let conj_phases = phases.mapv(|z| z.conj());
                let mut out = qops::zeros(2, 2);
                for a in 0..2 {
                    for b in 0..2 {
                        let u = y[2 * a + b].dot(&conj_phases);
                        let val: C64 = phases.iter().zip(u.iter()).map(|(p, q)| p * q).sum();
                        out[[a, b]] = val;
                    }
                }
                out
            })
            .collect()
    }

    /// Largest population of any mode's top Fock level over the evolved
    /// states; above ~1e-3 the truncation is unsafe.
    pub fn truncation_guard(&self, rho: &CMat, times: &[f64]) -> f64 {
        let levels = self.spec.n_max + 1;
        let rho_tot = qops::kron(rho, &self.omega_env);
        let wd = qops::dagger(&self.evecs);
        let x = wd.dot(&rho_tot).dot(&self.evecs);
        let mut worst = 0.0f64;
        for j in 0..self.spec.n_modes {
            let mut proj_mode = qops::identity(1);
            for k in 0..self.spec.n_modes {
                let factor = if k == j {
                    let mut p = qops::zeros(levels, levels);
                    p[[levels - 1, levels - 1]] = C64::new(1.0, 0.0);
                    p
                } else {
                    qops::identity(levels)
                };
                proj_mode = qops::kron(&proj_mode, &factor);
            }
            let proj = qops::kron(&qops::identity(2), &proj_mode);
            let pw = wd.dot(&proj).dot(&self.evecs);
            for &t in times {
                let phases: Array1<C64> = self.evals.mapv(|w| (-C64::i() * w * t).exp());
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..self.dim {
                    for l in 0..self.dim {
                        acc += phases[k] * phases[l].conj() * x[[k, l]] * pw[[l, k]];
                    }
                }
                worst = worst.max(acc.re);
            }
        }
        worst
    }

    /// Krylov decomposition of the H11 action on the two reachable seeds
    /// u_i = H10 (E_i0 ⊗ kappa_E); everything reachable from range(P0)
    /// follows by right multiplication, which commutes with all blocks.
    fn krylov(&self, tau_max: f64) -> Result<KrylovSpace, MiniBathError> {
        let seeds: Vec<CMat> = (0..2).map(|i| self.h10_apply(&self.b_basis(i, 0))).collect();
        KrylovSpace::build(self, seeds, tau_max)
    }

    /// Diagnostic: reconstruct e^{-i tau H11} u_i in the Krylov basis and
    /// report basis health (orthonormality and invariance defects).
    #[doc(hidden)]
    pub fn debug_krylov(&self, tau: f64) -> Result<(Vec<CMat>, f64, f64, usize), MiniBathError> {
        let kry = self.krylov(tau)?;
        let m = kry.len();
        let mut ortho_defect = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let g = hs_dot(&kry.basis[i], &kry.basis[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                ortho_defect = ortho_defect.max((g - target).norm());
            }
        }
        let mut invariance_defect = 0.0f64;
        for q in &kry.basis {
            let mut hq = self.h11_in_range(q);
            for qq in &kry.basis {
                let c = hs_dot(qq, &hq);
                hq.zip_mut_with(qq, |x, y| *x -= c * y);
            }
            invariance_defect = invariance_defect.max(qops::frobenius_norm(&hq));
        }
        let mut actions = Vec::new();
        for i in 0..2 {
            let coef = kry.exp_action(i, tau);
            let mut w = qops::zeros(self.dim, self.dim);
            for (r, q) in kry.basis.iter().enumerate() {
                w.zip_mut_with(q, |x, y| *x += coef[r] * y);
            }
            actions.push(w);
        }
        // cross-check: direct projected matrix T vs its eigen reconstruction
        let mut t_direct = qops::zeros(m, m);
        for i in 0..m {
            let hq = self.h11_in_range(&kry.basis[i]);
            for j in 0..m {
                t_direct[[j, i]] = hs_dot(&kry.basis[j], &hq);
            }
        }
        let mut recon = qops::zeros(m, m);
        for r in 0..m {
            for c in 0..m {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..m {
                    acc += kry.v[[r, k]] * kry.theta[k] * kry.v[[c, k]].conj();
                }
                recon[[r, c]] = acc;
            }
        }
        let t_defect = qops::max_abs_diff(&t_direct, &recon);
        let mut worst = (0usize, 0usize, 0.0f64);
        for r in 0..m {
            for c in 0..m {
                let d = (t_direct[[r, c]] - recon[[r, c]]).norm();
                if d > worst.2 {
                    worst = (r, c, d);
                }
            }
        }
        eprintln!(
            "T reconstruction defect: {t_defect:.3e} at ({}, {}): direct {} vs recon {}",
            worst.0,
            worst.1,
            t_direct[[worst.0, worst.1]],
            recon[[worst.0, worst.1]]
        );
        let mut worst_p0 = (0usize, 0.0f64);
        for (i, q) in kry.basis.iter().enumerate() {
            let leak = qops::frobenius_norm(&self.p0_apply(q));
            if leak > worst_p0.1 {
                worst_p0 = (i, leak);
            }
        }
        eprintln!("largest P0 component in basis: {:.3e} at index {}", worst_p0.1, worst_p0.0);
        let hq1 = self.h.dot(&kry.basis[1]);
        let hq18 = self.h.dot(&kry.basis[18.min(m - 1)]);
        eprintln!(
            "(q1, H q18) = {}, conj (q18, H q1) = {}",
            hs_dot(&kry.basis[1], &hq18),
            hs_dot(&kry.basis[18.min(m - 1)], &hq1).conj()
        );
        Ok((actions, ortho_defect, invariance_defect, m))
    }

    /// Exact memory-kernel samples M(tau) (2x2) of the non-local equation.
    pub fn exact_kernel(&self, taus: &[f64]) -> Result<Vec<CMat>, MiniBathError> {
        let tau_max = taus.iter().cloned().fold(0.0, f64::max);
        let kry = self.krylov(tau_max)?;
        // beta_{m, ab} = (B_ab, H q_m) = (H B_ab, q_m)
        let mut beta = vec![[[C64::new(0.0, 0.0); 2]; 2]; kry.len()];
        for a in 0..2 {
            for b in 0..2 {
                let hb = self.h.dot(&self.b_basis(a, b));
                for (m, q) in kry.basis.iter().enumerate() {
                    beta[m][a][b] = hs_dot(&hb, q);
                }
            }
        }
        let mut out = Vec::with_capacity(taus.len());
        for &tau in taus {
            let mut m_mat = qops::zeros(2, 2);
            let mut resid = 0.0f64;
            for i in 0..2 {
                let coef = kry.exp_action(i, tau);
                for a in 0..2 {
                    for b in 0..2 {
                        let val: C64 =
                            coef.iter().zip(beta.iter()).map(|(c, bt)| bt[a][b] * c).sum();
                        if b == 0 {
                            m_mat[[a, i]] = val;
                        } else {
                            resid = resid.max(val.norm());
                        }
                    }
                }
            }
            if resid > 1e-8 {
                return Err(MiniBathError::FactorizationResidual(resid));
            }
            out.push(m_mat);
        }
        Ok(out)
    }

    /// Both sides of the decomposition identity at time t:
    /// lhs = Tr_E(U_t [rho ⊗ Omega] U_t†) by direct propagation,
    /// rhs = Z_t rho Z_t† + Tr_E[(Y_t k0)(Y_t k0)†] with the Y integral
    /// discretized by the trapezoid rule at spacing dt.
    pub fn exact_y_identity(
        &self,
        rho: &CMat,
        t: f64,
        dt: f64,
    ) -> Result<YIdentityReport, MiniBathError> {
        let n = (t / dt).round().max(1.0) as usize;
        let dt = t / n as f64;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        let z_series = self.exact_z_series(&times)?;
        let kappa_s = sqrt_psd(rho)?;

        let kry = self.krylov(t)?;
        let m_dim = kry.len();
        // sigma_{i b}[k] = sum_s w_s (Z_s kappa_S)_{i b} e^{-i (t - s) theta_k}
        let zero_vec = || Array1::from_elem(m_dim, C64::new(0.0, 0.0));
        let mut sigma = [[zero_vec(), zero_vec()], [zero_vec(), zero_vec()]];
        for (s_idx, z) in z_series.iter().enumerate() {
            let w = if s_idx == 0 || s_idx == n { 0.5 * dt } else { dt };
            let zk = z.dot(&kappa_s);
            let lag = t - times[s_idx];
            for (k, &th) in kry.theta.iter().enumerate() {
                let phase = (-C64::i() * th * lag).exp() * w;
                for i in 0..2 {
                    for b in 0..2 {
                        sigma[i][b][k] += zk[[i, b]] * phase;
                    }
                }
            }
        }
        // Y kappa0 = sum_b [ Q V sum_i (sigma_ib o c~_i) ] (E_0b ⊗ 1)
        let mut y_kappa = qops::zeros(self.dim, self.dim);
        for b in 0..2 {
            let mut w_vec = zero_vec();
            for i in 0..2 {
                for k in 0..m_dim {
                    w_vec[k] += sigma[i][b][k] * kry.seed_eigen_coeffs[i][k];
                }
            }
            let psi = kry.from_eigen(&w_vec);
            // right multiplication by E_0b ⊗ 1: block column b <- block column 0
            let src = psi.slice(s![.., 0..self.dim_e]).to_owned();
            y_kappa
                .slice_mut(s![.., b * self.dim_e..(b + 1) * self.dim_e])
                .zip_mut_with(&src, |dst, &v| *dst += v);
        }

        let z_t = &z_series[n];
        let leak_total = y_kappa.dot(&qops::dagger(&y_kappa));
        let leak = qops::partial_trace_env(&leak_total, self.dim_s, self.dim_e)?;
        let rhs = z_t.dot(rho).dot(&qops::dagger(z_t)) + leak;
        let lhs = self.exact_reduced_dynamics(rho, &[t]).pop().unwrap();
        let residual = qops::frobenius_norm(&(&lhs - &rhs));
        Ok(YIdentityReport {
            lhs,
            rhs,
            residual,
            krylov_dim: m_dim,
            krylov_exact: kry.saturated,
        })
    }
}

/// Result of the decomposition-identity check.
pub struct YIdentityReport {
    pub lhs: CMat,
    pub rhs: CMat,
    pub residual: f64,
    pub krylov_dim: usize,
    pub krylov_exact: bool,
}

/// Orthonormal Krylov basis of span{H11^k u_i} with the projected generator
/// diagonalized: T = Q† H11 Q = V diag(theta) V†.
struct KrylovSpace {
    dim: usize,
    basis: Vec<CMat>,
    theta: Vec<f64>,
    /// V† (Q† u_i) per seed
    seed_eigen_coeffs: [Array1<C64>; 2],
    /// eigenbasis rotation V
    v: CMat,
    /// columns of Q V cached as amplitude matrices
    eigen_vectors: Vec<CMat>,
    saturated: bool,
}

impl KrylovSpace {
    fn len(&self) -> usize {
        self.theta.len()
    }

    fn build(mb: &MiniBath, seeds: Vec<CMat>, tau_max: f64) -> Result<Self, MiniBathError> {
        assert_eq!(seeds.len(), 2);
        let cap = 1500usize.min(mb.dim * mb.dim);
        let scale = seeds.iter().map(qops::frobenius_norm).fold(0.0, f64::max).max(1e-300);
        let drop_tol = 1e-13 * scale;

        let mut basis: Vec<CMat> = Vec::new();
        let mut t_rows: Vec<Vec<C64>> = Vec::new();
        let mut seed_coeffs: Vec<Vec<C64>> = vec![Vec::new(); seeds.len()];

        fn orthogonalize(basis: &[CMat], w: &mut CMat) -> f64 {
            for _ in 0..2 {
                for q in basis.iter() {
                    let c = hs_dot(q, w);
                    if c.norm() > 0.0 {
                        w.zip_mut_with(q, |x, y| *x -= c * y);
                    }
                }
            }
            qops::frobenius_norm(w)
        }

        // insert a candidate; returns its H11 image if it survived. A
        // candidate that loses nearly all of its norm to the projection is
        // pure roundoff dust: normalizing it would admit an arbitrary noise
        // vector (typically outside range(P1)) into the basis, so it is
        // dropped, re-projected and re-orthogonalized instead.
        let mut insert = |basis: &mut Vec<CMat>,
                          t_rows: &mut Vec<Vec<C64>>,
                          seed_coeffs: &mut Vec<Vec<C64>>,
                          mut w: CMat|
         -> Option<CMat> {
            let before = qops::frobenius_norm(&w);
            let n1 = orthogonalize(basis, &mut w);
            if n1 <= drop_tol.max(1e-8 * before) {
                return None;
            }
            let mut w = mb.p1_apply(&w);
            let norm = orthogonalize(basis, &mut w);
            if norm <= 0.5 * n1 {
                return None;
            }
            w.mapv_inplace(|x| x / norm);
            let hw = mb.h11_in_range(&w);
            let mut row: Vec<C64> = basis.iter().map(|q| hs_dot(q, &hw)).collect();
            row.push(hs_dot(&w, &hw));
            for (i, seed) in seeds.iter().enumerate() {
                seed_coeffs[i].push(hs_dot(&w, seed));
            }
            basis.push(w);
            t_rows.push(row);
            Some(hw)
        };

        let mut frontier: Vec<CMat> = Vec::new();
        for seed in &seeds {
            let projected = mb.p1_apply(seed);
            if let Some(hw) = insert(&mut basis, &mut t_rows, &mut seed_coeffs, projected) {
                frontier.push(hw);
            }
        }

        let mut saturated = frontier.is_empty();
        let mut prev_probe: Option<Vec<Array1<C64>>> = None;
        while !saturated {
            let mut next = Vec::new();
            for hw in std::mem::take(&mut frontier) {
                if basis.len() >= cap {
                    return Err(MiniBathError::KrylovCap(cap));
                }
                if let Some(hnew) = insert(&mut basis, &mut t_rows, &mut seed_coeffs, hw) {
                    next.push(hnew);
                }
            }
            if next.is_empty() {
                saturated = true;
                break;
            }
            frontier = next;

            // convergence probe on the exponential action at the largest lag,
            // expressed in the (stable) Krylov frame
            let m = basis.len();
            if m % 6 == 0 {
                let (theta, v) = diag_projected(&t_rows)?;
                let probe: Vec<Array1<C64>> = seed_coeffs
                    .iter()
                    .map(|c| {
                        let in_eigen = to_eigen(&v, c);
                        Array1::from_shape_fn(m, |r| {
                            let mut acc = C64::new(0.0, 0.0);
                            for k in 0..m {
                                acc += v[[r, k]]
                                    * in_eigen[k]
                                    * (-C64::i() * theta[k] * tau_max).exp();
                            }
                            acc
                        })
                    })
                    .collect();
                if let Some(prev) = &prev_probe {
                    let mut worst = 0.0f64;
                    for (p, q) in prev.iter().zip(probe.iter()) {
                        let mut diff = 0.0f64;
                        let mut norm = 0.0f64;
                        for k in 0..q.len() {
                            let old = if k < p.len() { p[k] } else { C64::new(0.0, 0.0) };
                            diff += (q[k] - old).norm_sqr();
                            norm += q[k].norm_sqr();
                        }
                        worst = worst.max((diff / norm.max(1e-300)).sqrt());
                    }
                    if worst < 1e-11 {
                        break;
                    }
                }
                prev_probe = Some(probe);
            }
        }

        let (theta, v) = diag_projected(&t_rows)?;
        let m = basis.len();
        let mut eigen_vectors = Vec::with_capacity(m);
        for k in 0..m {
            let mut acc = qops::zeros(mb.dim, mb.dim);
            for (r, q) in basis.iter().enumerate() {
                let c = v[[r, k]];
                if c.norm() > 0.0 {
                    acc.zip_mut_with(q, |x, y| *x += c * y);
                }
            }
            eigen_vectors.push(acc);
        }
        let seed_eigen_coeffs = std::array::from_fn(|i| to_eigen(&v, &seed_coeffs[i]));
        Ok(Self {
            dim: mb.dim,
            basis,
            theta: theta.to_vec(),
            seed_eigen_coeffs,
            v,
            eigen_vectors,
            saturated,
        })
    }

    /// Coefficients over the Krylov basis of e^{-i tau H11} u_seed.
    fn exp_action(&self, seed: usize, tau: f64) -> Vec<C64> {
        let m = self.len();
        let mut out = vec![C64::new(0.0, 0.0); m];
        for r in 0..m {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..m {
                acc += self.v[[r, k]]
                    * self.seed_eigen_coeffs[seed][k]
                    * (-C64::i() * self.theta[k] * tau).exp();
            }
            out[r] = acc;
        }
        out
    }

    /// Reconstruct an amplitude from eigenbasis coefficients: Q V w.
    fn from_eigen(&self, w: &Array1<C64>) -> CMat {
        let mut out = qops::zeros(self.dim, self.dim);
        for (k, ev) in self.eigen_vectors.iter().enumerate() {
            if w[k].norm() > 0.0 {
                out.zip_mut_with(ev, |x, y| *x += w[k] * y);
            }
        }
        out
    }
}

fn diag_projected(t_rows: &[Vec<C64>]) -> Result<(Array1<f64>, CMat), MiniBathError> {
    let m = t_rows.len();
    if m == 0 {
        return Ok((Array1::zeros(0), qops::zeros(0, 0)));
    }
    let mut t = qops::zeros(m, m);
    // entry j of stored row i is (q_j, H q_i), i.e. column i of T
    for (i, row) in t_rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[[j, i]] = v;
            t[[i, j]] = v.conj();
        }
    }
    Ok(eigh_hermitian(&t, 1e-6)?)
}

/// V† c for a coefficient vector in the Krylov frame.
fn to_eigen(v: &CMat, c: &[C64]) -> Array1<C64> {
    let m = c.len();
    Array1::from_shape_fn(m, |k| {
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..m {
            acc += v[[r, k]].conj() * c[r];
        }
        acc
    })
}

/// Ordered product of midpoint-rule step exponentials
/// `W = e^{-i A_{n-1} dt} ... e^{-i A_0 dt}` for Hermitian generator samples
/// (midpoints, ascending in time).
pub fn time_ordered_exp(samples: &[CMat], dt: f64) -> Result<CMat, QopsError> {
    if samples.is_empty() {
        return Err(QopsError::DimensionMismatch { expected: 1, got: 0 });
    }
    let dim = samples[0].nrows();
    let mut w = qops::identity(dim);
    for a in samples {
        let step = qops::matrix_exp(a, dt)?;
        w = step.dot(&w);
    }
    Ok(w)
}
