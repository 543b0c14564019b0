//! The qubit-boson model beyond the rotating-wave approximation, solved in
//! the Born-like approximation.
//!
//! Basis convention: index 0 is the excited level |1> (sigma+ sigma- |1> = |1>),
//! index 1 is the ground level |2>; `rho11` is the excited population. The
//! rotating channel `f` couples through sigma+ a(f) + h.c., the
//! counter-rotating channel `h` through sigma+ a†(h) + h.c.
//!
//! Pipeline: solve the decoupled amplitude equations
//! `dz_k/dt = -Int_0^t m_k(t-s) z_k(s) ds`, accumulate the leakage
//! coefficients d1, d2, alpha by incremental 2-D trapezoid quadrature over
//! [0,t]^2, and assemble the interaction-picture map
//!
//! ```text
//!   L(rho) = Z rho Z†  +  d1 s- rho s+  +  d2 s+ rho s-
//!                      +  alpha s+ rho s+  +  conj(alpha) s- rho s-
//! ```
//!
//! with Z = z1 |1><1| + z2 |2><2|. Trace preservation is equivalent to
//! d_k + |z_k|^2 = 1, which holds exactly in continuum time; the pipeline
//! computes d_k from the double integrals and keeps the identity as a check.

use crate::bath::{self, BathError, BathSpec, CorrelationKernel, KernelTag};
use crate::qops::{self, choi_of_map, ChoiMatrix, CMat, C64};
use crate::volterra::{self, VolterraError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpinBosonError {
    #[error(transparent)]
    Bath(#[from] BathError),
    #[error(transparent)]
    Volterra(#[from] VolterraError),
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

/// Model parameters: qubit splitting, bath channels, and the time grid.
#[derive(Debug, Clone)]
pub struct SpinBosonParams {
    pub omega0: f64,
    pub bath: BathSpec,
    pub t_max: f64,
    pub dt: f64,
    pub secular: bool,
}

impl SpinBosonParams {
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SpinBosonError> {
        if !(self.dt > 0.0) || !(self.t_max > 0.0) {
            return Err(SpinBosonError::BadParams(format!(
                "dt and t_max must be positive, got dt={}, t_max={}",
                self.dt, self.t_max
            )));
        }
        if self.n_steps() > volterra::MAX_STEPS {
            return Err(SpinBosonError::BadParams(format!(
                "{} steps exceed the cap",
                self.n_steps()
            )));
        }
        self.bath.validate()?;
        Ok(())
    }
}

/// The five sampled kernels driving one run.
#[derive(Debug, Clone)]
pub struct KernelSet {
    pub m1: CorrelationKernel,
    pub m2: CorrelationKernel,
    pub d1: CorrelationKernel,
    pub d2: CorrelationKernel,
    pub a: CorrelationKernel,
}

impl KernelSet {
    /// Sample all kernels of a bath specification on the run grid.
    pub fn from_bath(
        omega0: f64,
        spec: &BathSpec,
        half: usize,
        dt: f64,
    ) -> Result<Self, BathError> {
        let m1 = bath::kernel_m(omega0, spec, 1, half, dt)?;
        let m2 = bath::kernel_m(omega0, spec, 2, half, dt)?;
        let (d1, d2, a) = bath::kernel_d_a(spec, half, dt)?;
        Ok(Self { m1, m2, d1, d2, a })
    }

    /// Kernels of a finite set of ideal (untruncated) discrete modes with
    /// couplings f_j, h_j at inverse temperature beta; emission carries
    /// weight 1 + n(omega_j) and absorption n(omega_j).
    pub fn from_modes(
        omega0: f64,
        freqs: &[f64],
        f: &[C64],
        h: &[C64],
        beta: f64,
        half: usize,
        dt: f64,
    ) -> Result<Self, BathError> {
        let occ: Vec<f64> = freqs
            .iter()
            .map(|&w| bath::n_thermal(w, beta))
            .collect::<Result<_, _>>()?;
        let emission: Vec<f64> = occ.iter().map(|n| 1.0 + n).collect();
        Self::from_mode_moments(omega0, freqs, f, h, &emission, &occ, half, dt)
    }

    /// Kernels from explicit per-mode second moments: emission_j = <a_j a_j†>
    /// and absorption_j = <a_j† a_j> in the reference state. Truncated modes
    /// differ from the ideal 1 + n / n weights because the ladder stops at
    /// the Fock cap.
    #[allow(clippy::too_many_arguments)]
    pub fn from_mode_moments(
        omega0: f64,
        freqs: &[f64],
        f: &[C64],
        h: &[C64],
        emission: &[f64],
        absorption: &[f64],
        half: usize,
        dt: f64,
    ) -> Result<Self, BathError> {
        if freqs.len() != f.len()
            || freqs.len() != h.len()
            || freqs.len() != emission.len()
            || freqs.len() != absorption.len()
        {
            return Err(BathError::GridMismatch(
                "mode frequencies, couplings and moments must have equal length".into(),
            ));
        }
        let occ_pairs: Vec<(f64, f64)> = emission
            .iter()
            .zip(absorption.iter())
            .map(|(&e, &a)| (e, a))
            .collect();
        let sum = |weights: Vec<C64>, plus: bool| {
            let freqs = freqs.to_vec();
            let occ_pairs = occ_pairs.clone();
            move |tau: f64| -> C64 {
                let mut acc = C64::new(0.0, 0.0);
                for ((&w, &(emit, absorb)), &c) in
                    freqs.iter().zip(occ_pairs.iter()).zip(weights.iter())
                {
                    if plus {
                        acc += c * emit * (-C64::i() * w * tau).exp();
                    } else {
                        acc += c * absorb * (C64::i() * w * tau).exp();
                    }
                }
                acc
            }
        };
        let wf: Vec<C64> = f.iter().map(|c| C64::new(c.norm_sqr(), 0.0)).collect();
        let wh: Vec<C64> = h.iter().map(|c| C64::new(c.norm_sqr(), 0.0)).collect();
        let wx: Vec<C64> = f.iter().zip(h.iter()).map(|(a, b)| a.conj() * b).collect();

        let cf_plus = sum(wf.clone(), true);
        let cf_minus = sum(wf, false);
        let ch_plus = sum(wh.clone(), true);
        let ch_minus = sum(wh, false);
        let cx_plus = sum(wx.clone(), true);
        let cx_minus = sum(wx, false);

        let m1 = CorrelationKernel::sample_from(
            KernelTag::M1,
            |tau| Ok((C64::i() * omega0 * tau).exp() * (cf_plus(tau) + ch_minus(tau))),
            half,
            dt,
        )?;
        let m2 = CorrelationKernel::sample_from(
            KernelTag::M2,
            |tau| Ok((-C64::i() * omega0 * tau).exp() * (cf_minus(tau) + ch_plus(tau))),
            half,
            dt,
        )?;
        let d1 = CorrelationKernel::sample_from(
            KernelTag::D1,
            |tau| Ok(cf_plus(tau) + ch_minus(tau)),
            half,
            dt,
        )?;
        let d2 = CorrelationKernel::sample_from(
            KernelTag::D2,
            |tau| Ok(cf_minus(tau) + ch_plus(tau)),
            half,
            dt,
        )?;
        let a = CorrelationKernel::sample_from(
            KernelTag::A,
            |tau| Ok(cx_plus(tau) + cx_minus(tau)),
            half,
            dt,
        )?;
        Ok(Self { m1, m2, d1, d2, a })
    }
}

/// Solve the decoupled amplitude equations; z_k(0) = 1.
pub fn solve_z(params: &SpinBosonParams) -> Result<(Vec<f64>, Vec<C64>, Vec<C64>), SpinBosonError> {
    params.validate()?;
    let n = params.n_steps();
    let kernels = KernelSet::from_bath(params.omega0, &params.bath, n, params.dt)?;
    solve_z_with(&kernels, params.dt, n)
}

/// As [`solve_z`] but from pre-sampled kernels.
pub fn solve_z_with(
    kernels: &KernelSet,
    dt: f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<C64>, Vec<C64>), SpinBosonError> {
    let zero = C64::new(0.0, 0.0);
    let (times, z1, _) = volterra::solve_scalar(&kernels.m1.nonneg_lags(), zero, dt, n)?;
    let (_, z2, _) = volterra::solve_scalar(&kernels.m2.nonneg_lags(), zero, dt, n)?;
    Ok((times, z1, z2))
}

/// Incremental trapezoid accumulator for
/// `Q(t_n) = Int_0^{t_n} Int_0^{t_n} phi(s) psi(u) K(u - s) ds du`,
/// updated by boundary strips in O(n) per step so the full timeseries costs
/// O(N^2).
struct TrapezoidSquare<'a> {
    kernel: &'a CorrelationKernel,
    phi: Vec<C64>,
    psi: Vec<C64>,
    /// unweighted double sum over [0, n]^2
    m: C64,
    /// boundary row j = 0 and column k = 0 partial sums
    r0: C64,
    c0: C64,
    dt: f64,
}

impl<'a> TrapezoidSquare<'a> {
    fn new(kernel: &'a CorrelationKernel, dt: f64) -> Self {
        Self {
            kernel,
            phi: Vec::new(),
            psi: Vec::new(),
            m: C64::new(0.0, 0.0),
            r0: C64::new(0.0, 0.0),
            c0: C64::new(0.0, 0.0),
            dt,
        }
    }

    /// Append the grid values at index n and return Q(t_n).
    fn push(&mut self, phi_n: C64, psi_n: C64) -> C64 {
        let n = self.phi.len();
        self.phi.push(phi_n);
        self.psi.push(psi_n);
        let k0 = self.kernel.at_index(0);
        if n == 0 {
            self.m = phi_n * psi_n * k0;
            self.r0 = psi_n * k0;
            self.c0 = phi_n * k0;
            return C64::new(0.0, 0.0);
        }
        // fresh boundary row (j = n) and column (k = n)
        let mut row_n = C64::new(0.0, 0.0);
        for kk in 0..=n {
            row_n += self.psi[kk] * self.kernel.at_index(kk as isize - n as isize);
        }
        row_n *= phi_n;
        let mut col_n = C64::new(0.0, 0.0);
        for j in 0..=n {
            col_n += self.phi[j] * self.kernel.at_index(n as isize - j as isize);
        }
        col_n *= psi_n;
        self.m += row_n + col_n - phi_n * psi_n * k0;
        self.r0 += psi_n * self.kernel.at_index(n as isize);
        self.c0 += phi_n * self.kernel.at_index(-(n as isize));

        let row0 = self.phi[0] * self.r0;
        let col0 = self.psi[0] * self.c0;
        let corners = self.phi[0] * self.psi[0] * k0
            + self.phi[0] * psi_n * self.kernel.at_index(n as isize)
            + phi_n * self.psi[0] * self.kernel.at_index(-(n as isize))
            + phi_n * psi_n * k0;
        let q = self.m - 0.5 * (row0 + col0 + row_n + col_n) + 0.25 * corners;
        q * self.dt * self.dt
    }
}

/// The leakage coefficients on the grid; `max_imag_defect` reports the
/// largest imaginary part discarded from d1/d2.
pub struct DAlpha {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub alpha: Vec<C64>,
    pub max_imag_defect: f64,
}

/// Double-integral coefficients
/// `d_k(t) = Int Int m_k(u - s) z_k(s) conj(z_k(u)) ds du` and
/// `alpha(t) = Int Int e^{i w0 (s + u)} A(u - s) z2(s) conj(z1(u)) ds du`.
/// The d_k are real up to roundoff; the identity d_k = 1 - |z_k|^2 is left
/// to the caller as a cross-check, never used as a shortcut.
pub fn compute_d_alpha(
    omega0: f64,
    kernels: &KernelSet,
    times: &[f64],
    z1: &[C64],
    z2: &[C64],
) -> Result<DAlpha, SpinBosonError> {
    let n = times.len();
    if z1.len() != n || z2.len() != n {
        return Err(SpinBosonError::GridMismatch(format!(
            "times ({n}) and z grids ({}, {}) differ",
            z1.len(),
            z2.len()
        )));
    }
    if kernels.m1.half_len() + 1 < n {
        return Err(SpinBosonError::GridMismatch(format!(
            "kernels sampled to {} lags, need {}",
            kernels.m1.half_len(),
            n - 1
        )));
    }
    let dt = kernels.m1.dt();
    let mut acc1 = TrapezoidSquare::new(&kernels.m1, dt);
    let mut acc2 = TrapezoidSquare::new(&kernels.m2, dt);
    let mut acca = TrapezoidSquare::new(&kernels.a, dt);
    let mut d1 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut imag_defect = 0.0f64;
    for i in 0..n {
        let q1 = acc1.push(z1[i], z1[i].conj());
        let q2 = acc2.push(z2[i], z2[i].conj());
        let phase = (C64::i() * omega0 * times[i]).exp();
        let qa = acca.push(phase * z2[i], phase * z1[i].conj());
        imag_defect = imag_defect.max(q1.im.abs()).max(q2.im.abs());
        d1.push(q1.re);
        d2.push(q2.re);
        alpha.push(qa);
    }
    Ok(DAlpha { d1, d2, alpha, max_imag_defect: imag_defect })
}

/// The dynamical map at one time, as a Kraus-coefficient record plus the Choi
/// matrix and its diagnostics.
#[derive(Debug, Clone)]
pub struct MapSnapshot {
    pub t: f64,
    pub z1: C64,
    pub z2: C64,
    pub d1: f64,
    pub d2: f64,
    pub alpha: C64,
    pub choi: ChoiMatrix,
    pub trace_defect: f64,
    pub min_choi_eig: f64,
}

impl MapSnapshot {
    /// Interaction-picture map action on a 2x2 state.
    pub fn apply(&self, rho: &CMat) -> CMat {
        apply_map(self.z1, self.z2, self.d1, self.d2, self.alpha, rho)
    }

    /// Lab-frame action: free qubit conjugation after the interaction-picture
    /// map.
    pub fn apply_lab(&self, omega0: f64, rho: &CMat) -> CMat {
        let mapped = self.apply(rho);
        free_conjugation(omega0, self.t, &mapped)
    }

    /// |d_k + |z_k|^2 - 1| for k = 1, 2.
    pub fn trace_identity_defects(&self) -> (f64, f64) {
        (
            (self.d1 + self.z1.norm_sqr() - 1.0).abs(),
            (self.d2 + self.z2.norm_sqr() - 1.0).abs(),
        )
    }

    /// |alpha|^2 - d1 d2; positive values violate the CP block condition.
    pub fn cp_block_excess(&self) -> f64 {
        self.alpha.norm_sqr() - self.d1 * self.d2
    }
}

fn apply_map(z1: C64, z2: C64, d1: f64, d2: f64, alpha: C64, rho: &CMat) -> CMat {
    let mut out = qops::zeros(2, 2);
    out[[0, 0]] = z1 * rho[[0, 0]] * z1.conj() + d2 * rho[[1, 1]];
    out[[1, 1]] = z2 * rho[[1, 1]] * z2.conj() + d1 * rho[[0, 0]];
    out[[0, 1]] = z1 * rho[[0, 1]] * z2.conj() + alpha * rho[[1, 0]];
    out[[1, 0]] = z2 * rho[[1, 0]] * z1.conj() + alpha.conj() * rho[[0, 1]];
    out
}

/// Conjugate a 2x2 state by e^{-i H_S t}, H_S = omega0 |1><1|.
pub fn free_conjugation(omega0: f64, t: f64, rho: &CMat) -> CMat {
    let phase = (-C64::i() * omega0 * t).exp();
    let mut out = rho.clone();
    out[[0, 1]] *= phase;
    out[[1, 0]] *= phase.conj();
    out
}

/// Assemble the snapshot at one grid point; the secular flag discards alpha.
pub fn assemble_map(
    t: f64,
    z1: C64,
    z2: C64,
    d1: f64,
    d2: f64,
    alpha: C64,
    secular: bool,
) -> Result<MapSnapshot, SpinBosonError> {
    let alpha = if secular { C64::new(0.0, 0.0) } else { alpha };
    let choi = choi_of_map(|rho| apply_map(z1, z2, d1, d2, alpha, rho), 2);
    let trace_defect = choi
        .trace_defect()
        .map_err(|e| SpinBosonError::BadParams(e.to_string()))?;
    let min_choi_eig = choi
        .min_eig()
        .map_err(|e| SpinBosonError::BadParams(e.to_string()))?;
    Ok(MapSnapshot { t, z1, z2, d1, d2, alpha, choi, trace_defect, min_choi_eig })
}

/// A full Born-like run on the grid.
pub struct SpinBosonRun {
    pub params: SpinBosonParams,
    pub times: Vec<f64>,
    pub snapshots: Vec<MapSnapshot>,
    pub max_imag_defect: f64,
}

/// solve_z -> compute_d_alpha -> assemble_map over the whole grid.
pub fn run_pipeline(params: &SpinBosonParams) -> Result<SpinBosonRun, SpinBosonError> {
    params.validate()?;
    let n = params.n_steps();
    let kernels = KernelSet::from_bath(params.omega0, &params.bath, n, params.dt)?;
    run_pipeline_with(params, &kernels)
}

/// Pipeline entry for pre-built kernels (used for mode-matched comparisons).
pub fn run_pipeline_with(
    params: &SpinBosonParams,
    kernels: &KernelSet,
) -> Result<SpinBosonRun, SpinBosonError> {
    let n = params.n_steps();
    let (times, z1, z2) = solve_z_with(kernels, params.dt, n)?;
    let da = compute_d_alpha(params.omega0, kernels, &times, &z1, &z2)?;
    let mut snapshots = Vec::with_capacity(n + 1);
    for i in 0..=n {
        snapshots.push(assemble_map(
            times[i],
            z1[i],
            z2[i],
            da.d1[i],
            da.d2[i],
            da.alpha[i],
            params.secular,
        )?);
    }
    Ok(SpinBosonRun {
        params: params.clone(),
        times,
        snapshots,
        max_imag_defect: da.max_imag_defect,
    })
}

/// White-noise (delta-correlated) closed-form map parameters; CP requires
/// gamma1 gamma2 >= |eta|^2.
#[derive(Debug, Clone)]
pub struct WhiteNoiseParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub eta: C64,
    pub omega0: f64,
}

impl WhiteNoiseParams {
    pub fn validate(&self) -> Result<(), SpinBosonError> {
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return Err(SpinBosonError::BadParams(format!(
                "rates must be nonnegative, got {} and {}",
                self.gamma1, self.gamma2
            )));
        }
        if self.eta.norm_sqr() > self.gamma1 * self.gamma2 * (1.0 + 1e-12) {
            return Err(SpinBosonError::BadParams(format!(
                "|eta|^2 = {:.6e} exceeds gamma1*gamma2 = {:.6e}; the map would not be CP",
                self.eta.norm_sqr(),
                self.gamma1 * self.gamma2
            )));
        }
        Ok(())
    }

    /// The cross coefficient
    /// eta(t) = 2 eta / (g1 + g2 + 4 i w0) (1 - e^{-(g1 + g2 + 4 i w0) t / 2}).
    /// The exponent carries the factor t so that eta(0) = 0 and the map is
    /// the identity at t = 0; the degenerate zero-rate limit is eta * t.
    pub fn eta_t(&self, t: f64) -> C64 {
        let s = C64::new(self.gamma1 + self.gamma2, 4.0 * self.omega0);
        if s.norm() < 1e-14 {
            return self.eta * t;
        }
        2.0 * self.eta / s * (1.0 - (-0.5 * s * t).exp())
    }
}

/// Evaluate the white-noise map at time t on a 2x2 state; index 0 is level 1.
pub fn whitenoise_apply(p: &WhiteNoiseParams, t: f64, secular: bool, rho: &CMat) -> CMat {
    let u1 = -(-p.gamma1 * t).exp_m1(); // 1 - e^{-g1 t}
    let u2 = -(-p.gamma2 * t).exp_m1();
    let dec = (-0.5 * (p.gamma1 + p.gamma2) * t).exp();
    let eta_t = if secular { C64::new(0.0, 0.0) } else { p.eta_t(t) };
    let d1 = u1 * rho[[0, 0]];
    let d2 = u2 * rho[[1, 1]];
    let mut out = qops::zeros(2, 2);
    out[[0, 0]] = (rho[[0, 0]] - d1) + d2;
    out[[1, 1]] = (rho[[1, 1]] - d2) + d1;
    out[[0, 1]] = dec * rho[[0, 1]] + eta_t * rho[[1, 0]];
    out[[1, 0]] = dec * rho[[1, 0]] + eta_t.conj() * rho[[0, 1]];
    out
}

/// 2x2 transfer matrix of the white-noise populations (rho11, rho22).
pub fn whitenoise_population_transfer(p: &WhiteNoiseParams, t: f64) -> [[f64; 2]; 2] {
    let e1 = (-p.gamma1 * t).exp();
    let e2 = (-p.gamma2 * t).exp();
    [[e1, 1.0 - e2], [1.0 - e1, e2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::SpectralChannel;
    use crate::qops::max_abs_diff;

    fn resonant_params(gamma: f64, lambda: f64, t_max: f64, dt: f64) -> SpinBosonParams {
        SpinBosonParams {
            omega0: 1.0,
            bath: BathSpec::vacuum(
                SpectralChannel::Lorentzian { center: 1.0, width: lambda, strength: gamma },
                SpectralChannel::zero(),
            ),
            t_max,
            dt,
            secular: false,
        }
    }

    fn excited() -> CMat {
        ndarray::array![
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
        ]
    }

    #[test]
    fn zero_bath_keeps_z_at_one() {
        let params = SpinBosonParams {
            omega0: 1.0,
            bath: BathSpec::vacuum(SpectralChannel::zero(), SpectralChannel::zero()),
            t_max: 1.0,
            dt: 1e-2,
            secular: false,
        };
        let (_, z1, z2) = solve_z(&params).unwrap();
        for (a, b) in z1.iter().zip(z2.iter()) {
            assert!((a - C64::new(1.0, 0.0)).norm() < 1e-14);
            assert!((b - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn vacuum_rwa_freezes_z2() {
        let params = resonant_params(0.5, 0.4, 2.0, 1e-3);
        let (_, z1, z2) = solve_z(&params).unwrap();
        for z in &z2 {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
        assert!(z1.last().unwrap().norm() < 1.0);
    }

    #[test]
    fn resonant_z1_matches_damped_oscillator() {
        let (gamma, lambda) = (0.8, 0.5);
        let params = resonant_params(gamma, lambda, 5.0, 1e-3);
        let (times, z1, _) = solve_z(&params).unwrap();
        let c = 0.5 * gamma * lambda;
        let mut worst = 0.0f64;
        for (i, &t) in times.iter().enumerate() {
            let expect = volterra::exponential_kernel_reference(c, lambda, t);
            worst = worst.max((z1[i] - expect).norm());
        }
        assert!(worst < 1e-6, "max deviation {worst}");
    }

    #[test]
    fn d_alpha_start_at_zero_and_stay_real() {
        let params = resonant_params(0.5, 0.4, 2.0, 1e-3);
        let n = params.n_steps();
        let kernels = KernelSet::from_bath(params.omega0, &params.bath, n, params.dt).unwrap();
        let (times, z1, z2) = solve_z_with(&kernels, params.dt, n).unwrap();
        let da = compute_d_alpha(params.omega0, &kernels, &times, &z1, &z2).unwrap();
        assert_eq!(da.d1[0], 0.0);
        assert_eq!(da.d2[0], 0.0);
        assert_eq!(da.alpha[0], C64::new(0.0, 0.0));
        assert!(da.max_imag_defect < 1e-10, "imag defect {}", da.max_imag_defect);
        // no cross channel: alpha identically zero
        for a in &da.alpha {
            assert_eq!(*a, C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn trace_identity_on_counter_rotating_run() {
        let params = SpinBosonParams {
            omega0: 1.0,
            bath: BathSpec {
                f_channel: SpectralChannel::Lorentzian { center: 1.0, width: 0.5, strength: 0.4 },
                h_channel: SpectralChannel::Lorentzian { center: 1.3, width: 0.7, strength: 0.2 },
                cross_channel: None,
                beta: f64::INFINITY,
            },
            t_max: 3.0,
            dt: 1e-3,
            secular: false,
        };
        let run = run_pipeline(&params).unwrap();
        let tol = 10.0 * params.dt * params.dt;
        for snap in &run.snapshots {
            let (e1, e2) = snap.trace_identity_defects();
            assert!(e1 <= tol && e2 <= tol, "t={}: defects {e1}, {e2}", snap.t);
            assert!(snap.trace_defect <= tol);
            assert!(snap.min_choi_eig >= -tol);
            assert!(snap.d1 >= -tol && snap.d1 <= 1.0 + tol);
            assert!(snap.d2 >= -tol && snap.d2 <= 1.0 + tol);
            assert!(snap.cp_block_excess() <= tol);
            assert!(snap.z1.norm() <= 1.0 + tol && snap.z2.norm() <= 1.0 + tol);
        }
    }

    #[test]
    fn snapshot_at_zero_is_identity_map() {
        let one = C64::new(1.0, 0.0);
        let snap = assemble_map(0.0, one, one, 0.0, 0.0, C64::new(0.0, 0.0), false).unwrap();
        assert!(snap.trace_defect < 1e-14);
        assert!(snap.min_choi_eig > -1e-14);
        let rho = ndarray::array![
            [C64::new(0.3, 0.0), C64::new(0.1, 0.2)],
            [C64::new(0.1, -0.2), C64::new(0.7, 0.0)]
        ];
        assert!(max_abs_diff(&snap.apply(&rho), &rho) < 1e-15);
        // Choi of the identity channel: the maximally entangled projector
        let c = snap.choi.matrix();
        assert!((c[[0, 0]].re - 1.0).abs() < 1e-14);
        assert!((c[[0, 3]].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn excited_population_decays_as_z_squared() {
        let params = resonant_params(0.6, 0.5, 4.0, 1e-3);
        let run = run_pipeline(&params).unwrap();
        let rho = excited();
        for snap in run.snapshots.iter().step_by(500) {
            let out = snap.apply(&rho);
            let expect = snap.z1.norm_sqr();
            assert!((out[[0, 0]].re - expect).abs() < 1e-12);
            assert!(qops::hermiticity_defect(&out) < 1e-12);
        }
    }

    #[test]
    fn map_preserves_trace_on_random_states() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let params = resonant_params(0.7, 0.6, 2.0, 1e-3);
        let run = run_pipeline(&params).unwrap();
        let tol = 10.0 * params.dt * params.dt;
        for _ in 0..5 {
            let a = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let psi = [C64::new(rng.gen_range(0.1..1.0), 0.0), a];
            let rho = crate::qops::DensityOperator::pure(&psi).unwrap();
            let snap = &run.snapshots[run.snapshots.len() - 1];
            let out = snap.apply(rho.matrix());
            assert!((qops::trace(&out).re - 1.0).abs() <= tol);
            assert!(qops::trace(&out).im.abs() <= 1e-12);
        }
    }

    #[test]
    fn secular_flag_zeroes_alpha() {
        let snap = assemble_map(
            1.0,
            C64::new(0.9, 0.0),
            C64::new(0.95, 0.0),
            0.19,
            0.0975,
            C64::new(0.05, 0.02),
            true,
        )
        .unwrap();
        assert_eq!(snap.alpha, C64::new(0.0, 0.0));
    }

    #[test]
    fn cross_channel_produces_alpha() {
        let w = 1.1;
        let params = SpinBosonParams {
            omega0: 1.0,
            bath: BathSpec {
                f_channel: SpectralChannel::FlatSingleMode { omega: w, weight: 0.04 },
                h_channel: SpectralChannel::FlatSingleMode { omega: w, weight: 0.04 },
                cross_channel: Some(SpectralChannel::FlatSingleMode { omega: w, weight: 0.04 }),
                beta: f64::INFINITY,
            },
            t_max: 2.0,
            dt: 1e-3,
            secular: false,
        };
        let run = run_pipeline(&params).unwrap();
        let last = run.snapshots.last().unwrap();
        assert!(last.alpha.norm() > 1e-4, "alpha = {}", last.alpha);
        let tol = 10.0 * params.dt * params.dt;
        assert!(last.cp_block_excess() <= tol);
        assert!(last.min_choi_eig >= -tol);
    }

    #[test]
    fn mode_kernels_match_flat_channels() {
        let (w, g) = (1.3, 0.2);
        let spec = BathSpec {
            f_channel: SpectralChannel::FlatSingleMode { omega: w, weight: g * g },
            h_channel: SpectralChannel::FlatSingleMode { omega: w, weight: 0.25 * g * g },
            cross_channel: Some(SpectralChannel::FlatSingleMode { omega: w, weight: 0.5 * g * g }),
            beta: 2.0,
        };
        let from_bath = KernelSet::from_bath(1.0, &spec, 50, 0.02).unwrap();
        let from_modes = KernelSet::from_modes(
            1.0,
            &[w],
            &[C64::new(g, 0.0)],
            &[C64::new(0.5 * g, 0.0)],
            2.0,
            50,
            0.02,
        )
        .unwrap();
        for i in -50isize..=50 {
            assert!((from_bath.m1.at_index(i) - from_modes.m1.at_index(i)).norm() < 1e-14);
            assert!((from_bath.m2.at_index(i) - from_modes.m2.at_index(i)).norm() < 1e-14);
            assert!((from_bath.a.at_index(i) - from_modes.a.at_index(i)).norm() < 1e-14);
        }
    }

    #[test]
    fn lab_frame_rotates_coherence_only() {
        let omega0 = 1.7;
        let t = 0.9;
        let one = C64::new(1.0, 0.0);
        let snap = assemble_map(t, one, one, 0.0, 0.0, C64::new(0.0, 0.0), false).unwrap();
        let rho = ndarray::array![
            [C64::new(0.4, 0.0), C64::new(0.2, 0.1)],
            [C64::new(0.2, -0.1), C64::new(0.6, 0.0)]
        ];
        let lab = snap.apply_lab(omega0, &rho);
        assert!((lab[[0, 0]] - rho[[0, 0]]).norm() < 1e-15);
        assert!((lab[[1, 1]] - rho[[1, 1]]).norm() < 1e-15);
        let expect = rho[[0, 1]] * (-C64::i() * omega0 * t).exp();
        assert!((lab[[0, 1]] - expect).norm() < 1e-15);
    }

    #[test]
    fn whitenoise_identity_at_zero_and_trace_exact() {
        let p = WhiteNoiseParams { gamma1: 1.0, gamma2: 0.5, eta: C64::new(0.3, 0.2), omega0: 1.0 };
        p.validate().unwrap();
        let rho = ndarray::array![
            [C64::new(0.3, 0.0), C64::new(0.1, 0.2)],
            [C64::new(0.1, -0.2), C64::new(0.7, 0.0)]
        ];
        let at0 = whitenoise_apply(&p, 0.0, false, &rho);
        assert!(max_abs_diff(&at0, &rho) < 1e-15);
        for i in 0..200 {
            let t = 0.05 * i as f64;
            let out = whitenoise_apply(&p, t, false, &rho);
            let defect = (out[[0, 0]].re + out[[1, 1]].re) - (rho[[0, 0]].re + rho[[1, 1]].re);
            assert!(defect.abs() < 1e-15, "t={t}: defect {defect}");
        }
    }

    #[test]
    fn whitenoise_asymptotic_swap() {
        let p = WhiteNoiseParams { gamma1: 1.0, gamma2: 0.5, eta: C64::new(0.0, 0.0), omega0: 1.0 };
        let t = 50.0 / 0.5;
        let rho = ndarray::array![
            [C64::new(0.85, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(0.15, 0.0)]
        ];
        let out = whitenoise_apply(&p, t, false, &rho);
        assert!((out[[0, 0]].re - 0.15).abs() <= 1e-6);
        assert!((out[[1, 1]].re - 0.85).abs() <= 1e-6);
    }

    #[test]
    fn whitenoise_population_semigroup_when_one_rate_vanishes() {
        let p = WhiteNoiseParams { gamma1: 1.0, gamma2: 0.0, eta: C64::new(0.0, 0.0), omega0: 0.7 };
        let (t, s) = (1.0, 1.0);
        let pt = whitenoise_population_transfer(&p, t);
        let pts = whitenoise_population_transfer(&p, t + s);
        let mut comp = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    comp[i][j] += pt[i][k] * pt[k][j];
                }
            }
        }
        let defect = (0..2)
            .flat_map(|i| (0..2).map(move |j| (comp[i][j] - pts[i][j]).abs()))
            .fold(0.0, f64::max);
        assert!(defect < 1e-10, "defect {defect}");
        // gamma2 = 0, eta = 0: the ground population grows monotonically
        let rho = excited();
        let mut prev = 0.0;
        for i in 0..100 {
            let out = whitenoise_apply(&p, 0.1 * i as f64, false, &rho);
            assert!(out[[1, 1]].re >= prev - 1e-15);
            prev = out[[1, 1]].re;
        }
    }

    #[test]
    fn whitenoise_eta_repair_vanishes_at_zero() {
        let p = WhiteNoiseParams { gamma1: 0.4, gamma2: 0.9, eta: C64::new(0.1, -0.5), omega0: 1.3 };
        assert_eq!(p.eta_t(0.0), C64::new(0.0, 0.0));
        let p0 = WhiteNoiseParams { gamma1: 0.0, gamma2: 0.0, eta: C64::new(0.0, 0.0), omega0: 0.0 };
        assert_eq!(p0.eta_t(2.0), C64::new(0.0, 0.0));
        // secular flag removes the cross coefficient entirely
        let rho = ndarray::array![
            [C64::new(0.5, 0.0), C64::new(0.2, 0.1)],
            [C64::new(0.2, -0.1), C64::new(0.5, 0.0)]
        ];
        let sec = whitenoise_apply(&p, 1.0, true, &rho);
        let dec = (-0.5 * (p.gamma1 + p.gamma2) * 1.0f64).exp();
        assert!((sec[[0, 1]] - dec * rho[[0, 1]]).norm() < 1e-15);
    }

    #[test]
    fn whitenoise_rejects_cp_violation() {
        let p = WhiteNoiseParams { gamma1: 1.0, gamma2: 0.5, eta: C64::new(0.8, 0.0), omega0: 1.0 };
        assert!(p.validate().is_err());
    }

    #[test]
    fn born_populations_approach_whitenoise_as_width_grows() {
        // fixed integrated weight gamma, width lambda -> large: populations of
        // the assembled map approach the delta-correlated closed form
        let gamma = 0.5;
        let p = WhiteNoiseParams { gamma1: gamma, gamma2: 0.0, eta: C64::new(0.0, 0.0), omega0: 1.0 };
        let rho = excited();
        let mut errors = Vec::new();
        for lambda in [5.0, 10.0, 20.0] {
            let params = resonant_params(gamma, lambda, 6.0, 5e-4);
            let run = run_pipeline(&params).unwrap();
            let mut worst = 0.0f64;
            for (i, snap) in run.snapshots.iter().enumerate().step_by(100) {
                let out = snap.apply(&rho);
                let wn = whitenoise_apply(&p, run.times[i], false, &rho);
                worst = worst.max((out[[0, 0]].re - wn[[0, 0]].re).abs());
            }
            errors.push(worst);
        }
        assert!(errors[1] < errors[0] && errors[2] < errors[1], "errors {errors:?}");
    }
}
