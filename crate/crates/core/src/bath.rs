//! Spectral densities, thermal occupation, and the two-time bath correlation
//! functions that drive every memory kernel.
//!
//! Conventions. A channel is a spectral density J(omega) >= 0 absorbing the
//! form-factor modulus and mode density. The correlation functions are
//!
//! ```text
//!   C+(tau) = Int dw J(w) (1 + n_beta(w)) e^{-i w tau}     (emission)
//!   C-(tau) = Int dw J(w)      n_beta(w)  e^{+i w tau}     (absorption)
//! ```
//!
//! with `tau = t - s` and `n_beta(w) = 1/(e^{beta w} - 1)`. Both satisfy the
//! Hermitian symmetry C(-tau) = conj(C(tau)) and C- vanishes identically in
//! the vacuum (beta infinite).
//!
//! The lorentzian family lives on the full frequency line (that is what makes
//! its vacuum transform the exact exponential `(g l / 2) e^{-l|tau|} e^{-i wc tau}`).
//! A Bose factor against a full-line density is ill-defined, so at finite
//! temperature the lorentzian uses the narrow-band convention: the occupation
//! is evaluated at the line center, C+ = (1 + n(wc)) C+_vac and
//! C- = n(wc) conj-profile. This keeps the kernels positive definite and
//! converges exponentially to the vacuum forms as beta grows.

use crate::qops::C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BathError {
    #[error("thermal occupation requires omega > 0, got {0}")]
    NonPositiveFrequency(f64),
    #[error("inverse temperature must be positive or infinite, got {0}")]
    InvalidBeta(f64),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("divergent integral: {0}")]
    DivergentIntegral(String),
    #[error("cross channel violates |J_x|^2 <= J_f J_h at omega = {omega}: {jx2:.3e} > {bound:.3e}")]
    CrossBound { omega: f64, jx2: f64, bound: f64 },
    #[error("kernel grid mismatch: {0}")]
    GridMismatch(String),
}

/// Bose-Einstein occupation 1/(e^{beta omega} - 1); zero in the vacuum.
pub fn n_thermal(omega: f64, beta: f64) -> Result<f64, BathError> {
    if omega <= 0.0 {
        return Err(BathError::NonPositiveFrequency(omega));
    }
    if beta.is_infinite() && beta > 0.0 {
        return Ok(0.0);
    }
    if !(beta > 0.0) || beta.is_nan() {
        return Err(BathError::InvalidBeta(beta));
    }
    // expm1 keeps full precision down to beta*omega ~ 1e-300.
    Ok(1.0 / (beta * omega).exp_m1())
}

/// One coupling channel of the bath.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralChannel {
    /// J(w) = (strength width^2 / 2 pi) / ((w - center)^2 + width^2) on the
    /// full line; integrated weight strength*width/2.
    Lorentzian { center: f64, width: f64, strength: f64 },
    /// J(w) = coupling * w * exp(-w/cutoff) on w >= 0.
    OhmicExpCut { coupling: f64, cutoff: f64 },
    /// J(w) = weight * delta(w - omega), a single mode.
    FlatSingleMode { omega: f64, weight: f64 },
    /// Sampled density on an ascending grid, integrated by composite Simpson.
    Tabulated { omega: Vec<f64>, j: Vec<f64> },
}

impl SpectralChannel {
    /// A channel carrying no coupling at all.
    pub fn zero() -> Self {
        SpectralChannel::FlatSingleMode { omega: 1.0, weight: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SpectralChannel::Lorentzian { strength, .. } => *strength == 0.0,
            SpectralChannel::OhmicExpCut { coupling, .. } => *coupling == 0.0,
            SpectralChannel::FlatSingleMode { weight, .. } => *weight == 0.0,
            SpectralChannel::Tabulated { j, .. } => j.iter().all(|&v| v == 0.0),
        }
    }

    pub fn validate(&self) -> Result<(), BathError> {
        match self {
            SpectralChannel::Lorentzian { width, strength, .. } => {
                if *width <= 0.0 {
                    return Err(BathError::InvalidChannel(format!(
                        "lorentzian width must be positive, got {width}"
                    )));
                }
                if *strength < 0.0 {
                    return Err(BathError::InvalidChannel(format!(
                        "lorentzian strength must be nonnegative, got {strength}"
                    )));
                }
            }
            SpectralChannel::OhmicExpCut { coupling, cutoff } => {
                if *cutoff <= 0.0 {
                    return Err(BathError::InvalidChannel(format!(
                        "ohmic cutoff must be positive, got {cutoff}"
                    )));
                }
                if *coupling < 0.0 {
                    return Err(BathError::InvalidChannel(format!(
                        "ohmic coupling must be nonnegative, got {coupling}"
                    )));
                }
            }
            SpectralChannel::FlatSingleMode { omega, weight } => {
                if *weight < 0.0 {
                    return Err(BathError::InvalidChannel(format!(
                        "mode weight must be nonnegative, got {weight}"
                    )));
                }
                if *weight > 0.0 && *omega <= 0.0 {
                    return Err(BathError::InvalidChannel(format!(
                        "mode frequency must be positive, got {omega}"
                    )));
                }
            }
            SpectralChannel::Tabulated { omega, j } => {
                if omega.len() != j.len() || omega.len() < 2 {
                    return Err(BathError::InvalidChannel(
                        "tabulated channel needs matching grids with >= 2 points".into(),
                    ));
                }
                if omega.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(BathError::InvalidChannel(
                        "tabulated grid must be strictly ascending".into(),
                    ));
                }
                if j.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    return Err(BathError::InvalidChannel(
                        "tabulated J must be finite and nonnegative".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Integrated weight of J; equals C+(0) in the vacuum.
    pub fn total_weight(&self) -> f64 {
        match self {
            SpectralChannel::Lorentzian { width, strength, .. } => strength * width / 2.0,
            SpectralChannel::OhmicExpCut { coupling, cutoff } => coupling * cutoff * cutoff,
            SpectralChannel::FlatSingleMode { weight, .. } => *weight,
            SpectralChannel::Tabulated { omega, j } => simpson_tabulated(omega, j, |_| 1.0),
        }
    }

    /// Pointwise density; `None` for the singular single-mode family.
    pub fn j_density(&self, w: f64) -> Option<f64> {
        match self {
            SpectralChannel::Lorentzian { center, width, strength } => {
                let d = w - center;
                Some(strength * width * width / (2.0 * std::f64::consts::PI)
                    / (d * d + width * width))
            }
            SpectralChannel::OhmicExpCut { coupling, cutoff } => {
                Some(if w >= 0.0 { coupling * w * (-w / cutoff).exp() } else { 0.0 })
            }
            SpectralChannel::FlatSingleMode { .. } => None,
            SpectralChannel::Tabulated { omega, j } => Some(interp_linear(omega, j, w)),
        }
    }
}

/// Emission correlation C+(tau); see the module docs for the convention.
pub fn corr_plus(channel: &SpectralChannel, beta: f64, tau: f64) -> Result<C64, BathError> {
    channel.validate()?;
    check_beta(beta)?;
    match channel {
        SpectralChannel::Lorentzian { center, width, strength } => {
            let base = lorentzian_vacuum(*center, *width, *strength, tau);
            let occ = lorentzian_occupation(*center, *strength, beta)?;
            Ok(base * (1.0 + occ))
        }
        SpectralChannel::OhmicExpCut { coupling, cutoff } => {
            let vac = ohmic_vacuum(*coupling, *cutoff, tau);
            if beta.is_infinite() {
                Ok(vac)
            } else {
                Ok(vac + ohmic_thermal(*coupling, *cutoff, beta, tau))
            }
        }
        SpectralChannel::FlatSingleMode { omega, weight } => {
            if *weight == 0.0 {
                return Ok(C64::new(0.0, 0.0));
            }
            let occ = n_thermal(*omega, beta)?;
            Ok((1.0 + occ) * weight * (-C64::i() * *omega * tau).exp())
        }
        SpectralChannel::Tabulated { omega, j } => {
            tabulated_corr(omega, j, beta, tau, Branch::Plus)
        }
    }
}

/// Absorption correlation C-(tau); identically zero in the vacuum.
pub fn corr_minus(channel: &SpectralChannel, beta: f64, tau: f64) -> Result<C64, BathError> {
    channel.validate()?;
    check_beta(beta)?;
    if beta.is_infinite() {
        return Ok(C64::new(0.0, 0.0));
    }
    match channel {
        SpectralChannel::Lorentzian { center, width, strength } => {
            let occ = lorentzian_occupation(*center, *strength, beta)?;
            // absorption profile carries the conjugate phase
            let env = 0.5 * strength * width * (-width * tau.abs()).exp();
            Ok(occ * env * (C64::i() * *center * tau).exp())
        }
        SpectralChannel::OhmicExpCut { coupling, cutoff } => {
            Ok(ohmic_thermal(*coupling, *cutoff, beta, -tau))
        }
        SpectralChannel::FlatSingleMode { omega, weight } => {
            if *weight == 0.0 {
                return Ok(C64::new(0.0, 0.0));
            }
            let occ = n_thermal(*omega, beta)?;
            Ok(occ * weight * (C64::i() * *omega * tau).exp())
        }
        SpectralChannel::Tabulated { omega, j } => {
            tabulated_corr(omega, j, beta, tau, Branch::Minus)
        }
    }
}

fn check_beta(beta: f64) -> Result<(), BathError> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(BathError::InvalidBeta(beta));
    }
    Ok(())
}

fn lorentzian_vacuum(center: f64, width: f64, strength: f64, tau: f64) -> C64 {
    let env = 0.5 * strength * width * (-width * tau.abs()).exp();
    env * (-C64::i() * center * tau).exp()
}

/// Narrow-band occupation for the full-line lorentzian: n evaluated at the
/// line center. A pointwise Bose weighting of a full-line density diverges
/// at omega = 0, so a finite-temperature lorentzian requires center > 0.
fn lorentzian_occupation(center: f64, strength: f64, beta: f64) -> Result<f64, BathError> {
    if beta.is_infinite() || strength == 0.0 {
        return Ok(0.0);
    }
    if center <= 0.0 {
        return Err(BathError::DivergentIntegral(format!(
            "thermal lorentzian requires a positive center frequency, got {center}"
        )));
    }
    n_thermal(center, beta)
}

/// Vacuum ohmic transform: Int_0^inf a w e^{-w/wc} e^{-i w tau} dw
/// = a wc^2 / (1 + i wc tau)^2.
fn ohmic_vacuum(coupling: f64, cutoff: f64, tau: f64) -> C64 {
    let denom = C64::new(1.0, cutoff * tau);
    coupling * cutoff * cutoff / (denom * denom)
}

/// Thermal ohmic part Int_0^inf a w e^{-w/wc} n_beta(w) e^{-i w tau} dw.
/// Expanding n in a geometric series and summing termwise gives
/// (a / beta^2) psi'(1 + (1/wc + i tau)/beta) with psi' the trigamma function.
fn ohmic_thermal(coupling: f64, cutoff: f64, beta: f64, tau: f64) -> C64 {
    let z = C64::new(1.0, 0.0) + C64::new(1.0 / cutoff, tau) / beta;
    coupling / (beta * beta) * trigamma(z)
}

/// Trigamma psi'(z) for Re z > 0: downward recurrence into the asymptotic
/// region, then the Bernoulli series psi'(z) ~ 1/z + 1/2z^2 + sum B_2k / z^{2k+1}.
pub(crate) fn trigamma(mut z: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    while z.norm() < 16.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // Bernoulli numbers B_2, B_4, ... B_12
    const B: [f64; 6] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
    ];
    let mut series = inv + 0.5 * inv2;
    let mut p = inv * inv2;
    for b in B {
        series += b * p;
        p *= inv2;
    }
    acc + series
}

#[derive(Clone, Copy)]
enum Branch {
    Plus,
    Minus,
}

fn tabulated_corr(
    omega: &[f64],
    j: &[f64],
    beta: f64,
    tau: f64,
    branch: Branch,
) -> Result<C64, BathError> {
    if !beta.is_infinite() && omega[0] <= 0.0 {
        return Err(BathError::DivergentIntegral(
            "thermal weighting of a tabulated channel requires omega > 0 on the grid".into(),
        ));
    }
    let f = |w: f64, jw: f64| -> Result<C64, BathError> {
        let occ = if beta.is_infinite() { 0.0 } else { n_thermal(w, beta)? };
        Ok(match branch {
            Branch::Plus => (1.0 + occ) * jw * (-C64::i() * w * tau).exp(),
            Branch::Minus => occ * jw * (C64::i() * w * tau).exp(),
        })
    };
    let mut vals = Vec::with_capacity(omega.len());
    for (&w, &jw) in omega.iter().zip(j.iter()) {
        vals.push(f(w, jw)?);
    }
    Ok(simpson_complex(omega, &vals))
}

/// Tabulated correlation value together with a quadrature error estimate
/// (difference from the half-resolution grid).
pub fn tabulated_corr_with_error(
    omega: &[f64],
    j: &[f64],
    beta: f64,
    tau: f64,
    branch_plus: bool,
) -> Result<(C64, f64), BathError> {
    let branch = if branch_plus { Branch::Plus } else { Branch::Minus };
    let full = tabulated_corr(omega, j, beta, tau, branch)?;
    let omega_h: Vec<f64> = omega.iter().step_by(2).copied().collect();
    let j_h: Vec<f64> = j.iter().step_by(2).copied().collect();
    if omega_h.len() < 2 {
        return Ok((full, f64::NAN));
    }
    let half = tabulated_corr(&omega_h, &j_h, beta, tau, branch)?;
    Ok((full, (full - half).norm()))
}

/// Composite Simpson over an ascending grid of complex samples; panels are
/// fit pairwise by quadratics, a trailing odd interval falls back to trapezoid.
fn simpson_complex(x: &[f64], y: &[C64]) -> C64 {
    let n = x.len();
    let mut acc = C64::new(0.0, 0.0);
    let mut i = 0;
    while i + 2 < n {
        let (h0, h1) = (x[i + 1] - x[i], x[i + 2] - x[i + 1]);
        let h = h0 + h1;
        // Quadratic through three possibly unevenly spaced points.
        let c0 = h * (2.0 * h0 - h1) / (6.0 * h0);
        let c1 = h * h * h / (6.0 * h0 * h1);
        let c2 = h * (2.0 * h1 - h0) / (6.0 * h1);
        acc += c0 * y[i] + c1 * y[i + 1] + c2 * y[i + 2];
        i += 2;
    }
    if i + 1 < n {
        let h = x[i + 1] - x[i];
        acc += 0.5 * h * (y[i] + y[i + 1]);
    }
    acc
}

fn simpson_tabulated(x: &[f64], y: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
    let vals: Vec<C64> = x
        .iter()
        .zip(y.iter())
        .map(|(&w, &jw)| C64::new(jw * weight(w), 0.0))
        .collect();
    simpson_complex(x, &vals).re
}

fn interp_linear(x: &[f64], y: &[f64], at: f64) -> f64 {
    if at <= x[0] || at >= x[x.len() - 1] {
        return 0.0;
    }
    let idx = x.partition_point(|&v| v < at).max(1);
    let (x0, x1) = (x[idx - 1], x[idx]);
    let t = (at - x0) / (x1 - x0);
    y[idx - 1] * (1.0 - t) + y[idx] * t
}

/// Both coupling channels, an optional cross profile f*(k)h(k), and the
/// inverse temperature (infinite for the vacuum).
#[derive(Debug, Clone)]
pub struct BathSpec {
    pub f_channel: SpectralChannel,
    pub h_channel: SpectralChannel,
    pub cross_channel: Option<SpectralChannel>,
    pub beta: f64,
}

impl BathSpec {
    pub fn vacuum(f_channel: SpectralChannel, h_channel: SpectralChannel) -> Self {
        Self { f_channel, h_channel, cross_channel: None, beta: f64::INFINITY }
    }

    /// Checks channel validity and the pointwise Cauchy-Schwarz bound
    /// |J_x(w)|^2 <= J_f(w) J_h(w) on the cross profile.
    pub fn validate(&self) -> Result<(), BathError> {
        check_beta(self.beta)?;
        self.f_channel.validate()?;
        self.h_channel.validate()?;
        let cross = match &self.cross_channel {
            None => return Ok(()),
            Some(c) => c,
        };
        cross.validate()?;
        if cross.is_zero() {
            return Ok(());
        }
        match (&self.f_channel, &self.h_channel, cross) {
            (
                SpectralChannel::FlatSingleMode { omega: wf, weight: af },
                SpectralChannel::FlatSingleMode { omega: wh, weight: ah },
                SpectralChannel::FlatSingleMode { omega: wx, weight: ax },
            ) => {
                if (wf - wh).abs() > 1e-12 || (wf - wx).abs() > 1e-12 {
                    return Err(BathError::InvalidChannel(
                        "cross channel between single modes requires one shared frequency".into(),
                    ));
                }
                if ax * ax > af * ah * (1.0 + 1e-12) {
                    return Err(BathError::CrossBound {
                        omega: *wx,
                        jx2: ax * ax,
                        bound: af * ah,
                    });
                }
                Ok(())
            }
            _ => {
                let probe = self.probe_grid();
                for w in probe {
                    let jf = self.f_channel.j_density(w);
                    let jh = self.h_channel.j_density(w);
                    let jx = cross.j_density(w);
                    match (jf, jh, jx) {
                        (Some(jf), Some(jh), Some(jx)) => {
                            if jx * jx > jf * jh * (1.0 + 1e-9) + 1e-300 {
                                return Err(BathError::CrossBound {
                                    omega: w,
                                    jx2: jx * jx,
                                    bound: jf * jh,
                                });
                            }
                        }
                        _ => {
                            return Err(BathError::InvalidChannel(
                                "cross profile between a singular mode and a density \
                                 cannot satisfy the Cauchy-Schwarz bound"
                                    .into(),
                            ))
                        }
                    }
                }
                Ok(())
            }
        }
    }

    fn probe_grid(&self) -> Vec<f64> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut widen = |c: &SpectralChannel| match c {
            SpectralChannel::Lorentzian { center, width, .. } => {
                lo = lo.min(center - 12.0 * width);
                hi = hi.max(center + 12.0 * width);
            }
            SpectralChannel::OhmicExpCut { cutoff, .. } => {
                lo = lo.min(0.0);
                hi = hi.max(30.0 * cutoff);
            }
            SpectralChannel::FlatSingleMode { omega, .. } => {
                lo = lo.min(*omega);
                hi = hi.max(*omega);
            }
            SpectralChannel::Tabulated { omega, .. } => {
                lo = lo.min(omega[0]);
                hi = hi.max(omega[omega.len() - 1]);
            }
        };
        widen(&self.f_channel);
        widen(&self.h_channel);
        if let Some(c) = &self.cross_channel {
            widen(c);
        }
        let n = 2001;
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Which two-point function a kernel represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelTag {
    PlusF,
    MinusF,
    PlusH,
    MinusH,
    CrossPlus,
    CrossMinus,
    M1,
    M2,
    D1,
    D2,
    A,
}

/// A two-time scalar kernel sampled on the uniform grid tau = -n dt ... n dt.
#[derive(Debug, Clone)]
pub struct CorrelationKernel {
    pub tag: KernelTag,
    values: Vec<C64>,
    half: usize,
    dt: f64,
}

impl CorrelationKernel {
    pub fn sample_from(
        tag: KernelTag,
        mut eval: impl FnMut(f64) -> Result<C64, BathError>,
        half: usize,
        dt: f64,
    ) -> Result<Self, BathError> {
        if dt <= 0.0 {
            return Err(BathError::GridMismatch(format!("dt must be positive, got {dt}")));
        }
        let mut values = Vec::with_capacity(2 * half + 1);
        for i in 0..=2 * half {
            let tau = (i as isize - half as isize) as f64 * dt;
            values.push(eval(tau)?);
        }
        Ok(Self { tag, values, half, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of nonnegative lags (index range 0..=half_len on each side).
    pub fn half_len(&self) -> usize {
        self.half
    }

    /// Kernel value at tau = idx * dt for idx in [-half_len, half_len].
    pub fn at_index(&self, idx: isize) -> C64 {
        let pos = idx + self.half as isize;
        debug_assert!(pos >= 0 && (pos as usize) < self.values.len());
        self.values[pos as usize]
    }

    /// Nonnegative-lag slice m(0), m(dt), ..., m(half_len dt).
    pub fn nonneg_lags(&self) -> Vec<C64> {
        (0..=self.half as isize).map(|i| self.at_index(i)).collect()
    }

    /// Max deviation from the Hermitian symmetry C(-tau) = conj(C(tau)).
    pub fn hermitian_defect(&self) -> f64 {
        (0..=self.half as isize)
            .map(|i| (self.at_index(-i) - self.at_index(i).conj()).norm())
            .fold(0.0, f64::max)
    }
}

/// Memory kernel m_k for the decoupled amplitude equations:
/// m1(tau) = e^{+i w0 tau} [C+_f + C-_h], m2(tau) = e^{-i w0 tau} [C-_f + C+_h].
/// The phase signs follow from V(t) = e^{i H0 t} V e^{-i H0 t}; at resonance a
/// lorentzian f-channel collapses m1 to the real exponential (g l / 2) e^{-l tau}.
pub fn kernel_m(
    omega0: f64,
    spec: &BathSpec,
    which: usize,
    half: usize,
    dt: f64,
) -> Result<CorrelationKernel, BathError> {
    spec.validate()?;
    match which {
        1 => CorrelationKernel::sample_from(
            KernelTag::M1,
            |tau| {
                let c = corr_plus(&spec.f_channel, spec.beta, tau)?
                    + corr_minus(&spec.h_channel, spec.beta, tau)?;
                Ok((C64::i() * omega0 * tau).exp() * c)
            },
            half,
            dt,
        ),
        2 => CorrelationKernel::sample_from(
            KernelTag::M2,
            |tau| {
                let c = corr_minus(&spec.f_channel, spec.beta, tau)?
                    + corr_plus(&spec.h_channel, spec.beta, tau)?;
                Ok((-C64::i() * omega0 * tau).exp() * c)
            },
            half,
            dt,
        ),
        other => Err(BathError::GridMismatch(format!(
            "kernel index must be 1 or 2, got {other}"
        ))),
    }
}

/// The three double-integral kernels: D1 = C+_f + C-_h, D2 = C-_f + C+_h,
/// and the cross kernel A(tau) = C+_x(tau) + C-_x(tau) built from the cross
/// profile with emission weight (1+n) and absorption weight n.
pub fn kernel_d_a(
    spec: &BathSpec,
    half: usize,
    dt: f64,
) -> Result<(CorrelationKernel, CorrelationKernel, CorrelationKernel), BathError> {
    spec.validate()?;
    let d1 = CorrelationKernel::sample_from(
        KernelTag::D1,
        |tau| {
            Ok(corr_plus(&spec.f_channel, spec.beta, tau)?
                + corr_minus(&spec.h_channel, spec.beta, tau)?)
        },
        half,
        dt,
    )?;
    let d2 = CorrelationKernel::sample_from(
        KernelTag::D2,
        |tau| {
            Ok(corr_minus(&spec.f_channel, spec.beta, tau)?
                + corr_plus(&spec.h_channel, spec.beta, tau)?)
        },
        half,
        dt,
    )?;
    let a = match &spec.cross_channel {
        None => CorrelationKernel::sample_from(KernelTag::A, |_| Ok(C64::new(0.0, 0.0)), half, dt)?,
        Some(x) => CorrelationKernel::sample_from(
            KernelTag::A,
            |tau| Ok(corr_plus(x, spec.beta, tau)? + corr_minus(x, spec.beta, tau)?),
            half,
            dt,
        )?,
    };
    Ok((d1, d2, a))
}

/// Loads a tabulated channel from `omega<TAB>J` lines; `#` starts a comment.
pub fn load_tabulated(text: &str) -> Result<SpectralChannel, BathError> {
    let mut omega = Vec::new();
    let mut j = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (w, v) = match (parts.next(), parts.next(), parts.next()) {
            (Some(w), Some(v), None) => (w, v),
            _ => {
                return Err(BathError::InvalidChannel(format!(
                    "line {}: expected `omega<TAB>J`, got {raw:?}",
                    lineno + 1
                )))
            }
        };
        let w: f64 = w.parse().map_err(|_| {
            BathError::InvalidChannel(format!("line {}: bad frequency {w:?}", lineno + 1))
        })?;
        let v: f64 = v.parse().map_err(|_| {
            BathError::InvalidChannel(format!("line {}: bad density {v:?}", lineno + 1))
        })?;
        omega.push(w);
        j.push(v);
    }
    let ch = SpectralChannel::Tabulated { omega, j };
    ch.validate()?;
    Ok(ch)
}
