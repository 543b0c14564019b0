//! Time-domain solver for the non-local operator equation
//!
//! ```text
//!   d/dt Z_t = -i H_eff Z_t - Int_0^t M(t-s) Z_s ds,   Z_0 = 1
//! ```
//!
//! and its scalar specializations. The lag integral is discretized by the
//! trapezoid rule and the differential part by the trapezoid (Crank-Nicolson)
//! method. Both corrector contributions are linear in `Z_{n+1}`, so the
//! corrector is solved exactly by a prefactored linear solve instead of a
//! predictor-corrector sweep; the scheme stays globally second order and is
//! self-starting. The running lag sum makes the whole trajectory O(N^2).

use crate::qops::{self, CMat, C64};
use ndarray_linalg::Inverse;
use thiserror::Error;

/// Hard cap on step counts.
pub const MAX_STEPS: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum VolterraError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("step count {0} exceeds the 1e7 cap")]
    StepOverflow(usize),
    #[error("kernel/problem shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value at step {step} (t = {time:.6})")]
    NonFinite { step: usize, time: f64 },
    #[error("linear solve failed: {0}")]
    Solve(String),
    #[error("convergence study needs {0}")]
    BadStudy(String),
}

/// A convolution problem: constant effective Hamiltonian plus a kernel
/// sampled at tau = 0, dt, ..., n_steps*dt.
#[derive(Debug, Clone)]
pub struct VolterraProblem {
    pub dim: usize,
    /// Hermitian drift; may be zero (interaction picture).
    pub h_eff: CMat,
    /// M(j dt) for j = 0..=n_steps.
    pub kernel: Vec<CMat>,
    pub dt: f64,
    pub n_steps: usize,
    /// Initial condition; identity when absent.
    pub z0: Option<CMat>,
}

impl VolterraProblem {
    pub fn new(h_eff: CMat, kernel: Vec<CMat>, dt: f64, n_steps: usize) -> Self {
        let dim = h_eff.nrows();
        Self { dim, h_eff, kernel, dt, n_steps, z0: None }
    }

    fn validate(&self) -> Result<(), VolterraError> {
        if !(self.dt > 0.0) {
            return Err(VolterraError::BadGrid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps > MAX_STEPS {
            return Err(VolterraError::StepOverflow(self.n_steps));
        }
        if self.kernel.len() < self.n_steps + 1 {
            return Err(VolterraError::ShapeMismatch(format!(
                "kernel has {} samples, need {}",
                self.kernel.len(),
                self.n_steps + 1
            )));
        }
        let d = self.dim;
        if self.h_eff.dim() != (d, d) {
            return Err(VolterraError::ShapeMismatch("h_eff dimension".into()));
        }
        for (j, m) in self.kernel.iter().enumerate() {
            if m.dim() != (d, d) {
                return Err(VolterraError::ShapeMismatch(format!("kernel sample {j}")));
            }
        }
        if let Some(z0) = &self.z0 {
            if z0.dim() != (d, d) {
                return Err(VolterraError::ShapeMismatch("initial condition".into()));
            }
        }
        Ok(())
    }
}

/// Grid solution; `derivative` carries d/dt Z at each node for diagnostics.
#[derive(Debug, Clone)]
pub struct VolterraSolution {
    pub times: Vec<f64>,
    pub z: Vec<CMat>,
    pub derivative: Vec<CMat>,
}

impl VolterraSolution {
    /// Largest operator (spectral) norm over the trajectory.
    pub fn max_op_norm(&self) -> f64 {
        self.z
            .iter()
            .map(|m| {
                let gram = qops::dagger(m).dot(m);
                match qops::eigh_hermitian(&gram, 1e-8) {
                    Ok((vals, _)) => vals[vals.len() - 1].max(0.0).sqrt(),
                    Err(_) => f64::NAN,
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Solve the convolution problem with the trapezoid/trapezoid scheme.
pub fn solve(problem: &VolterraProblem) -> Result<VolterraSolution, VolterraError> {
    problem.validate()?;
    let d = problem.dim;
    let dt = problem.dt;
    let n = problem.n_steps;
    let eye = qops::identity(d);
    let z0 = problem.z0.clone().unwrap_or_else(|| eye.clone());
    let ih = problem.h_eff.mapv(|x| C64::i() * x);
    let m0 = &problem.kernel[0];

    // LHS of the corrector: (1 + dt/2 iH + dt^2/4 M_0) Z_{n+1} = RHS
    let lhs = &eye + &ih.mapv(|x| x * (0.5 * dt)) + m0.mapv(|x| x * (0.25 * dt * dt));
    let lhs_inv = lhs.inv().map_err(|e| VolterraError::Solve(e.to_string()))?;

    let mut z: Vec<CMat> = Vec::with_capacity(n + 1);
    let mut deriv: Vec<CMat> = Vec::with_capacity(n + 1);
    z.push(z0);

    // I_n: trapezoid lag integral at the current node; I_0 = 0.
    let mut lag = qops::zeros(d, d);
    for step in 0..n {
        let f_n = -ih.dot(&z[step]) - &lag;
        deriv.push(f_n.clone());

        // Known part of I_{n+1}: dt (1/2 M_{n+1} Z_0 + sum_{j=1}^{n} M_{n+1-j} Z_j)
        let mut j_next = problem.kernel[step + 1].dot(&z[0]).mapv(|x| x * 0.5);
        for j in 1..=step {
            j_next = j_next + problem.kernel[step + 1 - j].dot(&z[j]);
        }
        j_next.mapv_inplace(|x| x * dt);

        let rhs = &z[step] + &f_n.mapv(|x| x * (0.5 * dt)) - &j_next.mapv(|x| x * (0.5 * dt));
        let z_next = lhs_inv.dot(&rhs);
        if z_next.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(VolterraError::NonFinite { step: step + 1, time: (step + 1) as f64 * dt });
        }
        lag = j_next + m0.dot(&z_next).mapv(|x| x * (0.5 * dt));
        z.push(z_next);
    }
    let f_last = -ih.dot(&z[n]) - &lag;
    deriv.push(f_last);

    let times = (0..=n).map(|i| i as f64 * dt).collect();
    Ok(VolterraSolution { times, z, derivative: deriv })
}

/// Scalar fast path of [`solve`]; identical scheme on complex numbers.
pub fn solve_scalar(
    kernel: &[C64],
    h_eff: C64,
    dt: f64,
    n_steps: usize,
) -> Result<(Vec<f64>, Vec<C64>, Vec<C64>), VolterraError> {
    if !(dt > 0.0) {
        return Err(VolterraError::BadGrid(format!("dt must be positive, got {dt}")));
    }
    if n_steps > MAX_STEPS {
        return Err(VolterraError::StepOverflow(n_steps));
    }
    if kernel.len() < n_steps + 1 {
        return Err(VolterraError::ShapeMismatch(format!(
            "kernel has {} samples, need {}",
            kernel.len(),
            n_steps + 1
        )));
    }
    let ih = C64::i() * h_eff;
    let m0 = kernel[0];
    let lhs = C64::new(1.0, 0.0) + 0.5 * dt * ih + 0.25 * dt * dt * m0;
    let lhs_inv = 1.0 / lhs;

    let mut z = Vec::with_capacity(n_steps + 1);
    let mut deriv = Vec::with_capacity(n_steps + 1);
    z.push(C64::new(1.0, 0.0));
    let mut lag = C64::new(0.0, 0.0);
    for step in 0..n_steps {
        let f_n = -ih * z[step] - lag;
        deriv.push(f_n);
        let mut j_next = 0.5 * kernel[step + 1] * z[0];
        for j in 1..=step {
            j_next += kernel[step + 1 - j] * z[j];
        }
        j_next *= dt;
        let z_next = lhs_inv * (z[step] + 0.5 * dt * f_n - 0.5 * dt * j_next);
        if !z_next.re.is_finite() || !z_next.im.is_finite() {
            return Err(VolterraError::NonFinite { step: step + 1, time: (step + 1) as f64 * dt });
        }
        lag = j_next + 0.5 * dt * m0 * z_next;
        z.push(z_next);
    }
    deriv.push(-ih * z[n_steps] - lag);
    let times = (0..=n_steps).map(|i| i as f64 * dt).collect();
    Ok((times, z, deriv))
}

/// Two-argument kernel M(t, s) on the triangular grid s <= t plus a
/// time-dependent drive; reduces exactly to [`solve`] for M(t,s) = M(t-s)
/// and constant drive. Kernel values are requested on demand, so the kernel
/// closure is evaluated O(N^2) times.
pub fn solve_timedep(
    dim: usize,
    drive: impl Fn(f64) -> CMat,
    kernel: impl Fn(f64, f64) -> CMat,
    dt: f64,
    n_steps: usize,
) -> Result<VolterraSolution, VolterraError> {
    if !(dt > 0.0) {
        return Err(VolterraError::BadGrid(format!("dt must be positive, got {dt}")));
    }
    if n_steps > MAX_STEPS {
        return Err(VolterraError::StepOverflow(n_steps));
    }
    let eye = qops::identity(dim);
    let mut z: Vec<CMat> = vec![eye.clone()];
    let mut deriv: Vec<CMat> = Vec::with_capacity(n_steps + 1);
    let t_of = |i: usize| i as f64 * dt;

    let mut lag = qops::zeros(dim, dim);
    for step in 0..n_steps {
        let t_n = t_of(step);
        let t_next = t_of(step + 1);
        let ih_n = drive(t_n).mapv(|x| C64::i() * x);
        let f_n = -ih_n.dot(&z[step]) - &lag;
        deriv.push(f_n.clone());

        let mut j_next = kernel(t_next, 0.0).dot(&z[0]).mapv(|x| x * 0.5);
        for j in 1..=step {
            j_next = j_next + kernel(t_next, t_of(j)).dot(&z[j]);
        }
        j_next.mapv_inplace(|x| x * dt);

        let ih_next = drive(t_next).mapv(|x| C64::i() * x);
        let m_diag = kernel(t_next, t_next);
        let lhs = &eye + &ih_next.mapv(|x| x * (0.5 * dt)) + m_diag.mapv(|x| x * (0.25 * dt * dt));
        let lhs_inv = lhs.inv().map_err(|e| VolterraError::Solve(e.to_string()))?;

        let rhs = &z[step] + &f_n.mapv(|x| x * (0.5 * dt)) - &j_next.mapv(|x| x * (0.5 * dt));
        let z_next = lhs_inv.dot(&rhs);
        if z_next.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(VolterraError::NonFinite { step: step + 1, time: t_next });
        }
        lag = j_next + m_diag.dot(&z_next).mapv(|x| x * (0.5 * dt));
        z.push(z_next);
    }
    let t_n = t_of(n_steps);
    let ih_n = drive(t_n).mapv(|x| C64::i() * x);
    deriv.push(-ih_n.dot(&z[n_steps]) - &lag);

    let times = (0..=n_steps).map(t_of).collect();
    Ok(VolterraSolution { times, z, derivative: deriv })
}

/// Result of a grid-refinement study.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    /// log2(e_i / e_{i+1}) between successive halvings.
    pub orders: Vec<f64>,
    pub estimate: f64,
    pub monotone: bool,
    /// Errors at the roundoff floor; the order estimate is meaningless.
    pub exact: bool,
}

/// Richardson order estimate over halving steps. Errors are measured against
/// `reference` when given, otherwise against the finest grid (self-convergence,
/// in which case the finest dt contributes no error entry).
pub fn convergence_order(
    build: impl Fn(f64, usize) -> Result<VolterraProblem, VolterraError>,
    dts: &[f64],
    t_end: f64,
    reference: Option<&dyn Fn(f64) -> CMat>,
) -> Result<ConvergenceReport, VolterraError> {
    if dts.len() < 3 {
        return Err(VolterraError::BadStudy("at least 3 dt values".into()));
    }
    for w in dts.windows(2) {
        if (w[1] / w[0] - 0.5).abs() > 1e-12 {
            return Err(VolterraError::BadStudy(format!(
                "each dt must halve the previous: {} then {}",
                w[0], w[1]
            )));
        }
    }
    let mut solutions = Vec::new();
    let mut scale = 0.0f64;
    for &dt in dts {
        let n = (t_end / dt).round() as usize;
        let sol = solve(&build(dt, n)?)?;
        scale = scale.max(sol.z.iter().map(qops::max_abs).fold(0.0, f64::max));
        solutions.push(sol);
    }
    let mut errors = Vec::new();
    match reference {
        Some(f) => {
            for sol in &solutions {
                let e = sol
                    .times
                    .iter()
                    .zip(sol.z.iter())
                    .map(|(&t, z)| qops::max_abs_diff(z, &f(t)))
                    .fold(0.0, f64::max);
                errors.push(e);
            }
        }
        None => {
            let finest = &solutions[solutions.len() - 1];
            let fine_dt = dts[dts.len() - 1];
            for (sol, &dt) in solutions.iter().zip(dts.iter()).take(solutions.len() - 1) {
                let stride = (dt / fine_dt).round() as usize;
                let e = sol
                    .z
                    .iter()
                    .enumerate()
                    .map(|(i, z)| qops::max_abs_diff(z, &finest.z[i * stride]))
                    .fold(0.0, f64::max);
                errors.push(e);
            }
        }
    }
    let exact = errors.iter().all(|&e| e < 1e-13 * scale.max(1.0));
    let mut orders = Vec::new();
    let mut monotone = true;
    for w in errors.windows(2) {
        if w[1] >= w[0] {
            monotone = false;
        }
        orders.push((w[0] / w[1]).log2());
    }
    let estimate = if orders.is_empty() {
        f64::NAN
    } else {
        orders.iter().sum::<f64>() / orders.len() as f64
    };
    Ok(ConvergenceReport { dts: dts.to_vec(), errors, orders, estimate, monotone, exact })
}

/// Closed-form solution of the exponential-kernel scalar problem
/// m(tau) = c e^{-lambda tau}: z'' + lambda z' + c z = 0, z(0) = 1, z'(0) = 0.
pub fn exponential_kernel_reference(c: f64, lambda: f64, t: f64) -> C64 {
    let half = 0.5 * lambda;
    let disc = c - half * half;
    let z = if disc > 0.0 {
        let nu = disc.sqrt();
        (-half * t).exp() * ((nu * t).cos() + (half / nu) * (nu * t).sin())
    } else if disc < 0.0 {
        let mu = (-disc).sqrt();
        (-half * t).exp() * ((mu * t).cosh() + (half / mu) * (mu * t).sinh())
    } else {
        (-half * t).exp() * (1.0 + half * t)
    };
    C64::new(z, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::{identity, max_abs_diff, zeros};

    fn scalar_problem(c: f64, lambda: f64, dt: f64, n: usize) -> VolterraProblem {
        let kernel: Vec<CMat> = (0..=n)
            .map(|j| {
                let tau = j as f64 * dt;
                let mut m = zeros(1, 1);
                m[[0, 0]] = C64::new(c * (-lambda * tau).exp(), 0.0);
                m
            })
            .collect();
        VolterraProblem::new(zeros(1, 1), kernel, dt, n)
    }

    #[test]
    fn free_case_stays_identity() {
        let n = 50;
        let kernel = vec![zeros(2, 2); n + 1];
        let p = VolterraProblem::new(zeros(2, 2), kernel, 0.1, n);
        let sol = solve(&p).unwrap();
        for z in &sol.z {
            assert!(max_abs_diff(z, &identity(2)) < 1e-15);
        }
    }

    #[test]
    fn cosine_value_at_pi() {
        // m(tau) = 1 gives z(t) = cos t
        let dt = 1e-3;
        let n = (std::f64::consts::PI / dt).round() as usize;
        let dt = std::f64::consts::PI / n as f64;
        let (_, z, _) = solve_scalar(
            &vec![C64::new(1.0, 0.0); n + 1],
            C64::new(0.0, 0.0),
            dt,
            n,
        )
        .unwrap();
        assert!((z[n].re + 1.0).abs() < 1e-6, "z(pi) = {}", z[n]);
        assert!(z[n].im.abs() < 1e-12);
    }

    #[test]
    fn underdamped_closed_form_on_long_window() {
        let (c, lambda) = (1.0, 1.0);
        let dt = 1e-3;
        let n = 10_000;
        let kernel: Vec<C64> = (0..=n)
            .map(|j| C64::new(c * (-lambda * j as f64 * dt).exp(), 0.0))
            .collect();
        let (times, z, _) = solve_scalar(&kernel, C64::new(0.0, 0.0), dt, n).unwrap();
        let mut worst = 0.0f64;
        for (i, &t) in times.iter().enumerate() {
            let err = (z[i] - exponential_kernel_reference(c, lambda, t)).norm();
            worst = worst.max(err);
        }
        assert!(worst <= 1e-6, "max error {worst}");
    }

    #[test]
    fn matrix_and_scalar_paths_agree() {
        let (c, lambda, dt, n) = (0.8, 0.6, 1e-2, 500);
        let p = scalar_problem(c, lambda, dt, n);
        let sol = solve(&p).unwrap();
        let kernel: Vec<C64> = (0..=n)
            .map(|j| C64::new(c * (-lambda * j as f64 * dt).exp(), 0.0))
            .collect();
        let (_, z, _) = solve_scalar(&kernel, C64::new(0.0, 0.0), dt, n).unwrap();
        // the two paths differ only by ulp-level reciprocal rounding
        for i in 0..=n {
            assert!((sol.z[i][[0, 0]] - z[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn diagonal_kernel_decouples() {
        // 2x2 diagonal kernel == two independent scalar solves, to 1e-12
        let dt = 1e-2;
        let n = 400;
        let (c1, l1, c2, l2) = (1.0, 0.3, 0.4, 1.1);
        let kernel: Vec<CMat> = (0..=n)
            .map(|j| {
                let tau = j as f64 * dt;
                let mut m = zeros(2, 2);
                m[[0, 0]] = C64::new(c1 * (-l1 * tau).exp(), 0.0);
                m[[1, 1]] = C64::new(c2 * (-l2 * tau).exp(), 0.0);
                m
            })
            .collect();
        let sol = solve(&VolterraProblem::new(zeros(2, 2), kernel, dt, n)).unwrap();
        let k1: Vec<C64> = (0..=n).map(|j| C64::new(c1 * (-l1 * j as f64 * dt).exp(), 0.0)).collect();
        let k2: Vec<C64> = (0..=n).map(|j| C64::new(c2 * (-l2 * j as f64 * dt).exp(), 0.0)).collect();
        let (_, z1, _) = solve_scalar(&k1, C64::new(0.0, 0.0), dt, n).unwrap();
        let (_, z2, _) = solve_scalar(&k2, C64::new(0.0, 0.0), dt, n).unwrap();
        for i in 0..=n {
            assert!((sol.z[i][[0, 0]] - z1[i]).norm() < 1e-12);
            assert!((sol.z[i][[1, 1]] - z2[i]).norm() < 1e-12);
            assert!(sol.z[i][[0, 1]].norm() < 1e-15);
        }
    }

    #[test]
    fn initial_condition_is_right_linear() {
        let (c, lambda, dt, n) = (0.9, 0.5, 1e-2, 300);
        let kernel: Vec<CMat> = (0..=n)
            .map(|j| {
                let tau = j as f64 * dt;
                let mut m = zeros(2, 2);
                m[[0, 0]] = C64::new(c * (-lambda * tau).exp(), 0.0);
                m[[0, 1]] = C64::new(0.1 * (-tau).exp(), 0.05);
                m[[1, 0]] = C64::new(0.1 * (-tau).exp(), -0.05);
                m[[1, 1]] = C64::new(0.3 * (-2.0 * tau).exp(), 0.0);
                m
            })
            .collect();
        let p = VolterraProblem::new(zeros(2, 2), kernel, dt, n);
        let b = ndarray::array![
            [C64::new(0.3, 0.2), C64::new(-0.4, 0.1)],
            [C64::new(0.0, 0.7), C64::new(0.5, -0.3)]
        ];
        let base = solve(&p).unwrap();
        let mut p_b = p.clone();
        p_b.z0 = Some(b.clone());
        let shifted = solve(&p_b).unwrap();
        for i in 0..=n {
            assert!(max_abs_diff(&shifted.z[i], &base.z[i].dot(&b)) < 1e-12);
        }
    }

    #[test]
    fn timedep_reduces_to_convolution() {
        let (c, lambda, dt, n) = (0.7, 0.4, 1e-2, 300);
        let p = scalar_problem(c, lambda, dt, n);
        let conv = solve(&p).unwrap();
        let timedep = solve_timedep(
            1,
            |_| zeros(1, 1),
            |t, s| {
                let mut m = zeros(1, 1);
                m[[0, 0]] = C64::new(c * (-lambda * (t - s)).exp(), 0.0);
                m
            },
            dt,
            n,
        )
        .unwrap();
        for i in 0..=n {
            assert!(max_abs_diff(&conv.z[i], &timedep.z[i]) < 1e-12);
        }
    }

    #[test]
    fn timedep_pure_drive_is_unitary_rotation() {
        // trapezoid phase error (omega/2)^3 dt^2 t / 12 stays below 1e-8 here
        let omega = 0.5;
        let dt = 1e-3;
        let n = 2000;
        let h = ndarray::array![
            [C64::new(omega / 2.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(-omega / 2.0, 0.0)]
        ];
        let sol = solve_timedep(2, |_| h.clone(), |_, _| zeros(2, 2), dt, n).unwrap();
        let t_end = n as f64 * dt;
        let expect = crate::qops::matrix_exp(&h, t_end).unwrap();
        assert!(max_abs_diff(&sol.z[n], &expect) < 1e-8);
    }

    #[test]
    fn convergence_order_exponential_kernel() {
        let (c, lambda) = (1.0, 1.0);
        let reference = move |t: f64| {
            let mut m = zeros(1, 1);
            m[[0, 0]] = exponential_kernel_reference(c, lambda, t);
            m
        };
        let report = convergence_order(
            |dt, n| Ok(scalar_problem(c, lambda, dt, n)),
            &[4e-3, 2e-3, 1e-3],
            4.0,
            Some(&reference),
        )
        .unwrap();
        assert!(report.monotone);
        assert!(!report.exact);
        assert!(
            (report.estimate - 2.0).abs() <= 0.3,
            "order estimate {}",
            report.estimate
        );
    }

    #[test]
    fn convergence_order_flags_exact_case() {
        let report = convergence_order(
            |dt, n| Ok(VolterraProblem::new(zeros(1, 1), vec![zeros(1, 1); n + 1], dt, n)),
            &[4e-2, 2e-2, 1e-2],
            1.0,
            None,
        )
        .unwrap();
        assert!(report.exact);
    }

    #[test]
    fn contraction_for_positive_definite_kernel() {
        // resonant lorentzian kernel: m(tau) = (g l / 2) e^{-l tau}
        let (g, lam, dt) = (2.0, 0.5, 1e-3);
        let n = 8000;
        let kernel: Vec<C64> = (0..=n)
            .map(|j| C64::new(0.5 * g * lam * (-lam * j as f64 * dt).exp(), 0.0))
            .collect();
        let (_, z, _) = solve_scalar(&kernel, C64::new(0.0, 0.0), dt, n).unwrap();
        let bound = 1.0 + 10.0 * dt * dt;
        for v in &z {
            assert!(v.norm() <= bound, "|z| = {} exceeds {}", v.norm(), bound);
        }
    }

    #[test]
    fn nan_abort_reports_step() {
        let n = 10;
        let mut kernel = vec![zeros(1, 1); n + 1];
        kernel[1][[0, 0]] = C64::new(f64::NAN, 0.0);
        let p = VolterraProblem::new(zeros(1, 1), kernel, 0.1, n);
        match solve(&p) {
            Err(VolterraError::NonFinite { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }
}
