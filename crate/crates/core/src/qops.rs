//! Dense complex linear algebra over small Hilbert spaces.
//!
//! Everything is carried by [`CMat`] (row-major `Array2<Complex64>`); states
//! and amplitudes are thin validated wrappers. All operations are pure and
//! eigendecomposition-based — dimensions stay small enough that accuracy wins
//! over asymptotics.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
/// Dense complex matrix, the universal carrier for operators, amplitudes,
/// states and superoperator blocks.
pub type CMat = Array2<C64>;

/// Tolerance for structural invariants (Hermiticity, unit trace, positivity).
pub const STRUCT_TOL: f64 = 1e-10;
/// Tolerance for exact algebraic identities.
pub const ALGEBRA_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum QopsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |M - M^dag| = {defect:.3e} exceeds {tol:.1e}")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("matrix is not a density operator: {reason}")]
    NotDensity { reason: String },
    #[error("amplitude not normalized: (k,k) = {norm_sq:.12} differs from 1")]
    NotNormalized { norm_sq: f64 },
    #[error("eigendecomposition failed: {0}")]
    Linalg(String),
}

pub fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

pub fn cone() -> C64 {
    C64::new(1.0, 0.0)
}

pub fn identity(dim: usize) -> CMat {
    Array2::eye(dim).mapv(|x: f64| C64::new(x, 0.0))
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    Array2::from_elem((rows, cols), czero())
}

/// Largest entry magnitude; 0 for empty matrices.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// max |a - b| entrywise.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        worst = worst.max((x - y).norm());
    }
    worst
}

pub fn frobenius_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dagger(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

pub fn trace(m: &CMat) -> C64 {
    m.diag().sum()
}

/// Hilbert-Schmidt inner product (a, b) = tr(a† b).
pub fn hs_dot(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs_diff(m, &dagger(m))
}

fn ensure_square(m: &CMat) -> Result<usize, QopsError> {
    let (r, c) = m.dim();
    if r != c {
        return Err(QopsError::NotSquare { rows: r, cols: c });
    }
    Ok(r)
}

fn ensure_hermitian(m: &CMat, tol: f64) -> Result<(), QopsError> {
    let scale = max_abs(m).max(1.0);
    let defect = hermiticity_defect(m);
    if defect > tol * scale {
        return Err(QopsError::NotHermitian { defect, tol });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending and
/// eigenvectors as columns, so that `m = vecs diag(vals) vecs†`.
pub fn eigh_hermitian(m: &CMat, tol: f64) -> Result<(Array1<f64>, CMat), QopsError> {
    let n = ensure_square(m)?;
    ensure_hermitian(m, tol)?;
    // Symmetrize first so LAPACK sees an exactly Hermitian input.
    let sym = (m + &dagger(m)).mapv(|z| 0.5 * z);
    let (vals, vecs) = sym
        .eigh(UPLO::Lower)
        .map_err(|e| QopsError::Linalg(e.to_string()))?;
    // The backend hands row-major data to LAPACK as if column-major, so it
    // diagonalizes the conjugate matrix and the returned columns come back
    // conjugated. Pick whichever orientation satisfies H v = lambda v.
    if n == 0 {
        return Ok((vals, vecs));
    }
    let conj_vecs = vecs.mapv(|z| z.conj());
    let scale = max_abs(&sym).max(1.0);
    let resid = |v: &CMat| -> f64 {
        let col = v.slice(s![.., 0..1]).to_owned();
        let hv = sym.dot(&col);
        let lv = col.mapv(|z| z * vals[0]);
        max_abs_diff(&hv, &lv)
    };
    let (r_conj, r_raw) = (resid(&conj_vecs), resid(&vecs));
    debug_assert!(r_conj.min(r_raw) <= 1e-8 * scale, "eigh orientation check failed");
    let chosen = if r_conj <= r_raw { conj_vecs } else { vecs };
    Ok((vals, chosen))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eig_hermitian(m: &CMat) -> Result<f64, QopsError> {
    let (vals, _) = eigh_hermitian(m, STRUCT_TOL)?;
    Ok(vals[0])
}

/// Unitary propagator `exp(-i h t)` of a Hermitian generator, via
/// eigendecomposition. Rejects non-Hermitian input.
pub fn matrix_exp(h: &CMat, t: f64) -> Result<CMat, QopsError> {
    let (vals, vecs) = eigh_hermitian(h, STRUCT_TOL)?;
    let phases: Array1<C64> = vals.mapv(|w| (-C64::i() * w * t).exp());
    Ok(apply_spectral(&vecs, &phases))
}

/// Assemble V diag(f) V† from an eigenbasis and spectral values.
pub fn apply_spectral(vecs: &CMat, fvals: &Array1<C64>) -> CMat {
    let scaled = vecs * &fvals.view().insert_axis(ndarray::Axis(0));
    scaled.dot(&dagger(vecs))
}

/// Principal square root of a positive semidefinite Hermitian matrix.
/// Eigenvalues below the roundoff floor are clamped to zero.
pub fn sqrt_psd(m: &CMat) -> Result<CMat, QopsError> {
    let (vals, vecs) = eigh_hermitian(m, STRUCT_TOL)?;
    let scale = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    for &v in vals.iter() {
        if v < -STRUCT_TOL * scale.max(1.0) {
            return Err(QopsError::NotDensity {
                reason: format!("negative eigenvalue {v:.3e} in square root"),
            });
        }
    }
    let roots: Array1<C64> = vals.mapv(|v| C64::new(v.max(0.0).sqrt(), 0.0));
    Ok(apply_spectral(&vecs, &roots))
}

/// Kronecker product; dimensions multiply.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    ndarray::linalg::kron(a, b)
}

/// Partial trace over the environment (second) factor of a matrix on
/// `H_S ⊗ H_E`; preserves the total trace.
pub fn partial_trace_env(m: &CMat, dim_s: usize, dim_e: usize) -> Result<CMat, QopsError> {
    let n = ensure_square(m)?;
    if n != dim_s * dim_e {
        return Err(QopsError::DimensionMismatch {
            expected: dim_s * dim_e,
            got: n,
        });
    }
    let mut out = zeros(dim_s, dim_s);
    for i in 0..dim_s {
        for j in 0..dim_s {
            let block = m.slice(s![i * dim_e..(i + 1) * dim_e, j * dim_e..(j + 1) * dim_e]);
            out[[i, j]] = block.diag().sum();
        }
    }
    Ok(out)
}

/// A unit-trace positive matrix.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    matrix: CMat,
}

impl DensityOperator {
    pub fn new(matrix: CMat) -> Result<Self, QopsError> {
        let dim = ensure_square(&matrix)?;
        let _ = dim;
        ensure_hermitian(&matrix, STRUCT_TOL)?;
        let tr = trace(&matrix);
        if (tr - cone()).norm() > STRUCT_TOL {
            return Err(QopsError::NotDensity {
                reason: format!("trace {tr} differs from 1"),
            });
        }
        let min = min_eig_hermitian(&matrix)?;
        if min < -STRUCT_TOL {
            return Err(QopsError::NotDensity {
                reason: format!("minimum eigenvalue {min:.3e} below -{STRUCT_TOL:.0e}"),
            });
        }
        Ok(Self { matrix })
    }

    /// Pure state |psi><psi| from a (not necessarily normalized) vector.
    pub fn pure(psi: &[C64]) -> Result<Self, QopsError> {
        let norm_sq: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm_sq <= 0.0 {
            return Err(QopsError::NotDensity {
                reason: "zero state vector".into(),
            });
        }
        let d = psi.len();
        let mut m = zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[[i, j]] = psi[i] * psi[j].conj() / norm_sq;
            }
        }
        Self::new(m)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let m = identity(dim).mapv(|z| z / dim as f64);
        Self { matrix: m }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Principal Hermitian square root, the canonical amplitude of this state.
    pub fn amplitude(&self) -> Result<Amplitude, QopsError> {
        Amplitude::new(sqrt_psd(&self.matrix)?)
    }
}

/// A Hilbert-Schmidt operator κ with ρ = κκ†; state amplitudes have unit
/// Hilbert-Schmidt norm.
#[derive(Debug, Clone)]
pub struct Amplitude {
    matrix: CMat,
}

impl Amplitude {
    pub fn new(matrix: CMat) -> Result<Self, QopsError> {
        ensure_square(&matrix)?;
        let norm_sq = hs_dot(&matrix, &matrix).re;
        if (norm_sq - 1.0).abs() > STRUCT_TOL {
            return Err(QopsError::NotNormalized { norm_sq });
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn density(&self) -> CMat {
        self.matrix.dot(&dagger(&self.matrix))
    }

    /// Gauge transformation κ → κU; leaves κκ† invariant for unitary U.
    pub fn gauge(&self, u: &CMat) -> Result<Self, QopsError> {
        if u.nrows() != self.dim() {
            return Err(QopsError::DimensionMismatch {
                expected: self.dim(),
                got: u.nrows(),
            });
        }
        Amplitude::new(self.matrix.dot(u))
    }

    /// Expectation value (κ, aκ) = tr(a κκ†).
    pub fn expect(&self, a: &CMat) -> C64 {
        hs_dot(&self.matrix, &a.dot(&self.matrix))
    }
}

/// Trace distance ½‖ρ₁ − ρ₂‖₁ ∈ [0, 1].
pub fn trace_distance(r1: &DensityOperator, r2: &DensityOperator) -> Result<f64, QopsError> {
    trace_distance_mats(r1.matrix(), r2.matrix())
}

/// Trace distance of two Hermitian unit-trace matrices given as raw arrays.
pub fn trace_distance_mats(a: &CMat, b: &CMat) -> Result<f64, QopsError> {
    if a.nrows() != b.nrows() {
        return Err(QopsError::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let diff = a - b;
    let (vals, _) = eigh_hermitian(&diff, STRUCT_TOL)?;
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

/// Choi matrix C = Σ_ij |i><j| ⊗ Λ(|i><j|) of a linear map on d×d matrices.
/// The map is completely positive iff C ⪰ 0.
#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    matrix: CMat,
    dim: usize,
}

impl ChoiMatrix {
    pub fn from_parts(matrix: CMat, dim: usize) -> Result<Self, QopsError> {
        let n = ensure_square(&matrix)?;
        if n != dim * dim {
            return Err(QopsError::DimensionMismatch {
                expected: dim * dim,
                got: n,
            });
        }
        Ok(Self { matrix, dim })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min_eig(&self) -> Result<f64, QopsError> {
        min_eig_hermitian(&self.matrix)
    }

    /// max |Tr_out C − I|; vanishes iff the source map is trace preserving.
    pub fn trace_defect(&self) -> Result<f64, QopsError> {
        let reduced = partial_trace_env(&self.matrix, self.dim, self.dim)?;
        Ok(max_abs_diff(&reduced, &identity(self.dim)))
    }
}

/// Build the Choi matrix of `apply`, which must act linearly on matrix units.
pub fn choi_of_map<F>(apply: F, dim: usize) -> ChoiMatrix
where
    F: Fn(&CMat) -> CMat,
{
    let mut c = zeros(dim * dim, dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut unit = zeros(dim, dim);
            unit[[i, j]] = cone();
            let img = apply(&unit);
            for k in 0..dim {
                for l in 0..dim {
                    c[[i * dim + k, j * dim + l]] = img[[k, l]];
                }
            }
        }
    }
    ChoiMatrix { matrix: c, dim }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub(crate) fn sigma_x() -> CMat {
        ndarray::array![[czero(), cone()], [cone(), czero()]]
    }

    pub(crate) fn sigma_z() -> CMat {
        ndarray::array![[cone(), czero()], [czero(), -cone()]]
    }

    fn sigma_plus() -> CMat {
        ndarray::array![[czero(), cone()], [czero(), czero()]]
    }

    pub(crate) fn random_cmat(rng: &mut StdRng, n: usize) -> CMat {
        let mut m = zeros(n, n);
        for v in m.iter_mut() {
            *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        m
    }

    pub(crate) fn random_hermitian(rng: &mut StdRng, n: usize) -> CMat {
        let m = random_cmat(rng, n);
        (&m + &dagger(&m)).mapv(|z| 0.5 * z)
    }

    pub(crate) fn random_unitary(rng: &mut StdRng, n: usize) -> CMat {
        matrix_exp(&random_hermitian(rng, n), 1.0).unwrap()
    }

    pub(crate) fn random_density(rng: &mut StdRng, n: usize) -> DensityOperator {
        let a = random_cmat(rng, n);
        let pos = a.dot(&dagger(&a)) + identity(n).mapv(|z| z * 1e-3);
        let tr = trace(&pos).re;
        DensityOperator::new(pos.mapv(|z| z / tr)).unwrap()
    }

    #[test]
    fn kron_identity_case() {
        let i2 = identity(2);
        assert_eq!(max_abs_diff(&kron(&i2, &i2), &identity(4)), 0.0);
    }

    #[test]
    fn kron_zero_annihilates() {
        let z = zeros(2, 2);
        assert_eq!(max_abs(&kron(&sigma_plus(), &z)), 0.0);
    }

    #[test]
    fn kron_basis_action() {
        // (sigma_x ⊗ sigma_x) |00> = |11>
        let xx = kron(&sigma_x(), &sigma_x());
        let e00 = ndarray::array![[cone()], [czero()], [czero()], [czero()]];
        let out = xx.dot(&e00);
        let e11 = ndarray::array![[czero()], [czero()], [czero()], [cone()]];
        assert!(max_abs_diff(&out, &e11) < 1e-15);
    }

    #[test]
    fn partial_trace_product_state() {
        let mut rng = StdRng::seed_from_u64(7);
        let rho = random_density(&mut rng, 2);
        let omega = random_density(&mut rng, 3);
        let joint = kron(rho.matrix(), omega.matrix());
        let reduced = partial_trace_env(&joint, 2, 3).unwrap();
        assert!(max_abs_diff(&reduced, rho.matrix()) < 1e-12);
    }

    #[test]
    fn partial_trace_maximally_mixed() {
        let m = identity(4).mapv(|z| z / 4.0);
        let r = partial_trace_env(&m, 2, 2).unwrap();
        assert!(max_abs_diff(&r, &identity(2).mapv(|z| z / 2.0)) < 1e-15);
    }

    #[test]
    fn partial_trace_bell_state() {
        let inv = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let bell = DensityOperator::pure(&[inv, czero(), czero(), inv]).unwrap();
        let r = partial_trace_env(bell.matrix(), 2, 2).unwrap();
        assert!(max_abs_diff(&r, &identity(2).mapv(|z| z / 2.0)) < 1e-12);
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let m = identity(6);
        assert!(partial_trace_env(&m, 2, 2).is_err());
    }

    #[test]
    fn matrix_exp_zero_time() {
        let mut rng = StdRng::seed_from_u64(3);
        let h = random_hermitian(&mut rng, 4);
        let u = matrix_exp(&h, 0.0).unwrap();
        assert!(max_abs_diff(&u, &identity(4)) < 1e-12);
    }

    #[test]
    fn matrix_exp_diagonal_generator() {
        let omega0 = 1.7;
        let t = 0.9;
        let h = sigma_z().mapv(|z| z * (omega0 / 2.0));
        let u = matrix_exp(&h, t).unwrap();
        let expect = ndarray::array![
            [(-C64::i() * omega0 * t / 2.0).exp(), czero()],
            [czero(), (C64::i() * omega0 * t / 2.0).exp()]
        ];
        assert!(max_abs_diff(&u, &expect) < 1e-14);
    }

    #[test]
    fn matrix_exp_group_law_and_unitarity() {
        let mut rng = StdRng::seed_from_u64(11);
        let h = random_hermitian(&mut rng, 6);
        let (t, s) = (0.37, 1.21);
        let ut = matrix_exp(&h, t).unwrap();
        let us = matrix_exp(&h, s).unwrap();
        let uts = matrix_exp(&h, t + s).unwrap();
        assert!(max_abs_diff(&ut.dot(&us), &uts) < 1e-10);
        let gram = ut.dot(&dagger(&ut));
        assert!(max_abs_diff(&gram, &identity(6)) < 1e-10);
    }

    #[test]
    fn matrix_exp_rejects_non_hermitian() {
        let m = ndarray::array![[czero(), cone()], [czero(), czero()]];
        assert!(matrix_exp(&m, 1.0).is_err());
    }

    #[test]
    fn trace_distance_cases() {
        let e = DensityOperator::pure(&[cone(), czero()]).unwrap();
        let g = DensityOperator::pure(&[czero(), cone()]).unwrap();
        let mixed = DensityOperator::maximally_mixed(2);
        assert!(trace_distance(&e, &e).unwrap().abs() < 1e-15);
        assert!((trace_distance(&e, &g).unwrap() - 1.0).abs() < 1e-12);
        assert!((trace_distance(&mixed, &e).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn min_eig_cases() {
        assert!((min_eig_hermitian(&identity(3)).unwrap() - 1.0).abs() < 1e-12);
        assert!((min_eig_hermitian(&sigma_z()).unwrap() + 1.0).abs() < 1e-12);
        let d = ndarray::array![
            [C64::new(0.3, 0.0), czero()],
            [czero(), C64::new(0.7, 0.0)]
        ];
        assert!((min_eig_hermitian(&d).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn choi_identity_channel() {
        let c = choi_of_map(|m| m.clone(), 2);
        assert!(c.min_eig().unwrap() > -1e-12);
        assert!(c.trace_defect().unwrap() < 1e-12);
        // rank 1 with eigenvalue 2 = dim
        let (vals, _) = eigh_hermitian(c.matrix(), STRUCT_TOL).unwrap();
        assert!((vals[3] - 2.0).abs() < 1e-12);
        assert!(vals[2].abs() < 1e-12);
    }

    #[test]
    fn choi_transpose_map_not_cp() {
        let c = choi_of_map(|m| m.t().to_owned(), 2);
        // Choi of transpose is SWAP: spectrum {1, 1, 1, -1}.
        let (vals, _) = eigh_hermitian(c.matrix(), STRUCT_TOL).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[3] - 1.0).abs() < 1e-12);
        assert!(c.trace_defect().unwrap() < 1e-12);
    }

    #[test]
    fn choi_unitary_conjugation() {
        let mut rng = StdRng::seed_from_u64(5);
        let u = random_unitary(&mut rng, 2);
        let ud = dagger(&u);
        let c = choi_of_map(|m| u.dot(m).dot(&ud), 2);
        let (vals, _) = eigh_hermitian(c.matrix(), STRUCT_TOL).unwrap();
        assert!(vals[0] > -1e-12);
        assert!(vals[2].abs() < 1e-12); // rank 1
        assert!(c.trace_defect().unwrap() < 1e-10);
    }

    #[test]
    fn amplitude_gauge_invariance() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..5 {
            let rho = random_density(&mut rng, 3);
            let kappa = rho.amplitude().unwrap();
            let u = random_unitary(&mut rng, 3);
            let gauged = kappa.gauge(&u).unwrap();
            assert!(max_abs_diff(&gauged.density(), rho.matrix()) < 1e-12);
        }
    }

    #[test]
    fn amplitude_expectation_matches_trace() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..5 {
            let rho = random_density(&mut rng, 3);
            let a = random_hermitian(&mut rng, 3);
            let kappa = rho.amplitude().unwrap();
            let lhs = kappa.expect(&a);
            let rhs = trace(&a.dot(rho.matrix()));
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let mut rng = StdRng::seed_from_u64(29);
        let rho = random_density(&mut rng, 4);
        let root = sqrt_psd(rho.matrix()).unwrap();
        assert!(max_abs_diff(&root.dot(&root), rho.matrix()) < 1e-12);
        assert!(hermiticity_defect(&root) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn prop_partial_trace_of_kron(seed in 0u64..1000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let rho = random_density(&mut rng, 2);
            let omega = random_hermitian(&mut rng, 3);
            let joint = kron(rho.matrix(), &omega);
            let reduced = partial_trace_env(&joint, 2, 3).unwrap();
            let scaled = rho.matrix().mapv(|z| z * trace(&omega));
            prop_assert!(max_abs_diff(&reduced, &scaled) < 1e-12);
        }

        #[test]
        fn prop_gauge_leaves_rho_invariant(seed in 0u64..1000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let rho = random_density(&mut rng, 2);
            let kappa = rho.amplitude().unwrap();
            let u = random_unitary(&mut rng, 2);
            let gauged = kappa.gauge(&u).unwrap();
            prop_assert!(max_abs_diff(&gauged.density(), rho.matrix()) < 1e-12);
        }

        #[test]
        fn prop_trace_is_preserved_by_partial_trace(seed in 0u64..1000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let m = random_hermitian(&mut rng, 6);
            let r = partial_trace_env(&m, 2, 3).unwrap();
            prop_assert!((trace(&r) - trace(&m)).norm() < 1e-12);
        }
    }
}
