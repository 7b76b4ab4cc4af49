//! Kronecker-structured linear algebra for the test machinery.
//!
//! Every distributional quantity in this crate reduces to spectral data of
//! `T V_N T`, where `T = T_W ⊗ T_S` is the hypothesis projection and
//! `V_N = ⊕_i (N/n_i) Σ` the block covariance of the scaled group-mean
//! vector. Because both factors are Kronecker-compatible,
//!
//! ```text
//! T V_N T = (T_W D T_W) ⊗ (T_S Σ T_S),      D = diag(N/n_1, …, N/n_a),
//! ```
//!
//! nothing here ever materializes an `ad × ad` matrix: trace powers come
//! from the `d × d` sub-plot factor alone, group imbalance enters through
//! the scalar factor [`eta`], and the full spectrum is the set of pairwise
//! products of the two factor spectra. The third-moment-matching degrees of
//! freedom
//!
//! ```text
//! f_P = tr³((T V_N)²) / tr²((T V_N)³) = [t2³ / t3²] · η_{N,a}
//! ```
//!
//! and its reciprocal `τ_P = 1/f_P` quantify where between the normal
//! (`f_P → ∞`) and the single-chi-square (`f_P = 1`) regimes a given design
//! sits.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues this far below the largest (relatively) are treated as zero.
const SPECTRUM_TOL: f64 = 1e-12;

/// Centering matrix `P_k = I_k − (1/k) J_k`: the orthogonal projection onto
/// the complement of the constant vector. `P_1` is the 1×1 zero matrix.
pub fn centering_matrix(k: usize) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(Error::EmptyDimension { context: "projector size k" });
    }
    let off = -1.0 / k as f64;
    Ok(DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 + off } else { off }))
}

/// Averaging matrix `(1/k) J_k`: the rank-one projection onto the constant
/// vector.
pub fn averaging_matrix(k: usize) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(Error::EmptyDimension { context: "projector size k" });
    }
    Ok(DMatrix::from_element(k, k, 1.0 / k as f64))
}

/// A covariance matrix model: parametric families materialize on demand,
/// explicit matrices are eigen-checked for positive definiteness when the
/// model is built.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceModel {
    /// `Σ = I_d`.
    Identity { d: usize },
    /// First-order autoregressive structure `Σ_{ij} = ρ^{|i−j|}`,
    /// positive definite for every `|ρ| < 1`.
    Autoregressive { d: usize, rho: f64 },
    /// Compound symmetry `Σ = (1−ρ) I_d + ρ J_d`, positive definite for
    /// `−1/(d−1) < ρ < 1`.
    CompoundSymmetry { d: usize, rho: f64 },
    /// An arbitrary symmetric positive-definite matrix.
    Explicit { matrix: DMatrix<f64> },
}

impl CovarianceModel {
    /// AR(1) model with correlation `rho`.
    pub fn autoregressive(d: usize, rho: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::EmptyDimension { context: "dimension d" });
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::InvalidCorrelation { rho, d });
        }
        Ok(CovarianceModel::Autoregressive { d, rho })
    }

    /// Compound-symmetry (equicorrelation) model.
    pub fn compound_symmetry(d: usize, rho: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::EmptyDimension { context: "dimension d" });
        }
        // Eigenvalues are 1 + (d−1)ρ (once) and 1 − ρ (d−1 times).
        let lower = if d > 1 { -1.0 / (d as f64 - 1.0) } else { -1.0 };
        if !(rho < 1.0 && rho > lower) {
            return Err(Error::InvalidCorrelation { rho, d });
        }
        Ok(CovarianceModel::CompoundSymmetry { d, rho })
    }

    /// Identity covariance.
    pub fn identity(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::EmptyDimension { context: "dimension d" });
        }
        Ok(CovarianceModel::Identity { d })
    }

    /// Wraps an explicit matrix, verifying symmetry and positive
    /// definiteness (smallest eigenvalue above `1e-10 ·` largest).
    pub fn explicit(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(Error::EmptyDimension { context: "dimension d" });
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                context: "covariance matrix",
                expected: (matrix.nrows(), matrix.nrows()),
                found: (matrix.nrows(), matrix.ncols()),
            });
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-10 * matrix.amax().max(1.0) {
            return Err(Error::NotAProjection { what: "covariance (symmetry)", deviation: asym });
        }
        let eig = matrix.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.max();
        let min_eig = eig.eigenvalues.min();
        if !(min_eig > 1e-10 * max_eig) || !(max_eig > 0.0) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min_eig,
                max_eigenvalue: max_eig,
            });
        }
        Ok(CovarianceModel::Explicit { matrix })
    }

    /// Dimension `d`.
    pub fn d(&self) -> usize {
        match self {
            CovarianceModel::Identity { d }
            | CovarianceModel::Autoregressive { d, .. }
            | CovarianceModel::CompoundSymmetry { d, .. } => *d,
            CovarianceModel::Explicit { matrix } => matrix.nrows(),
        }
    }

    /// Materializes the `d × d` covariance matrix.
    pub fn materialize(&self) -> DMatrix<f64> {
        match self {
            CovarianceModel::Identity { d } => DMatrix::identity(*d, *d),
            CovarianceModel::Autoregressive { d, rho } => DMatrix::from_fn(*d, *d, |i, j| {
                libm::pow(*rho, (i as f64 - j as f64).abs())
            }),
            CovarianceModel::CompoundSymmetry { d, rho } => {
                DMatrix::from_fn(*d, *d, |i, j| if i == j { 1.0 } else { *rho })
            }
            CovarianceModel::Explicit { matrix } => matrix.clone(),
        }
    }
}

/// The first three trace powers of `T_S Σ`: the only covariance functionals
/// the test statistic and its calibration ever need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSet {
    /// `tr(T_S Σ)`.
    pub t1: f64,
    /// `tr((T_S Σ)²)`.
    pub t2: f64,
    /// `tr((T_S Σ)³)`.
    pub t3: f64,
}

/// Computes `tr((T_S Σ)^k)` for `k = 1, 2, 3` exactly.
///
/// One `d × d` matrix product forms `M = T_S Σ`; the three traces then come
/// from `O(d²)` contractions (`tr(M²) = Σ_{ij} M_{ij} M_{ji}`, and likewise
/// `tr(M³)` from `M²` against `M`), so the whole call is a single cubic
/// pass even at `d` in the hundreds.
pub fn trace_powers(t_s: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<TraceSet> {
    let d = t_s.nrows();
    if t_s.ncols() != d || sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "trace_powers factors",
            expected: (d, d),
            found: (sigma.nrows(), sigma.ncols()),
        });
    }
    let m = t_s * sigma;
    let t1 = m.trace();
    let mut t2 = 0.0;
    for i in 0..d {
        for j in 0..d {
            t2 += m[(i, j)] * m[(j, i)];
        }
    }
    let m2 = &m * &m;
    let mut t3 = 0.0;
    for i in 0..d {
        for j in 0..d {
            t3 += m2[(i, j)] * m[(j, i)];
        }
    }
    Ok(TraceSet { t1, t2, t3 })
}

/// The whole-plot imbalance factor
/// `η_{N,a} = tr³((D T_W)²) / tr²((D T_W)³)` with `D = diag(N/n_i)`.
///
/// For balanced designs this is 1 for rank-one `T_W` and `a − 1` for the
/// centering projector; group-size imbalance moves it off those values and
/// is exactly the group-side contribution to the degrees of freedom `f_P`.
pub fn eta(t_w: &DMatrix<f64>, n: &[usize]) -> Result<f64> {
    let a = n.len();
    if t_w.nrows() != a || t_w.ncols() != a {
        return Err(Error::DimensionMismatch {
            context: "whole-plot factor vs group sizes",
            expected: (a, a),
            found: (t_w.nrows(), t_w.ncols()),
        });
    }
    if n.iter().any(|&ni| ni == 0) {
        return Err(Error::EmptyDimension { context: "group size n_i" });
    }
    let total: usize = n.iter().sum();
    // M = D T_W, i.e. row i of T_W scaled by N/n_i.
    let mut m = t_w.clone();
    for (i, &ni) in n.iter().enumerate() {
        let w = total as f64 / ni as f64;
        for j in 0..a {
            m[(i, j)] *= w;
        }
    }
    let mut tr2 = 0.0;
    for i in 0..a {
        for j in 0..a {
            tr2 += m[(i, j)] * m[(j, i)];
        }
    }
    let m2 = &m * &m;
    let mut tr3 = 0.0;
    for i in 0..a {
        for j in 0..a {
            tr3 += m2[(i, j)] * m[(j, i)];
        }
    }
    if tr3 == 0.0 || !tr3.is_finite() {
        return Err(Error::DegenerateWholePlot);
    }
    Ok(tr2 * tr2 * tr2 / (tr3 * tr3))
}

/// Normalized spectrum of `T V_N T`: eigenvalues `λ_s` in decreasing order
/// together with `β_s = λ_s / √(Σ λ_ℓ²)`.
///
/// `β₁` is the quantity that decides the limit law of the standardized
/// statistic: near 0 the limit is normal, near 1 it is a single standardized
/// chi-square, in between a weighted mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSpectrum {
    lambdas: Vec<f64>,
    betas: Vec<f64>,
}

impl BetaSpectrum {
    /// Eigenvalues of `T V_N T`, sorted decreasing.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Normalized eigenvalues `β_s`, sorted decreasing, `Σ β_s² = 1`.
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Largest normalized eigenvalue `β₁`.
    pub fn beta1(&self) -> f64 {
        self.betas.first().copied().unwrap_or(0.0)
    }
}

/// Eigenvalues of a symmetric PSD matrix with small negatives clamped to 0.
fn psd_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let eig = m.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.amax();
    let tol = max_abs * SPECTRUM_TOL;
    eig.eigenvalues
        .iter()
        .map(|&l| if l > tol { l } else { 0.0 })
        .collect()
}

/// Spectrum of `T V_N T` through the Kronecker factorization.
///
/// Computes the `a`-point spectrum of `T_W D T_W` and the `d`-point
/// spectrum of `T_S Σ T_S`, then returns all pairwise products sorted
/// decreasing and normalized. Equivalent to (but vastly cheaper than) a
/// dense eigensolve of the `ad × ad` product matrix.
pub fn spectrum_tvt(
    t_w: &DMatrix<f64>,
    t_s: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    n: &[usize],
) -> Result<BetaSpectrum> {
    let a = n.len();
    if t_w.nrows() != a || t_w.ncols() != a {
        return Err(Error::DimensionMismatch {
            context: "whole-plot factor vs group sizes",
            expected: (a, a),
            found: (t_w.nrows(), t_w.ncols()),
        });
    }
    let d = sigma.nrows();
    if t_s.nrows() != d || t_s.ncols() != d || sigma.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "sub-plot factor vs covariance",
            expected: (d, d),
            found: (t_s.nrows(), t_s.ncols()),
        });
    }
    if n.iter().any(|&ni| ni == 0) {
        return Err(Error::EmptyDimension { context: "group size n_i" });
    }
    let total: usize = n.iter().sum();

    // Whole-plot factor T_W D T_W: scale columns of T_W by N/n_i, multiply.
    let mut scaled = t_w.clone();
    for (j, &nj) in n.iter().enumerate() {
        let w = total as f64 / nj as f64;
        for i in 0..a {
            scaled[(i, j)] *= w;
        }
    }
    let w_factor = &scaled * t_w;
    let w_factor = (&w_factor + w_factor.transpose()) * 0.5;

    // Sub-plot factor T_S Σ T_S.
    let s_factor = t_s * sigma * t_s;
    let s_factor = (&s_factor + s_factor.transpose()) * 0.5;

    let w_eigs = psd_eigenvalues(&w_factor);
    let s_eigs = psd_eigenvalues(&s_factor);

    let mut lambdas: Vec<f64> = Vec::with_capacity(a * d);
    for &lw in &w_eigs {
        for &ls in &s_eigs {
            lambdas.push(lw * ls);
        }
    }
    lambdas.sort_unstable_by(|x, y| y.partial_cmp(x).expect("eigenvalues are finite"));

    let norm_sq: f64 = lambdas.iter().map(|l| l * l).sum();
    if norm_sq <= 0.0 {
        return Err(Error::NullSpectrum);
    }
    let norm = libm::sqrt(norm_sq);
    let betas = lambdas.iter().map(|l| l / norm).collect();
    Ok(BetaSpectrum { lambdas, betas })
}

/// Exact degrees of freedom and its reciprocal for a known covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpValue {
    /// Third-moment-matching degrees of freedom `f_P ≥ 1`.
    pub f_p: f64,
    /// `τ_P = 1/f_P ∈ (0, 1]`; 1 exactly in the single-chi-square regime.
    pub tau_p: f64,
}

/// Computes `f_P = [tr³((T_SΣ)²)/tr²((T_SΣ)³)] · η_{N,a}` and `τ_P = 1/f_P`.
///
/// Rank-one hypotheses (for example the grand-mean projection pair) make
/// both factors exactly 1, reproducing the known `τ_P ≡ 1` regime; the
/// power-mean inequality on the PSD spectrum guarantees `f_P ≥ 1` for every
/// valid input.
pub fn f_p_exact(
    t_w: &DMatrix<f64>,
    t_s: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    n: &[usize],
) -> Result<FpValue> {
    let traces = trace_powers(t_s, sigma)?;
    if traces.t3 <= 0.0 {
        return Err(Error::NullSpectrum);
    }
    let eta_val = eta(t_w, n)?;
    let sub = traces.t2 * traces.t2 * traces.t2 / (traces.t3 * traces.t3);
    let f_p = sub * eta_val;
    Ok(FpValue { f_p, tau_p: 1.0 / f_p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn centering_matrix_basics() {
        let p2 = centering_matrix(2).unwrap();
        assert_relative_eq!(p2[(0, 0)], 0.5);
        assert_relative_eq!(p2[(0, 1)], -0.5);

        let p1 = centering_matrix(1).unwrap();
        assert_eq!(p1[(0, 0)], 0.0);

        let p3 = centering_matrix(3).unwrap();
        for i in 0..3 {
            assert!(p3.row(i).sum().abs() < 1e-15);
        }
        assert_relative_eq!(p3.trace(), 2.0, epsilon = 1e-15);
        assert!(centering_matrix(0).is_err());
    }

    #[test]
    fn covariance_models_materialize_correctly() {
        let ar = CovarianceModel::autoregressive(2, 0.6).unwrap().materialize();
        assert_relative_eq!(ar[(0, 1)], 0.6, epsilon = 1e-15);
        assert_relative_eq!(ar[(0, 0)], 1.0, epsilon = 1e-15);

        let id = CovarianceModel::identity(3).unwrap().materialize();
        assert_eq!(id, DMatrix::identity(3, 3));

        let cs = CovarianceModel::compound_symmetry(3, 0.4).unwrap().materialize();
        assert_relative_eq!(cs[(1, 2)], 0.4, epsilon = 1e-15);

        assert!(CovarianceModel::autoregressive(5, 1.0).is_err());
        assert!(CovarianceModel::autoregressive(5, -1.0).is_err());
        assert!(CovarianceModel::compound_symmetry(5, -0.3).is_err()); // below −1/(d−1)
        assert!(CovarianceModel::compound_symmetry(5, -0.2).is_ok());
    }

    #[test]
    fn explicit_covariance_must_be_positive_definite() {
        let good = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!(CovarianceModel::explicit(good).is_ok());

        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            CovarianceModel::explicit(singular),
            Err(Error::NotPositiveDefinite { .. })
        ));

        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        assert!(CovarianceModel::explicit(asym).is_err());
    }

    #[test]
    fn trace_powers_identity_case() {
        let i2 = DMatrix::identity(2, 2);
        let t = trace_powers(&i2, &i2).unwrap();
        assert_relative_eq!(t.t1, 2.0, epsilon = 1e-15);
        assert_relative_eq!(t.t2, 2.0, epsilon = 1e-15);
        assert_relative_eq!(t.t3, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn trace_powers_centering_times_ar() {
        let p2 = centering_matrix(2).unwrap();
        let sigma = CovarianceModel::autoregressive(2, 0.6).unwrap().materialize();
        // P₂Σ = [[.2, −.2], [−.2, .2]]
        let t = trace_powers(&p2, &sigma).unwrap();
        assert_relative_eq!(t.t1, 0.4, epsilon = 1e-14);
        assert_relative_eq!(t.t2, 0.16, epsilon = 1e-14);
        assert_relative_eq!(t.t3, 0.064, epsilon = 1e-14);
    }

    #[test]
    fn trace_powers_projector_times_identity() {
        for d in [2, 5, 11] {
            let p = centering_matrix(d).unwrap();
            let t = trace_powers(&p, &DMatrix::identity(d, d)).unwrap();
            let want = (d - 1) as f64;
            assert_relative_eq!(t.t1, want, epsilon = 1e-12);
            assert_relative_eq!(t.t2, want, epsilon = 1e-12);
            assert_relative_eq!(t.t3, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn trace_powers_matches_dense_matrix_power_oracle() {
        // pseudo-random symmetric PSD sigma and a projection from a contrast
        let d = 7;
        let raw = DMatrix::from_fn(d, d, |i, j| libm::sin((3 * i + 5 * j + 1) as f64));
        let sigma = &raw * raw.transpose() + DMatrix::identity(d, d);
        let h = DMatrix::from_fn(3, d, |i, j| libm::cos((2 * i + j) as f64));
        let t_s = crate::design::build_projection(&h).unwrap();

        let t = trace_powers(&t_s, &sigma).unwrap();
        let m = &t_s * &sigma;
        let m2 = &m * &m;
        let m3 = &m2 * &m;
        assert_relative_eq!(t.t1, m.trace(), max_relative = 1e-13);
        assert_relative_eq!(t.t2, m2.trace(), max_relative = 1e-13);
        assert_relative_eq!(t.t3, m3.trace(), max_relative = 1e-13);
    }

    #[test]
    fn eta_balanced_averaging_factor_is_one() {
        for a in [2usize, 3, 7] {
            let j = averaging_matrix(a).unwrap();
            let n: Vec<usize> = core::iter::repeat(9).take(a).collect();
            assert_relative_eq!(eta(&j, &n).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eta_balanced_centering_factor_is_a_minus_one() {
        for a in [2usize, 3, 5, 12] {
            let p = centering_matrix(a).unwrap();
            let n: Vec<usize> = core::iter::repeat(4).take(a).collect();
            assert_relative_eq!(eta(&p, &n).unwrap(), (a - 1) as f64, epsilon = 1e-10);
        }
    }

    #[test]
    fn eta_unbalanced_three_groups() {
        // close to a − 1 = 2 but pushed off it by the group-size imbalance
        let p3 = centering_matrix(3).unwrap();
        let got = eta(&p3, &[15, 15, 20]).unwrap();
        assert_relative_eq!(got, 1.952_004_196_730_334_5, max_relative = 1e-12);
        assert!((got - 2.0).abs() > 1e-3);

        let p4 = centering_matrix(4).unwrap();
        assert_relative_eq!(
            eta(&p4, &[15, 15, 20, 35]).unwrap(),
            2.600_183_409_793_771_3,
            max_relative = 1e-12
        );
    }

    #[test]
    fn eta_rejects_the_zero_factor() {
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(eta(&zero, &[3, 3]).unwrap_err(), Error::DegenerateWholePlot);
    }

    #[test]
    fn spectrum_time_hypothesis_balanced_identity() {
        // T_W = (1/a)J_a, T_S = P_d, Σ = I, balanced: nonzero eigenvalue a
        // with multiplicity d − 1, so β₁ = 1/√(d−1).
        let (a, d) = (3usize, 5usize);
        let pair_w = averaging_matrix(a).unwrap();
        let pair_s = centering_matrix(d).unwrap();
        let sigma = DMatrix::identity(d, d);
        let n = [8usize, 8, 8];
        let spec = spectrum_tvt(&pair_w, &pair_s, &sigma, &n).unwrap();
        let nonzero: Vec<f64> = spec.lambdas().iter().copied().filter(|&l| l > 0.0).collect();
        assert_eq!(nonzero.len(), d - 1);
        for &l in &nonzero {
            assert_relative_eq!(l, a as f64, epsilon = 1e-10);
        }
        assert_relative_eq!(spec.beta1(), 1.0 / libm::sqrt((d - 1) as f64), epsilon = 1e-12);
    }

    #[test]
    fn spectrum_rank_one_hypothesis_has_beta1_equal_one() {
        let pair_w = averaging_matrix(4).unwrap();
        let pair_s = averaging_matrix(6).unwrap();
        let sigma = CovarianceModel::autoregressive(6, 0.3).unwrap().materialize();
        let spec = spectrum_tvt(&pair_w, &pair_s, &sigma, &[5, 6, 7, 8]).unwrap();
        assert_relative_eq!(spec.beta1(), 1.0, epsilon = 1e-12);
        let sum_sq: f64 = spec.betas().iter().map(|b| b * b).sum();
        assert_relative_eq!(sum_sq, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spectrum_matches_dense_kronecker_eigensolve() {
        // a = 2, d = 3, a pseudo-random PD Σ: factor products vs the dense
        // 6×6 eigensolve of (T_W D T_W) ⊗ (T_S Σ T_S).
        let raw = DMatrix::from_fn(3, 3, |i, j| libm::sin((i * 3 + j + 1) as f64) * 0.6);
        let sigma = &raw * raw.transpose() + DMatrix::identity(3, 3);
        let t_w = centering_matrix(2).unwrap();
        let t_s = centering_matrix(3).unwrap();
        let n = [4usize, 9];
        let total = 13.0;

        let spec = spectrum_tvt(&t_w, &t_s, &sigma, &n).unwrap();

        let d_mat = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            total / 4.0,
            total / 9.0,
        ]));
        let w = &t_w * d_mat * &t_w;
        let s = &t_s * &sigma * &t_s;
        let dense = w.kronecker(&s);
        let mut dense_eigs: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
        dense_eigs.sort_unstable_by(|x, y| y.partial_cmp(x).unwrap());

        let max = spec.lambdas()[0];
        for (mine, theirs) in spec.lambdas().iter().zip(dense_eigs.iter()) {
            assert!((mine - theirs).abs() <= 1e-10 * max.max(1.0), "{mine} vs {theirs}");
        }
    }

    #[test]
    fn f_p_exact_rank_one_hypothesis_is_one() {
        let t_w = averaging_matrix(3).unwrap();
        let t_s = averaging_matrix(7).unwrap();
        let sigma = CovarianceModel::autoregressive(7, 0.5).unwrap().materialize();
        let fp = f_p_exact(&t_w, &t_s, &sigma, &[11, 4, 9]).unwrap();
        assert_relative_eq!(fp.f_p, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fp.tau_p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn f_p_exact_interaction_two_groups_pinned() {
        // Interaction pair at a = 2 (η = 1): τ_P is the sub-plot ratio
        // tr²((P_dΣ)³)/tr³((P_dΣ)²); values pinned from an independent
        // dense-eigenvalue evaluation.
        let t_w = centering_matrix(2).unwrap();
        let n = [15usize, 15];
        for (d, rho, want) in [
            (5usize, 0.6, 0.488_757_879_141_104_6),
            (50, 0.6, 0.082_747_643_497_903_05),
            (5, 0.65, 0.523_913_810_484_972_3),
            (50, 0.65, 0.099_981_997_019_197_55),
        ] {
            let t_s = centering_matrix(d).unwrap();
            let sigma = CovarianceModel::autoregressive(d, rho).unwrap().materialize();
            let fp = f_p_exact(&t_w, &t_s, &sigma, &n).unwrap();
            assert_relative_eq!(fp.tau_p, want, max_relative = 1e-10);
        }
    }

    #[test]
    fn f_p_is_scale_invariant_in_sigma() {
        let t_w = centering_matrix(3).unwrap();
        let t_s = centering_matrix(6).unwrap();
        let sigma = CovarianceModel::autoregressive(6, 0.4).unwrap().materialize();
        let n = [5usize, 9, 6];
        let base = f_p_exact(&t_w, &t_s, &sigma, &n).unwrap();
        let scaled = f_p_exact(&t_w, &t_s, &(sigma * 37.5), &n).unwrap();
        assert_relative_eq!(base.f_p, scaled.f_p, epsilon = 1e-10);
    }

    #[test]
    fn f_p_exact_agrees_with_dense_definition() {
        // f_P = tr³((TV)²)/tr²((TV)³) straight from the ad × ad matrices.
        let raw = DMatrix::from_fn(4, 4, |i, j| libm::cos((2 * i + 5 * j) as f64));
        let sigma = &raw * raw.transpose() + DMatrix::identity(4, 4) * 2.0;
        let t_w = centering_matrix(3).unwrap();
        let t_s = centering_matrix(4).unwrap();
        let n = [3usize, 5, 4];
        let total = 12.0;

        let fp = f_p_exact(&t_w, &t_s, &sigma, &n).unwrap();

        let d_mat = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            total / 3.0,
            total / 5.0,
            total / 4.0,
        ]));
        let t = t_w.kronecker(&t_s);
        let v = d_mat.kronecker(&sigma);
        let tv = &t * &v;
        let tv2 = &tv * &tv;
        let tv3 = &tv2 * &tv;
        let dense_f = tv2.trace().powi(3) / tv3.trace().powi(2);
        assert_relative_eq!(fp.f_p, dense_f, max_relative = 1e-11);
        assert!(fp.f_p >= 1.0);
    }
}
