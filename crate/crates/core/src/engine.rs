//! The test pipeline: quadratic form, standardized statistics, critical
//! values, p-values, and decisions.
//!
//! The raw statistic is `Q_N = N · x̄ᵀ (T_W ⊗ T_S) x̄` for the stacked
//! group-mean vector `x̄`; it is computed factor-wise as
//! `N · Σ_{i,r} (T_W)_{ir} · X̄_iᵀ T_S X̄_r` and the `ad × ad` Kronecker
//! product is never materialized. Centering and scaling by the exact (or
//! estimated) null moments gives
//!
//! ```text
//! W̃_N = (Q_N − E(Q_N)) / √Var(Q_N),
//! W_N  = (Q_N − A₁·s₁)  / √(2·A₂·s₂),
//! ```
//!
//! with `s₁ = Σ_i (N/n_i)(T_W)_{ii}` and
//! `s₂ = Σ_{i,r} (N²/(n_i n_r))(T_W)²_{ir}`.
//!
//! Critical values come from the standardized chi-square family
//! `K_f = (χ²_f − f)/√(2f)`, whose `1−α` quantile interpolates between the
//! limiting cases: `f = 1` is the standardized single chi-square and
//! `f → ∞` recovers the standard normal quantile. The data-driven test
//! `φ*` evaluates `K_f` at the estimated degrees of freedom
//! `f̂ = (A₂³/C₁*²)·η`; the fixed comparison tests `ψ_z` and `ψ_χ` sit at
//! the two ends. All three decisions are plain threshold comparisons
//! `W_N > quantile`, and the reported p-value is the `K_{f̂}` survival
//! probability at `W_N`.

use nalgebra::DMatrix;

use crate::design::{DataSet, HypothesisSpec};
use crate::error::{Error, Result};
use crate::estimators::{self, SubsampleConfig, TraceEstimates};
use crate::kron::{self, TraceSet};
use crate::prob;

/// Degrees of freedom beyond which `K_f` is numerically indistinguishable
/// from the standard normal (quantile gap below 1e-4) and the normal branch
/// takes over.
const NORMAL_LIMIT_F: f64 = 1e7;

/// Null mean and variance of the quadratic form `Q_N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QFMoments {
    /// `E(Q_N) = tr(T_S Σ) · Σ_i (N/n_i)(T_W)_{ii}`.
    pub mean: f64,
    /// `Var(Q_N) = 2·tr((T_S Σ)²) · Σ_{i,r} (N²/(n_i n_r))(T_W)²_{ir}`.
    pub variance: f64,
}

/// Caller-facing knobs of [`run_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOptions {
    /// Significance level `α ∈ (0, 1)`.
    pub alpha: f64,
    /// Subsampling fraction `υ > 0` for the order-6 trace estimator.
    pub upsilon: f64,
    /// Seed for the subsample draws; fixing it makes the whole result
    /// bit-reproducible.
    pub seed: u64,
}

/// Everything [`run_test`] decides and the numbers behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    /// The quadratic form `Q_N`.
    pub q: f64,
    /// The estimated standardized statistic `W_N`.
    pub w: f64,
    /// Trace estimates that entered the standardization and `f̂`.
    pub traces: TraceEstimates,
    /// Estimated degrees of freedom `f̂ = (A₂³/C₁*²)·η` (may be `+∞`).
    pub f_hat: f64,
    /// Normal critical value `z_{1−α}` (test `ψ_z`).
    pub crit_z: f64,
    /// Standardized single-chi-square critical value `(χ²_{1;1−α}−1)/√2`
    /// (test `ψ_χ`).
    pub crit_chi1: f64,
    /// Data-calibrated critical value, the `1−α` quantile of `K_{f̂}`
    /// (test `φ*`).
    pub crit_kf: f64,
    /// Survival probability of `K_{f̂}` at `w`.
    pub p_value: f64,
    /// `w > crit_z`.
    pub reject_z: bool,
    /// `w > crit_chi1`.
    pub reject_chi1: bool,
    /// `w > crit_kf`.
    pub reject_kf: bool,
    /// The level the decisions were taken at.
    pub alpha: f64,
    /// The seed the subsample draws used.
    pub seed: u64,
}

/// The quadratic form `Q_N = N · Σ_{i,r} (T_W)_{ir} · X̄_iᵀ T_S X̄_r`.
///
/// Nonnegative for projection factors up to roundoff; values in
/// `(−1e-9, 0)` are clamped to zero, anything more negative is reported as
/// an internal error rather than silently truncated.
pub fn q_statistic(
    dataset: &DataSet,
    t_w: &DMatrix<f64>,
    t_s: &DMatrix<f64>,
) -> Result<f64> {
    let a = dataset.design().a();
    let d = dataset.design().d();
    if t_w.nrows() != a || t_w.ncols() != a {
        return Err(Error::DimensionMismatch {
            context: "whole-plot factor vs group count",
            expected: (a, a),
            found: (t_w.nrows(), t_w.ncols()),
        });
    }
    if t_s.nrows() != d || t_s.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "sub-plot factor vs data dimension",
            expected: (d, d),
            found: (t_s.nrows(), t_s.ncols()),
        });
    }
    let means = dataset.group_means();
    let b = &means * t_s * means.transpose();
    let mut q = 0.0;
    for i in 0..a {
        for r in 0..a {
            q += t_w[(i, r)] * b[(i, r)];
        }
    }
    q *= dataset.design().total() as f64;
    if q < 0.0 {
        if q > -1e-9 {
            q = 0.0;
        } else {
            return Err(Error::NegativeQuadraticForm { q });
        }
    }
    Ok(q)
}

/// The whole-plot weight sums `s₁ = Σ_i (N/n_i)(T_W)_{ii}` and
/// `s₂ = Σ_{i,r} (N²/(n_i n_r))(T_W)²_{ir}` shared by the exact and the
/// estimated standardization.
fn tw_weight_sums(t_w: &DMatrix<f64>, n: &[usize]) -> Result<(f64, f64)> {
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
    let nn = total as f64;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (i, &ni) in n.iter().enumerate() {
        s1 += nn / ni as f64 * t_w[(i, i)];
        for (r, &nr) in n.iter().enumerate() {
            let v = t_w[(i, r)];
            s2 += nn * nn / (ni as f64 * nr as f64) * v * v;
        }
    }
    Ok((s1, s2))
}

/// Null moments of `Q_N` from known (or estimated) trace powers.
pub fn qf_moments(traces: &TraceSet, t_w: &DMatrix<f64>, n: &[usize]) -> Result<QFMoments> {
    let (s1, s2) = tw_weight_sums(t_w, n)?;
    Ok(QFMoments { mean: traces.t1 * s1, variance: 2.0 * traces.t2 * s2 })
}

/// Shared standardization `(q − t1·s1) / √(2·t2·s2)`; both the known-Σ and
/// the estimated statistic funnel through here so that plugging exact
/// traces into the estimated path reproduces `W̃_N` bit for bit.
fn standardize(q: f64, t1: f64, t2: f64, s1: f64, s2: f64) -> Result<f64> {
    let variance = 2.0 * t2 * s2;
    if !(variance > 0.0) {
        return Err(Error::DegenerateVariance { value: variance });
    }
    Ok((q - t1 * s1) / libm::sqrt(variance))
}

/// The exactly standardized statistic `W̃_N` for a known covariance.
///
/// Simulation and validation use only — data analysis never knows `Σ`.
pub fn w_standardized(
    dataset: &DataSet,
    t_w: &DMatrix<f64>,
    t_s: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<f64> {
    let q = q_statistic(dataset, t_w, t_s)?;
    let traces = kron::trace_powers(t_s, sigma)?;
    let (s1, s2) = tw_weight_sums(t_w, dataset.design().n())?;
    standardize(q, traces.t1, traces.t2, s1, s2)
}

/// The estimated standardized statistic
/// `W_N = (Q_N − A₁·s₁) / √(2·A₂·s₂)`.
pub fn w_estimated(
    dataset: &DataSet,
    t_w: &DMatrix<f64>,
    t_s: &DMatrix<f64>,
    traces: &TraceEstimates,
) -> Result<f64> {
    let q = q_statistic(dataset, t_w, t_s)?;
    let (s1, s2) = tw_weight_sums(t_w, dataset.design().n())?;
    standardize(q, traces.a1, traces.a2, s1, s2)
}

/// The `1−α` quantile of `K_f = (χ²_f − f)/√(2f)`.
///
/// Defined for every `f > 0` (estimated degrees of freedom can drop below
/// 1 in small samples); `f > 1e7` and the `+∞` sentinel use the normal
/// limit `z_{1−α}` directly.
pub fn kf_quantile(f: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidProbability { name: "alpha", value: alpha });
    }
    if f.is_nan() || f <= 0.0 {
        return Err(Error::InvalidDegreesOfFreedom { f });
    }
    if f > NORMAL_LIMIT_F {
        return prob::normal_quantile(1.0 - alpha);
    }
    let q = prob::chi2_quantile(1.0 - alpha, f)?;
    Ok((q - f) / libm::sqrt(2.0 * f))
}

/// Survival probability of `K_f` at `w`:
/// `P(K_f > w) = 1 − F_{χ²_f}(f + w·√(2f))`.
///
/// Arguments below the chi-square support give 1; the `f > 1e7` and `+∞`
/// cases use the standard normal survival function.
pub fn kf_p_value(f: f64, w: f64) -> f64 {
    if f.is_nan() || f <= 0.0 {
        return f64::NAN;
    }
    if f > NORMAL_LIMIT_F {
        return 1.0 - prob::normal_cdf(w);
    }
    let x = f + w * libm::sqrt(2.0 * f);
    1.0 - prob::chi2_cdf(x, f)
}

/// The three critical values at level `alpha` for an estimated `f̂`.
pub(crate) fn critical_values(f_hat: f64, alpha: f64) -> Result<(f64, f64, f64)> {
    let crit_z = kf_quantile(f64::INFINITY, alpha)?;
    let crit_chi1 = kf_quantile(1.0, alpha)?;
    let crit_kf = kf_quantile(f_hat, alpha)?;
    Ok((crit_z, crit_chi1, crit_kf))
}

/// Runs the full data-analysis pipeline:
/// Gram cache → `A₁`, `A₂`, `C₁*` → `W_N` → `f̂ = (A₂³/C₁*²)·η` →
/// critical values and decisions for `ψ_z`, `ψ_χ`, `φ*` → p-value.
///
/// Deterministic: the same dataset, hypothesis, and options reproduce the
/// result bit for bit.
pub fn run_test(
    dataset: &DataSet,
    hypothesis: &HypothesisSpec,
    options: &TestOptions,
) -> Result<TestResult> {
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(Error::InvalidProbability { name: "alpha", value: options.alpha });
    }
    let design = dataset.design();
    let pair = hypothesis.projection(design.a(), design.d())?;
    let cache = estimators::gram(dataset, pair.t_s())?;
    let config = SubsampleConfig::new(options.upsilon, options.seed, design)?;
    let traces = estimators::estimate_traces(&cache, &config)?;
    let q = q_statistic(dataset, pair.t_w(), pair.t_s())?;
    let (s1, s2) = tw_weight_sums(pair.t_w(), design.n())?;
    let w = standardize(q, traces.a1, traces.a2, s1, s2)?;
    let eta = kron::eta(pair.t_w(), design.n())?;
    let f_hat = estimators::f_hat(traces.a2, traces.c1, eta);
    let (crit_z, crit_chi1, crit_kf) = critical_values(f_hat, options.alpha)?;
    let p_value = kf_p_value(f_hat, w);
    Ok(TestResult {
        q,
        w,
        traces,
        f_hat,
        crit_z,
        crit_chi1,
        crit_kf,
        p_value,
        reject_z: w > crit_z,
        reject_chi1: w > crit_chi1,
        reject_kf: w > crit_kf,
        alpha: options.alpha,
        seed: options.seed,
    })
}
