//! Split-plot designs, datasets, hypothesis matrices, and the classical
//! effect decomposition.
//!
//! A design is `a` independent groups (whole-plot factor) measured at `d`
//! time points (sub-plot factor); group `i` has `n_i` subjects, each
//! contributing one `d`-vector. Null hypotheses about the `a×d` mean table
//! are written as `(T_W ⊗ T_S) μ = 0` for a pair of symmetric idempotent
//! factors: the whole-plot projection acts on groups, the sub-plot
//! projection on time points. The four canonical hypotheses (no group
//! effect, no time effect, no interaction, zero grand mean) combine
//! centering and averaging projectors; arbitrary contrast matrices are
//! converted to projections via `T = Hᵀ(HHᵀ)⁻H`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kron::{averaging_matrix, centering_matrix};

/// Tolerance for the symmetry/idempotence check on projection factors.
const PROJECTION_TOL: f64 = 1e-10;

/// Relative eigenvalue cutoff for the generalized inverse of `HHᵀ`.
const RANK_TOL: f64 = 1e-12;

/// Group structure of a split-plot design: `a` groups of sizes `n_i`,
/// each subject measured at `d` time points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Design {
    n: Vec<usize>,
    d: usize,
    total: usize,
}

impl Design {
    /// Builds a design from per-group sizes and the number of time points.
    ///
    /// Requires at least one group, every `n_i ≥ 1`, and `d ≥ 1`.
    pub fn new(n: Vec<usize>, d: usize) -> Result<Self> {
        if n.is_empty() {
            return Err(Error::EmptyDimension { context: "group count a" });
        }
        if n.iter().any(|&ni| ni == 0) {
            return Err(Error::EmptyDimension { context: "group size n_i" });
        }
        if d == 0 {
            return Err(Error::EmptyDimension { context: "dimension d" });
        }
        let total = n.iter().sum();
        Ok(Design { n, d, total })
    }

    /// Number of groups `a`.
    pub fn a(&self) -> usize {
        self.n.len()
    }

    /// Per-group sample sizes `n_1, …, n_a`.
    pub fn n(&self) -> &[usize] {
        &self.n
    }

    /// Number of time points `d`.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Total sample size `N = Σ n_i`.
    pub fn total(&self) -> usize {
        self.total
    }
}

/// Observations for a full design: one `n_i × d` matrix per group, rows are
/// subjects, columns are time points.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    design: Design,
    groups: Vec<DMatrix<f64>>,
}

impl DataSet {
    /// Wraps per-group observation matrices, checking shapes and finiteness.
    pub fn new(design: Design, groups: Vec<DMatrix<f64>>) -> Result<Self> {
        if groups.len() != design.a() {
            return Err(Error::DimensionMismatch {
                context: "group list",
                expected: (design.a(), 1),
                found: (groups.len(), 1),
            });
        }
        for (i, g) in groups.iter().enumerate() {
            if g.nrows() != design.n()[i] || g.ncols() != design.d() {
                return Err(Error::DimensionMismatch {
                    context: "group observation matrix",
                    expected: (design.n()[i], design.d()),
                    found: (g.nrows(), g.ncols()),
                });
            }
            for r in 0..g.nrows() {
                for c in 0..g.ncols() {
                    if !g[(r, c)].is_finite() {
                        return Err(Error::NonFiniteData { group: i, row: r, col: c });
                    }
                }
            }
        }
        Ok(DataSet { design, groups })
    }

    /// The underlying design.
    pub fn design(&self) -> &Design {
        &self.design
    }

    /// Observation matrix of group `i`.
    pub fn group(&self, i: usize) -> &DMatrix<f64> {
        &self.groups[i]
    }

    /// All group matrices in group order.
    pub fn groups(&self) -> &[DMatrix<f64>] {
        &self.groups
    }

    /// `a × d` matrix of group mean vectors (row `i` = mean of group `i`).
    pub fn group_means(&self) -> DMatrix<f64> {
        let a = self.design.a();
        let d = self.design.d();
        let mut means = DMatrix::zeros(a, d);
        for (i, g) in self.groups.iter().enumerate() {
            let ni = g.nrows() as f64;
            for c in 0..d {
                let mut s = 0.0;
                for r in 0..g.nrows() {
                    s += g[(r, c)];
                }
                means[(i, c)] = s / ni;
            }
        }
        means
    }
}

/// A null hypothesis about the mean table, either one of the four canonical
/// kinds or a custom pair of contrast matrices (whole-plot columns = `a`,
/// sub-plot columns = `d`).
#[derive(Debug, Clone, PartialEq)]
pub enum HypothesisSpec {
    /// No group effect: `(P_a ⊗ (1/d)J_d) μ = 0`.
    Group,
    /// No time effect: `((1/a)J_a ⊗ P_d) μ = 0`.
    Time,
    /// No group-time interaction: `(P_a ⊗ P_d) μ = 0`.
    Interaction,
    /// Zero grand mean: `((1/a)J_a ⊗ (1/d)J_d) μ = 0`.
    GrandMean,
    /// User-supplied Kronecker-factorized contrasts `H_W`, `H_S`.
    Custom { h_w: DMatrix<f64>, h_s: DMatrix<f64> },
}

impl HypothesisSpec {
    /// Short stable name, used in reports and CLI output.
    pub fn name(&self) -> &'static str {
        match self {
            HypothesisSpec::Group => "group",
            HypothesisSpec::Time => "time",
            HypothesisSpec::Interaction => "interaction",
            HypothesisSpec::GrandMean => "grand-mean",
            HypothesisSpec::Custom { .. } => "custom",
        }
    }

    /// Resolves the hypothesis to its projection pair for a concrete `(a, d)`.
    pub fn projection(&self, a: usize, d: usize) -> Result<ProjectionPair> {
        match self {
            HypothesisSpec::Custom { h_w, h_s } => {
                if h_w.ncols() != a {
                    return Err(Error::DimensionMismatch {
                        context: "whole-plot contrast H_W",
                        expected: (h_w.nrows(), a),
                        found: (h_w.nrows(), h_w.ncols()),
                    });
                }
                if h_s.ncols() != d {
                    return Err(Error::DimensionMismatch {
                        context: "sub-plot contrast H_S",
                        expected: (h_s.nrows(), d),
                        found: (h_s.nrows(), h_s.ncols()),
                    });
                }
                ProjectionPair::new(build_projection(h_w)?, build_projection(h_s)?)
            }
            kind => canonical_hypothesis(kind, a, d),
        }
    }
}

/// The pair of projection factors `(T_W, T_S)` whose Kronecker product
/// encodes a null hypothesis. Both factors are validated to be symmetric,
/// idempotent, and not identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    t_w: DMatrix<f64>,
    t_s: DMatrix<f64>,
}

impl ProjectionPair {
    /// Validates and wraps a factor pair.
    pub fn new(t_w: DMatrix<f64>, t_s: DMatrix<f64>) -> Result<Self> {
        check_projection("whole-plot factor T_W", &t_w)?;
        check_projection("sub-plot factor T_S", &t_s)?;
        Ok(ProjectionPair { t_w, t_s })
    }

    /// Whole-plot (group) factor, `a × a`.
    pub fn t_w(&self) -> &DMatrix<f64> {
        &self.t_w
    }

    /// Sub-plot (time) factor, `d × d`.
    pub fn t_s(&self) -> &DMatrix<f64> {
        &self.t_s
    }
}

/// Asserts that `t` is a nonzero symmetric idempotent matrix.
fn check_projection(what: &'static str, t: &DMatrix<f64>) -> Result<()> {
    if t.nrows() != t.ncols() {
        return Err(Error::DimensionMismatch {
            context: what,
            expected: (t.nrows(), t.nrows()),
            found: (t.nrows(), t.ncols()),
        });
    }
    let max_abs = t.amax();
    if max_abs == 0.0 {
        return Err(Error::NotAProjection { what, deviation: 0.0 });
    }
    let sym_dev = (t - t.transpose()).amax();
    let idem_dev = (t * t - t).amax();
    let deviation = sym_dev.max(idem_dev);
    if deviation > PROJECTION_TOL {
        return Err(Error::NotAProjection { what, deviation });
    }
    Ok(())
}

/// Converts a contrast matrix to projection form: `T = Hᵀ (H Hᵀ)⁻ H`.
///
/// The generalized inverse is taken through the symmetric eigendecomposition
/// of `H Hᵀ`, zeroing every eigenvalue below `max eigenvalue · 1e-12` —
/// rank-deficient contrasts (J-type averaging rows, stacked redundant rows)
/// are routine inputs. The result is an orthogonal projection onto the row
/// space of `H`, so it is invariant to row scaling and row permutation.
pub fn build_projection(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if h.amax() == 0.0 {
        return Err(Error::DegenerateContrast);
    }
    let m = h * h.transpose();
    let eig = m.symmetric_eigen();
    let max_eig = eig.eigenvalues.amax();
    let tol = max_eig * RANK_TOL;
    // Hᵀ (HHᵀ)⁻ H assembled column-by-column: Σ_{λ>tol} (Hᵀ v)(Hᵀ v)ᵀ / λ.
    let mut t = DMatrix::zeros(h.ncols(), h.ncols());
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let u = h.transpose() * eig.eigenvectors.column(j);
            t += u.clone() * u.transpose() / lambda;
        }
    }
    // Symmetrize away the last-ulp asymmetry of the accumulation.
    let t = (&t + t.transpose()) * 0.5;
    Ok(t)
}

/// Builds the projection pair of a canonical hypothesis at size `(a, d)`.
///
/// * group → `(P_a, (1/d)J_d)`
/// * time → `((1/a)J_a, P_d)`
/// * interaction → `(P_a, P_d)`
/// * grand mean → `((1/a)J_a, (1/d)J_d)`
///
/// Centering factors of size 1 are identically zero, so hypothesis kinds
/// that need them reject `a = 1` / `d = 1` with a rank-zero error; the
/// grand-mean hypothesis is valid at any size.
pub fn canonical_hypothesis(kind: &HypothesisSpec, a: usize, d: usize) -> Result<ProjectionPair> {
    if a == 0 {
        return Err(Error::EmptyDimension { context: "group count a" });
    }
    if d == 0 {
        return Err(Error::EmptyDimension { context: "dimension d" });
    }
    let rank_zero = |kind: &'static str| Error::RankZeroFactor { kind, a, d };
    match kind {
        HypothesisSpec::Group => {
            if a == 1 {
                return Err(rank_zero("group"));
            }
            ProjectionPair::new(centering_matrix(a)?, averaging_matrix(d)?)
        }
        HypothesisSpec::Time => {
            if d == 1 {
                return Err(rank_zero("time"));
            }
            ProjectionPair::new(averaging_matrix(a)?, centering_matrix(d)?)
        }
        HypothesisSpec::Interaction => {
            if a == 1 || d == 1 {
                return Err(rank_zero("interaction"));
            }
            ProjectionPair::new(centering_matrix(a)?, centering_matrix(d)?)
        }
        HypothesisSpec::GrandMean => {
            ProjectionPair::new(averaging_matrix(a)?, averaging_matrix(d)?)
        }
        HypothesisSpec::Custom { .. } => unreachable!("custom handled by HypothesisSpec::projection"),
    }
}

/// The classical two-factor decomposition of an `a × d` mean table into a
/// grand mean, group effects, time effects, and interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectDecomposition {
    /// Overall mean `μ`.
    pub grand: f64,
    /// Group effects `α_i` (sum to zero).
    pub alpha: DVector<f64>,
    /// Time effects `β_t` (sum to zero).
    pub beta: DVector<f64>,
    /// Interaction table `(αβ)_{it}` (every row and column sums to zero).
    pub gamma: DMatrix<f64>,
}

impl EffectDecomposition {
    /// Reassembles the mean table `μ_{it} = μ + α_i + β_t + (αβ)_{it}`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let (a, d) = (self.alpha.len(), self.beta.len());
        DMatrix::from_fn(a, d, |i, t| {
            self.grand + self.alpha[i] + self.beta[t] + self.gamma[(i, t)]
        })
    }
}

/// Splits a mean table into grand mean, main effects, and interactions.
///
/// `grand` is the overall mean, `α_i` the centered row means, `β_t` the
/// centered column means, and `gamma` the residual; the reconstruction
/// `μ + α_i + β_t + (αβ)_{it}` reproduces the input exactly.
pub fn decompose_effects(mu: &DMatrix<f64>) -> EffectDecomposition {
    let (a, d) = (mu.nrows(), mu.ncols());
    let grand = mu.sum() / (a * d) as f64;
    let alpha = DVector::from_fn(a, |i, _| mu.row(i).sum() / d as f64 - grand);
    let beta = DVector::from_fn(d, |t, _| mu.column(t).sum() / a as f64 - grand);
    let gamma = DMatrix::from_fn(a, d, |i, t| mu[(i, t)] - grand - alpha[i] - beta[t]);
    EffectDecomposition { grand, alpha, beta, gamma }
}

/// Minimum group size required by each trace estimator.
pub mod thresholds {
    /// `A₁` uses within-group pairs.
    pub const A1: usize = 2;
    /// `A₂` uses quadruples of distinct subjects.
    pub const A2: usize = 4;
    /// `C₁` / `C₁*` use six distinct subjects.
    pub const C1: usize = 6;
}

/// Per-group estimator eligibility for one design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupEligibility {
    /// Group index (original order).
    pub group: usize,
    /// Sample size of the group.
    pub n: usize,
    /// Eligible for the order-2 estimator `A₁` (`n ≥ 2`).
    pub a1: bool,
    /// Eligible for the order-4 estimator `A₂` (`n ≥ 4`).
    pub a2: bool,
    /// Eligible for the order-6 estimators `C₁`/`C₁*` (`n ≥ 6`).
    pub c1: bool,
}

/// Feasibility report for the estimator stack on a given design.
///
/// An estimator is feasible as long as at least one group clears its size
/// threshold; smaller groups are silently excluded from that estimator
/// (numerator and denominator alike), and this report is how callers see
/// which ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignDiagnostics {
    /// One entry per group, in group order.
    pub per_group: Vec<GroupEligibility>,
    /// At least one group with `n_i ≥ 2`.
    pub a1_feasible: bool,
    /// At least one group with `n_i ≥ 4`.
    pub a2_feasible: bool,
    /// At least one group with `n_i ≥ 6`.
    pub c1_feasible: bool,
}

impl DesignDiagnostics {
    /// Indices of groups eligible for the order-6 estimators.
    pub fn c1_groups(&self) -> Vec<usize> {
        self.per_group.iter().filter(|g| g.c1).map(|g| g.group).collect()
    }
}

/// Reports which estimators each group can support and whether the design
/// as a whole admits the full test pipeline.
pub fn validate_design(design: &Design) -> DesignDiagnostics {
    let per_group: Vec<GroupEligibility> = design
        .n()
        .iter()
        .enumerate()
        .map(|(i, &n)| GroupEligibility {
            group: i,
            n,
            a1: n >= thresholds::A1,
            a2: n >= thresholds::A2,
            c1: n >= thresholds::C1,
        })
        .collect();
    DesignDiagnostics {
        a1_feasible: per_group.iter().any(|g| g.a1),
        a2_feasible: per_group.iter().any(|g| g.a2),
        c1_feasible: per_group.iter().any(|g| g.c1),
        per_group,
    }
}
