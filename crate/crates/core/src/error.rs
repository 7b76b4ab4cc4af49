//! Error type shared by all numeric modules.

use core::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong while building designs, projections, or
/// statistics.
///
/// Variants are deliberately coarse: each corresponds to one class of caller
/// mistake (or one numerically degenerate input), and the `Display` text
/// carries the concrete dimensions involved.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two matrices or a matrix/design pair do not conform.
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A dimension or group count that must be positive was zero.
    EmptyDimension { context: &'static str },
    /// A contrast matrix was identically zero, so no projection exists.
    DegenerateContrast,
    /// A canonical hypothesis requested a projection factor of rank zero
    /// (e.g. an interaction hypothesis with a single group or time point).
    RankZeroFactor { kind: &'static str, a: usize, d: usize },
    /// A projection factor failed the symmetry/idempotence check.
    NotAProjection { what: &'static str, deviation: f64 },
    /// A covariance model is not (numerically) symmetric positive definite.
    NotPositiveDefinite { min_eigenvalue: f64, max_eigenvalue: f64 },
    /// An AR(1) or compound-symmetry correlation parameter outside the
    /// positive-definite range.
    InvalidCorrelation { rho: f64, d: usize },
    /// A dataset entry was NaN or infinite.
    NonFiniteData { group: usize, row: usize, col: usize },
    /// An estimator was asked to run on a design with no eligible group.
    /// `required` is the minimum per-group sample size of that estimator.
    NoEligibleGroup { estimator: &'static str, required: usize },
    /// Exact order-6 enumeration would exceed the caller's term cap; use the
    /// subsampled estimator instead.
    TermCapExceeded { terms: u128, cap: u128 },
    /// `tr((D·T_W)³) = 0`, so the whole-plot imbalance factor is undefined.
    DegenerateWholePlot,
    /// All eigenvalues of `T V_N T` vanished: the hypothesis projection
    /// annihilates the covariance structure.
    NullSpectrum,
    /// The variance estimate `A₂` (or an exact variance) was not positive,
    /// so the statistic cannot be standardized.
    DegenerateVariance { value: f64 },
    /// A probability-scale parameter (`alpha`, `upsilon`, …) outside its
    /// open domain.
    InvalidProbability { name: &'static str, value: f64 },
    /// Degrees of freedom must be positive (or the infinity sentinel).
    InvalidDegreesOfFreedom { f: f64 },
    /// A spectrum whose squared entries do not sum to 1 where a normalized
    /// one is required.
    UnnormalizedSpectrum { sum_of_squares: f64 },
    /// A Monte Carlo routine was asked for fewer samples than its accuracy
    /// contract needs.
    SampleBudgetTooSmall { m: usize, required: usize },
    /// The quadratic form came out more negative than numerical slack
    /// permits; indicates a corrupted projection, not user input.
    NegativeQuadraticForm { q: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { context, expected, found } => write!(
                f,
                "dimension mismatch in {context}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::EmptyDimension { context } => {
                write!(f, "{context} must be at least 1")
            }
            Error::DegenerateContrast => {
                write!(f, "degenerate contrast: matrix is identically zero")
            }
            Error::RankZeroFactor { kind, a, d } => write!(
                f,
                "rank-zero factor: hypothesis `{kind}` is empty at a={a}, d={d}"
            ),
            Error::NotAProjection { what, deviation } => write!(
                f,
                "{what} is not a symmetric idempotent projection (max deviation {deviation:e})"
            ),
            Error::NotPositiveDefinite { min_eigenvalue, max_eigenvalue } => write!(
                f,
                "covariance is not positive definite (eigenvalues span [{min_eigenvalue:e}, {max_eigenvalue:e}])"
            ),
            Error::InvalidCorrelation { rho, d } => write!(
                f,
                "correlation parameter {rho} is outside the positive-definite range for d={d}"
            ),
            Error::NonFiniteData { group, row, col } => write!(
                f,
                "non-finite observation at group {group}, row {row}, column {col}"
            ),
            Error::NoEligibleGroup { estimator, required } => write!(
                f,
                "{estimator} requires at least one group with n_i >= {required} observations"
            ),
            Error::TermCapExceeded { terms, cap } => write!(
                f,
                "exact order-6 enumeration needs {terms} terms (cap {cap}); use the subsampled estimator"
            ),
            Error::DegenerateWholePlot => {
                write!(f, "degenerate whole-plot factor: tr((D*T_W)^3) = 0")
            }
            Error::NullSpectrum => {
                write!(f, "null hypothesis matrix annihilates covariance: spectrum is zero")
            }
            Error::DegenerateVariance { value } => {
                write!(f, "degenerate variance estimate {value}; statistic undefined")
            }
            Error::InvalidProbability { name, value } => {
                write!(f, "{name} = {value} is outside (0, 1)")
            }
            Error::InvalidDegreesOfFreedom { f: df } => {
                write!(f, "degrees of freedom {df} must be positive")
            }
            Error::UnnormalizedSpectrum { sum_of_squares } => write!(
                f,
                "spectrum is not normalized: sum of squared entries {sum_of_squares} != 1"
            ),
            Error::SampleBudgetTooSmall { m, required } => write!(
                f,
                "sample budget {m} is below the required minimum {required}"
            ),
            Error::NegativeQuadraticForm { q } => {
                write!(f, "quadratic form evaluated to {q} < 0 beyond numerical slack")
            }
        }
    }
}

impl core::error::Error for Error {}
