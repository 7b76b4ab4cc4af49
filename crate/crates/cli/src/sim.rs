//! Seeded, parallel Monte Carlo harness: multivariate normal generation,
//! null/alternative mean tables, rejection-rate estimation, and power
//! curves.
//!
//! Replications are independent tasks over a shared read-only
//! configuration (one Cholesky factor per covariance). Each replication
//! owns a private counter-based RNG substream, so results are identical
//! for every thread count: decisions are accumulated as integer counts,
//! a commutative sum.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use splitq_core::design::{DataSet, Design, HypothesisSpec};
use splitq_core::engine::{run_test, w_standardized, TestOptions};
use splitq_core::kron::CovarianceModel;
use splitq_core::rng::Stream;

use crate::error::{CliError, Result};

/// Benchmark group-size vector used throughout the simulation study; the
/// deliberately unbalanced sizes exercise both the smallest (251) and the
/// largest (81 158) subsampling budgets at `υ = 0.05`.
pub const DEFAULT_GROUP_SIZES: [usize; 12] = [15, 15, 20, 35, 25, 20, 30, 30, 35, 20, 15, 25];

/// Group sizes for an `a`-group design: the first `a` entries of
/// [`DEFAULT_GROUP_SIZES`], cycling when `a` exceeds its length.
pub fn default_group_sizes(a: usize) -> Vec<usize> {
    (0..a).map(|i| DEFAULT_GROUP_SIZES[i % DEFAULT_GROUP_SIZES.len()]).collect()
}

/// Covariance structure named on the command line or in a config file:
/// `identity`, `ar:RHO`, or `cs:RHO`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CovSpec {
    /// `Σ = I_d`.
    Identity,
    /// First-order autoregressive: `Σ_{ij} = ρ^{|i−j|}`.
    Autoregressive(f64),
    /// Compound symmetry: 1 on the diagonal, `ρ` off it.
    CompoundSymmetry(f64),
}

impl CovSpec {
    /// Parses `identity`, `ar:RHO`, or `cs:RHO`.
    pub fn parse(text: &str) -> Result<Self> {
        let lower = text.trim().to_ascii_lowercase();
        if lower == "identity" || lower == "id" {
            return Ok(CovSpec::Identity);
        }
        if let Some(rest) = lower.strip_prefix("ar:") {
            let rho: f64 = rest
                .parse()
                .map_err(|_| CliError::usage(format!("invalid AR parameter: {rest:?}")))?;
            return Ok(CovSpec::Autoregressive(rho));
        }
        if let Some(rest) = lower.strip_prefix("cs:") {
            let rho: f64 = rest
                .parse()
                .map_err(|_| CliError::usage(format!("invalid CS parameter: {rest:?}")))?;
            return Ok(CovSpec::CompoundSymmetry(rho));
        }
        Err(CliError::usage(format!(
            "unknown covariance {text:?}; expected identity, ar:RHO, or cs:RHO"
        )))
    }

    /// Materializes the spec for a concrete dimension, validating the
    /// parameter range.
    pub fn model(&self, d: usize) -> Result<CovarianceModel> {
        let model = match *self {
            CovSpec::Identity => CovarianceModel::identity(d)?,
            CovSpec::Autoregressive(rho) => CovarianceModel::autoregressive(d, rho)?,
            CovSpec::CompoundSymmetry(rho) => CovarianceModel::compound_symmetry(d, rho)?,
        };
        Ok(model)
    }
}

impl fmt::Display for CovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovSpec::Identity => write!(f, "identity"),
            CovSpec::Autoregressive(rho) => write!(f, "ar:{rho}"),
            CovSpec::CompoundSymmetry(rho) => write!(f, "cs:{rho}"),
        }
    }
}

impl TryFrom<String> for CovSpec {
    type Error = String;

    fn try_from(value: String) -> core::result::Result<Self, String> {
        CovSpec::parse(&value).map_err(|e| e.to_string())
    }
}

impl From<CovSpec> for String {
    fn from(value: CovSpec) -> String {
        value.to_string()
    }
}

/// Mean-table family for the alternative hypothesis. Groups with odd
/// 1-based index always keep a zero mean; even-indexed groups receive the
/// pattern scaled by `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// All means zero regardless of `δ`.
    Null,
    /// Increasing profile `δ·k/d`, `k = 1..d`.
    Trend,
    /// Single-coordinate bump `δ·e₁`.
    OnePoint,
    /// Constant shift `δ·1_d` (meaningful for grand-mean/time-type
    /// hypotheses only).
    Shift,
}

impl Alternative {
    /// Parses the kebab-case name used on the command line.
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "null" => Ok(Alternative::Null),
            "trend" => Ok(Alternative::Trend),
            "one-point" => Ok(Alternative::OnePoint),
            "shift" => Ok(Alternative::Shift),
            other => Err(CliError::usage(format!(
                "unknown alternative {other:?}; expected null, trend, one-point, or shift"
            ))),
        }
    }

    /// Stable kebab-case name.
    pub fn name(&self) -> &'static str {
        match self {
            Alternative::Null => "null",
            Alternative::Trend => "trend",
            Alternative::OnePoint => "one-point",
            Alternative::Shift => "shift",
        }
    }
}

/// Parses a canonical hypothesis name.
pub fn parse_hypothesis(text: &str) -> Result<HypothesisSpec> {
    match text.trim().to_ascii_lowercase().as_str() {
        "group" => Ok(HypothesisSpec::Group),
        "time" => Ok(HypothesisSpec::Time),
        "interaction" => Ok(HypothesisSpec::Interaction),
        "grand-mean" | "grand_mean" => Ok(HypothesisSpec::GrandMean),
        other => Err(CliError::usage(format!(
            "unknown hypothesis {other:?}; expected group, time, interaction, or grand-mean"
        ))),
    }
}

fn default_delta_grid() -> Vec<f64> {
    vec![0.0]
}

fn default_alternative() -> Alternative {
    Alternative::Null
}

fn default_alpha() -> f64 {
    0.05
}

fn default_upsilon() -> f64 {
    0.05
}

fn default_replications() -> u64 {
    2_000
}

/// One complete simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Number of groups.
    pub a: usize,
    /// Number of time points per subject.
    pub d: usize,
    /// Explicit group sizes; defaults to [`default_group_sizes`]`(a)`.
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    /// Covariance structure shared by all groups.
    pub cov: CovSpec,
    /// Hypothesis name: group, time, interaction, or grand-mean.
    pub hypothesis: String,
    /// Mean-table family for the alternative.
    #[serde(default = "default_alternative")]
    pub alternative: Alternative,
    /// Effect sizes to sweep; `[0.0]` estimates the type-I error.
    #[serde(default = "default_delta_grid")]
    pub delta_grid: Vec<f64>,
    /// Significance level.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Monte Carlo replications per δ.
    #[serde(default = "default_replications")]
    pub replications: u64,
    /// Subsampling fraction for the order-6 trace estimator.
    #[serde(default = "default_upsilon")]
    pub upsilon: f64,
    /// Master seed; together with the config it fixes every byte of the
    /// output.
    #[serde(default)]
    pub seed: u64,
    /// Worker-thread hint; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl SimConfig {
    /// Group sizes after applying the default rule.
    pub fn group_sizes(&self) -> Vec<usize> {
        match &self.n {
            Some(n) => n.clone(),
            None => default_group_sizes(self.a),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(CliError::usage("replications must be at least 1"));
        }
        if self.delta_grid.is_empty() {
            return Err(CliError::usage("the δ grid must contain at least one value"));
        }
        if self.delta_grid.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(CliError::usage("δ values must be finite and nonnegative"));
        }
        if let Some(n) = &self.n {
            if n.len() != self.a {
                return Err(CliError::usage(format!(
                    "group-size vector has {} entries but a = {}",
                    n.len(),
                    self.a
                )));
            }
        }
        let hypothesis = parse_hypothesis(&self.hypothesis)?;
        if self.alternative == Alternative::Shift
            && !matches!(hypothesis, HypothesisSpec::GrandMean | HypothesisSpec::Time)
        {
            return Err(CliError::usage(
                "the shift alternative only moves the grand mean, so it pairs with the \
                 grand-mean or time hypotheses",
            ));
        }
        Ok(())
    }
}

/// Rejection rate of one test at one effect size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    /// Effect size δ.
    pub delta: f64,
    /// Test name: `z`, `chi1`, or `kf`.
    pub test: String,
    /// Number of rejections.
    pub rejections: u64,
    /// Number of replications.
    pub replications: u64,
    /// `rejections / replications`.
    pub rate: f64,
    /// Binomial standard error `√(p̂(1−p̂)/reps)`.
    pub se: f64,
}

/// All rejection rates of one experiment plus the configuration echo.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// One row per (δ, test), δ-major, test order `z`, `chi1`, `kf`.
    pub rows: Vec<RateRow>,
    /// Replications per row.
    pub replications: u64,
    /// The configuration that produced the rows.
    pub config: SimConfig,
    /// Wall-clock duration of the run (not part of any serialized
    /// artifact, so outputs stay byte-identical across machines and
    /// thread counts).
    pub wall_seconds: f64,
}

impl SimResult {
    /// Rows for one test, in δ order.
    pub fn rows_for(&self, test: &str) -> Vec<&RateRow> {
        self.rows.iter().filter(|r| r.test == test).collect()
    }

    /// Diagnostic: is the empirical power nondecreasing in δ for this
    /// test, up to `slack` standard errors?
    pub fn monotone_in_delta(&self, test: &str, slack: f64) -> bool {
        let rows = self.rows_for(test);
        rows.windows(2).all(|w| {
            let allowed = slack * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
            w[1].rate >= w[0].rate - allowed
        })
    }
}

/// Builds the `a × d` mean table for an alternative: odd 1-based groups
/// are zero, even 1-based groups carry the pattern scaled by `δ`.
pub fn alternative_mean(kind: Alternative, delta: f64, a: usize, d: usize) -> DMatrix<f64> {
    let mut table = DMatrix::zeros(a, d);
    if kind == Alternative::Null || delta == 0.0 {
        return table;
    }
    for i in (1..a).step_by(2) {
        // 0-based odd rows are the even 1-based groups
        for t in 0..d {
            table[(i, t)] = match kind {
                Alternative::Null => 0.0,
                Alternative::Trend => delta * (t + 1) as f64 / d as f64,
                Alternative::OnePoint => {
                    if t == 0 {
                        delta
                    } else {
                        0.0
                    }
                }
                Alternative::Shift => delta,
            };
        }
    }
    table
}

/// Draws one dataset: `X_{i,j} = μ_i + L·z`, `z` a standard normal
/// `d`-vector from `stream`, `L` the lower Cholesky factor of `Σ`.
pub fn sample_dataset(
    design: &Design,
    means: &DMatrix<f64>,
    chol_l: &DMatrix<f64>,
    stream: &mut Stream,
) -> DataSet {
    let d = design.d();
    let mut z = DVector::zeros(d);
    let groups: Vec<DMatrix<f64>> = design
        .n()
        .iter()
        .enumerate()
        .map(|(i, &ni)| {
            let mut x = DMatrix::zeros(ni, d);
            for subject in 0..ni {
                for t in 0..d {
                    z[t] = stream.next_normal();
                }
                let noise = chol_l * &z;
                for t in 0..d {
                    x[(subject, t)] = means[(i, t)] + noise[t];
                }
            }
            x
        })
        .collect();
    DataSet::new(design.clone(), groups).expect("sampled groups match the design by construction")
}

/// Lower Cholesky factor of the materialized covariance.
fn cholesky_factor(cov: CovSpec, d: usize) -> Result<DMatrix<f64>> {
    let sigma = cov.model(d)?.materialize();
    let chol = nalgebra::Cholesky::new(sigma)
        .ok_or_else(|| CliError::usage("covariance matrix is not positive definite"))?;
    Ok(chol.l())
}

/// Per-replication RNG layout. Every replication owns substream `r` of
/// the master stream; within it, substream 0 drives the data draw and
/// substream 1 yields the seed passed to the test (which uses it for the
/// subsampled trace estimator). Effect sizes share replication streams,
/// so power curves use common random numbers across δ.
fn replication_streams(master: u64, r: u64) -> (Stream, u64) {
    let root = Stream::from_seed(master).substream(r);
    let data = root.substream(0);
    let test_seed = root.substream(1).next_u64();
    (data, test_seed)
}

fn rejection_counts(
    design: &Design,
    means: &DMatrix<f64>,
    chol_l: &DMatrix<f64>,
    hypothesis: &HypothesisSpec,
    alpha: f64,
    upsilon: f64,
    master: u64,
    replications: u64,
) -> Result<[u64; 3]> {
    (0..replications)
        .into_par_iter()
        .map(|r| -> Result<[u64; 3]> {
            let (mut data_stream, test_seed) = replication_streams(master, r);
            let dataset = sample_dataset(design, means, chol_l, &mut data_stream);
            let options = TestOptions { alpha, upsilon, seed: test_seed };
            let result = run_test(&dataset, hypothesis, &options)?;
            Ok([
                u64::from(result.reject_z),
                u64::from(result.reject_chi1),
                u64::from(result.reject_kf),
            ])
        })
        .try_reduce(
            || [0u64; 3],
            |x, y| Ok([x[0] + y[0], x[1] + y[1], x[2] + y[2]]),
        )
}

fn run_sim_inner(config: &SimConfig) -> Result<SimResult> {
    let started = Instant::now();
    config.validate()?;
    let n = config.group_sizes();
    let design = Design::new(n, config.d)?;
    let hypothesis = parse_hypothesis(&config.hypothesis)?;
    let chol_l = cholesky_factor(config.cov, config.d)?;

    let mut rows = Vec::with_capacity(config.delta_grid.len() * 3);
    for &delta in &config.delta_grid {
        let means = alternative_mean(config.alternative, delta, config.a, config.d);
        let counts = rejection_counts(
            &design,
            &means,
            &chol_l,
            &hypothesis,
            config.alpha,
            config.upsilon,
            config.seed,
            config.replications,
        )?;
        for (k, test) in ["z", "chi1", "kf"].iter().enumerate() {
            let rate = counts[k] as f64 / config.replications as f64;
            rows.push(RateRow {
                delta,
                test: (*test).to_string(),
                rejections: counts[k],
                replications: config.replications,
                rate,
                se: (rate * (1.0 - rate) / config.replications as f64).sqrt(),
            });
        }
    }

    Ok(SimResult {
        rows,
        replications: config.replications,
        config: config.clone(),
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs the experiment: for each δ and replication, sample a dataset,
/// run the test, and tally the three decisions. Covers both single-δ
/// type-I-error estimation and full power curves; with `threads` set the
/// work runs on a private pool of that size, otherwise on the global one.
/// Rates are identical for every thread count.
pub fn run_sim(config: &SimConfig) -> Result<SimResult> {
    match config.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
            pool.install(|| run_sim_inner(config))
        }
        None => run_sim_inner(config),
    }
}

/// Type-I-error estimation: `run_sim` for a (typically single-δ) null
/// configuration.
pub fn estimate_rejection_rate(config: &SimConfig) -> Result<SimResult> {
    run_sim(config)
}

/// Power sweep over the configured δ grid; identical engine, the δ = 0
/// entry is the type-I error of the same configuration.
pub fn power_curve(config: &SimConfig) -> Result<SimResult> {
    run_sim(config)
}

/// Simulates the known-covariance standardized statistic under the null:
/// one value per replication, ordered by replication index and
/// independent of thread count. Used to compare the finite-sample null
/// distribution against the weighted-chi-square limit representation.
pub fn simulate_w_null(
    design: &Design,
    cov: CovSpec,
    hypothesis: &HypothesisSpec,
    replications: u64,
    master: u64,
) -> Result<Vec<f64>> {
    let sigma = cov.model(design.d())?.materialize();
    let chol_l = cholesky_factor(cov, design.d())?;
    let pair = hypothesis.projection(design.a(), design.d())?;
    let zero_means = DMatrix::zeros(design.a(), design.d());
    (0..replications)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let (mut data_stream, _) = replication_streams(master, r);
            let dataset = sample_dataset(design, &zero_means, &chol_l, &mut data_stream);
            Ok(w_standardized(&dataset, pair.t_w(), pair.t_s(), &sigma)?)
        })
        .collect()
}

/// Two-sample Kolmogorov–Smirnov distance `sup |F̂₁ − F̂₂|`.
pub fn ks_distance(xs: &[f64], ys: &[f64]) -> f64 {
    assert!(!xs.is_empty() && !ys.is_empty(), "KS distance needs nonempty samples");
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_unstable_by(|p, q| p.partial_cmp(q).expect("no NaN in KS input"));
    b.sort_unstable_by(|p, q| p.partial_cmp(q).expect("no NaN in KS input"));
    let (mut i, mut j, mut sup) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        let gap = (i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs();
        if gap > sup {
            sup = gap;
        }
    }
    sup
}
