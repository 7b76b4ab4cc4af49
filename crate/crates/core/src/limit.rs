//! The weighted-chi-square limit laws of the standardized statistic.
//!
//! Depending on how the normalized spectrum `β` of `T V_N T` behaves, the
//! null limit of `W̃_N` is
//!
//! * a standard normal when `β₁ → 0` (no eigenvalue dominates),
//! * the standardized single chi-square `(χ²₁ − 1)/√2` when `β₁ → 1`,
//! * and in between the mixture
//!
//! ```text
//! Σ_s β_s (C_s − 1)/√2 + √(1 − Σ_s β_s²) · Z,     C_s ~ χ²₁ i.i.d.,
//! ```
//!
//! where a truncated spectrum's missing mass becomes the Gaussian
//! remainder.
//!
//! This module classifies a spectrum into those regimes (a finite-`N`
//! heuristic — the theory only speaks about limits), samples the mixture
//! reproducibly, extracts Monte Carlo quantiles with bootstrap standard
//! errors, and tabulates how far the practical `K_f` critical values sit
//! from the exact mixture quantiles. The classification is advisory
//! diagnostics only: the test itself always calibrates through `K_f̂`.

use alloc::vec::Vec;

use crate::engine::kf_quantile;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Samples per RNG substream; fixing the chunk layout makes the generated
/// sample independent of how many workers draw it.
const CHUNK: usize = 4096;

/// Tolerance on `|Σβ² − 1|` for a spectrum that claims to be normalized.
const NORM_TOL: f64 = 1e-10;

/// Which limit law a spectrum is closest to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeTag {
    /// `β₁` below the low threshold: the normal limit.
    Normal,
    /// `β₁` above the high threshold: the single standardized chi-square.
    Chi1,
    /// A few eigenvalues carry the mass: finite chi-square mixture.
    FiniteMixture,
    /// No prefix of the spectrum reaches the mass cut (only possible for
    /// spectra longer than the mass search, kept for completeness).
    InfiniteMixture,
}

/// Classification thresholds; the defaults mirror the advisory choices
/// documented with [`classify_regime`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeThresholds {
    /// `β₁ ≤ low` tags the normal regime (boundary inclusive).
    pub low: f64,
    /// `β₁ ≥ high` tags the single-chi-square regime.
    pub high: f64,
    /// Cumulative squared mass at which the spectrum counts as exhausted.
    pub mass_cut: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds { low: 0.05, high: 0.95, mass_cut: 0.99 }
    }
}

/// Where in the limit landscape a spectrum sits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    /// Largest normalized eigenvalue.
    pub beta1: f64,
    /// Smallest `r` with `Σ_{s≤r} β_s² ≥ mass_cut` (`len + 1` when no
    /// prefix reaches it).
    pub r_effective: usize,
    /// The regime tag.
    pub tag: RegimeTag,
    /// The thresholds this report was produced with.
    pub thresholds: RegimeThresholds,
}

/// Classifies a normalized spectrum into a limit regime.
///
/// Finite-`N` heuristic: the theory gives asymptotic statements only, so
/// the thresholds are reporting conventions, never inputs to a critical
/// value.
pub fn classify_regime(betas: &[f64], thresholds: &RegimeThresholds) -> Result<RegimeReport> {
    if betas.is_empty() {
        return Err(Error::EmptyDimension { context: "spectrum length" });
    }
    for t in [thresholds.low, thresholds.high, thresholds.mass_cut] {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidProbability { name: "regime threshold", value: t });
        }
    }
    let sum_sq: f64 = betas.iter().map(|b| b * b).sum();
    if !((sum_sq - 1.0).abs() <= NORM_TOL) {
        return Err(Error::UnnormalizedSpectrum { sum_of_squares: sum_sq });
    }
    let beta1 = betas.iter().copied().fold(0.0, f64::max);
    let mut r_effective = betas.len() + 1;
    let mut mass = 0.0;
    for (s, b) in betas.iter().enumerate() {
        mass += b * b;
        if mass >= thresholds.mass_cut {
            r_effective = s + 1;
            break;
        }
    }
    let tag = if beta1 <= thresholds.low {
        RegimeTag::Normal
    } else if beta1 >= thresholds.high {
        RegimeTag::Chi1
    } else if r_effective <= betas.len() {
        RegimeTag::FiniteMixture
    } else {
        RegimeTag::InfiniteMixture
    };
    Ok(RegimeReport { beta1, r_effective, tag, thresholds: *thresholds })
}

/// Draws `m_samples` i.i.d. realizations of the mixture limit
/// `Σ_s β_s (C_s − 1)/√2 + √(max(0, 1 − Σβ²)) · Z`.
///
/// An empty `betas` with unit remainder is the pure-Gaussian branch; a
/// spectrum with `Σβ² = 1` has no Gaussian part. Sampling is chunked —
/// samples `[c·4096, (c+1)·4096)` come from substream `(seed, c)` — so the
/// output is reproducible and independent of any parallel work split.
pub fn sample_mixture(betas: &[f64], m_samples: usize, seed: u64) -> Result<Vec<f64>> {
    let sum_sq: f64 = betas.iter().map(|b| b * b).sum();
    if !(sum_sq <= 1.0 + NORM_TOL) || !sum_sq.is_finite() {
        return Err(Error::UnnormalizedSpectrum { sum_of_squares: sum_sq });
    }
    let remainder = libm::sqrt((1.0 - sum_sq).max(0.0));
    let inv_sqrt2 = core::f64::consts::FRAC_1_SQRT_2;
    let root = Stream::from_seed(seed);
    let mut out = Vec::with_capacity(m_samples);
    let chunks = m_samples.div_ceil(CHUNK);
    for c in 0..chunks {
        let mut stream = root.substream(c as u64);
        let count = CHUNK.min(m_samples - c * CHUNK);
        for _ in 0..count {
            let mut x = 0.0;
            for &b in betas {
                x += b * (stream.next_chi2_1() - 1.0) * inv_sqrt2;
            }
            if remainder > 0.0 {
                x += remainder * stream.next_normal();
            }
            out.push(x);
        }
    }
    Ok(out)
}

/// An empirical quantile and its bootstrap standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileEstimate {
    /// The empirical `1−α` quantile.
    pub value: f64,
    /// Bootstrap standard error of that order statistic.
    pub std_error: f64,
}

/// Minimum Monte Carlo budget for quantile estimation.
const MIN_QUANTILE_SAMPLES: usize = 100_000;

/// Bootstrap replicates for the quantile standard error.
const BOOTSTRAP_REPS: usize = 200;

/// Substream id reserved for bootstrap resampling (sample chunks use
/// consecutive small ids).
const BOOTSTRAP_STREAM: u64 = u64::MAX;

/// The `⌈(1−α)m⌉`-th order statistic of an ascending-sorted sample.
fn sorted_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let m = sorted.len();
    let rank = libm::ceil((1.0 - alpha) * m as f64) as usize;
    sorted[rank.clamp(1, m) - 1]
}

/// Rank-resampling bootstrap: the order statistic's rank under resampling
/// is Binomial(m, 1−α), approximated by its normal limit; the spread of
/// the corresponding sample values estimates the quantile's standard
/// error without re-sorting 200 resamples.
fn bootstrap_se(sorted: &[f64], alpha: f64, stream: &mut Stream) -> f64 {
    let m = sorted.len() as f64;
    let p = 1.0 - alpha;
    let sd = libm::sqrt(m * p * alpha);
    let mut values = [0.0; BOOTSTRAP_REPS];
    for v in values.iter_mut() {
        let rank = libm::round(m * p + sd * stream.next_normal());
        let rank = (rank.max(1.0) as usize).min(sorted.len());
        *v = sorted[rank - 1];
    }
    let mean: f64 = values.iter().sum::<f64>() / BOOTSTRAP_REPS as f64;
    let var: f64 =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (BOOTSTRAP_REPS - 1) as f64;
    libm::sqrt(var)
}

/// Monte Carlo `1−α` quantile of the mixture limit with a bootstrap
/// standard error.
pub fn mixture_quantile(
    betas: &[f64],
    alpha: f64,
    m_samples: usize,
    seed: u64,
) -> Result<QuantileEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidProbability { name: "alpha", value: alpha });
    }
    if m_samples < MIN_QUANTILE_SAMPLES {
        return Err(Error::SampleBudgetTooSmall { m: m_samples, required: MIN_QUANTILE_SAMPLES });
    }
    let mut sample = sample_mixture(betas, m_samples, seed)?;
    sample.sort_unstable_by(|x, y| x.partial_cmp(y).expect("mixture draws are finite"));
    let value = sorted_quantile(&sample, alpha);
    let mut boot = Stream::from_seed(seed).substream(BOOTSTRAP_STREAM);
    let std_error = bootstrap_se(&sample, alpha, &mut boot);
    Ok(QuantileEstimate { value, std_error })
}

/// One row of the `K_f` approximation-error table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproximationRow {
    /// Level the quantiles were compared at.
    pub alpha: f64,
    /// Monte Carlo quantile of the exact mixture limit.
    pub mixture: QuantileEstimate,
    /// The practical critical value `kf_quantile(f_p, alpha)`.
    pub kf: f64,
    /// Signed gap `mixture − kf`: positive means `K_f` is liberal here.
    pub gap: f64,
}

/// Quantifies `|mixture quantile − K_{f_P} quantile|` across levels.
///
/// One mixture sample is drawn and sorted once, then read at every level;
/// each row's bootstrap uses its own substream. In the two regimes where
/// `K_f` is exact — a single eigenvalue (`f_P = 1`) and equal eigenvalues
/// (the mixture *is* `K_f`) — the gaps are pure Monte Carlo noise; between
/// them the table measures the real third-moment-matching error.
pub fn approximation_error(
    betas: &[f64],
    f_p: f64,
    alpha_grid: &[f64],
    m_samples: usize,
    seed: u64,
) -> Result<Vec<ApproximationRow>> {
    if m_samples < MIN_QUANTILE_SAMPLES {
        return Err(Error::SampleBudgetTooSmall { m: m_samples, required: MIN_QUANTILE_SAMPLES });
    }
    let mut sample = sample_mixture(betas, m_samples, seed)?;
    sample.sort_unstable_by(|x, y| x.partial_cmp(y).expect("mixture draws are finite"));
    let mut rows = Vec::with_capacity(alpha_grid.len());
    for (row, &alpha) in alpha_grid.iter().enumerate() {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidProbability { name: "alpha", value: alpha });
        }
        let value = sorted_quantile(&sample, alpha);
        let mut boot = Stream::from_seed(seed).substream(BOOTSTRAP_STREAM - row as u64);
        let std_error = bootstrap_se(&sample, alpha, &mut boot);
        let kf = kf_quantile(f_p, alpha)?;
        rows.push(ApproximationRow {
            alpha,
            mixture: QuantileEstimate { value, std_error },
            kf,
            gap: value - kf,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn defaults() -> RegimeThresholds {
        RegimeThresholds::default()
    }

    #[test]
    fn classify_single_eigenvalue_is_chi1() {
        let report = classify_regime(&[1.0], &defaults()).unwrap();
        assert_eq!(report.tag, RegimeTag::Chi1);
        assert_eq!(report.r_effective, 1);
        assert_relative_eq!(report.beta1, 1.0);
    }

    #[test]
    fn classify_uniform_spectrum_is_normal_at_the_boundary() {
        // 400 equal values of 1/20: β₁ = 0.05 sits exactly on the inclusive
        // low threshold
        let betas = alloc::vec![0.05; 400];
        let report = classify_regime(&betas, &defaults()).unwrap();
        assert_eq!(report.tag, RegimeTag::Normal);
        // In real arithmetic the 0.99 mass cut is hit exactly at r = 396;
        // 1/20 is not representable, so accumulation may need one more term.
        assert!((396..=397).contains(&report.r_effective), "r = {}", report.r_effective);

        // a dyadic spectrum makes the prefix sums exact: 256 values of 1/16,
        // 0.99/0.00390625 = 253.44 → r = 254
        let dyadic = alloc::vec![0.0625; 256];
        let report = classify_regime(&dyadic, &defaults()).unwrap();
        assert_eq!(report.tag, RegimeTag::FiniteMixture);
        assert_eq!(report.r_effective, 254);
    }

    #[test]
    fn classify_two_point_spectrum_is_a_finite_mixture() {
        let report = classify_regime(&[0.8, 0.6], &defaults()).unwrap();
        assert_eq!(report.tag, RegimeTag::FiniteMixture);
        assert_eq!(report.r_effective, 2);
        assert_relative_eq!(report.beta1, 0.8);
    }

    #[test]
    fn classify_rejects_unnormalized_spectra() {
        assert!(matches!(
            classify_regime(&[0.5, 0.5], &defaults()),
            Err(Error::UnnormalizedSpectrum { .. })
        ));
        assert!(classify_regime(&[], &defaults()).is_err());
    }

    #[test]
    fn sample_mixture_is_chunk_deterministic() {
        let betas = [0.8, 0.6];
        let long = sample_mixture(&betas, 2 * CHUNK + 100, 33).unwrap();
        let short = sample_mixture(&betas, CHUNK, 33).unwrap();
        assert_eq!(&long[..CHUNK], &short[..]);
        let again = sample_mixture(&betas, 2 * CHUNK + 100, 33).unwrap();
        assert_eq!(long, again);
        let other = sample_mixture(&betas, CHUNK, 34).unwrap();
        assert_ne!(&long[..CHUNK], &other[..]);
    }

    #[test]
    fn sample_mixture_rejects_excess_mass() {
        assert!(matches!(
            sample_mixture(&[0.9, 0.6], 10, 1),
            Err(Error::UnnormalizedSpectrum { .. })
        ));
    }

    #[test]
    fn mixture_moments_match_for_a_full_spectrum() {
        let m = 1_000_000;
        for betas in [&[1.0][..], &[0.8, 0.6][..]] {
            let sample = sample_mixture(betas, m, 7).unwrap();
            let mf = m as f64;
            let mean: f64 = sample.iter().sum::<f64>() / mf;
            let var: f64 = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / mf;
            assert!(mean.abs() <= 4.0 / libm::sqrt(mf), "mean {mean} for {betas:?}");
            assert!((var - 1.0).abs() <= 10.0 / libm::sqrt(mf), "var {var} for {betas:?}");
        }
    }

    #[test]
    fn pure_gaussian_branch_has_unit_variance() {
        let m = 1_000_000;
        let sample = sample_mixture(&[], m, 19).unwrap();
        let mf = m as f64;
        let mean: f64 = sample.iter().sum::<f64>() / mf;
        let var: f64 = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / mf;
        assert!(var > 0.99 && var < 1.01, "variance {var}");
    }

    #[test]
    fn mixture_third_moment_matches_the_closed_form() {
        // E[X³] = √8 · Σβ³ for a full spectrum: (0.8, 0.6) → 2.0590949…
        let m = 2_000_000;
        let sample = sample_mixture(&[0.8, 0.6], m, 23).unwrap();
        let mf = m as f64;
        let m3: f64 = sample.iter().map(|x| x * x * x).sum::<f64>() / mf;
        let m6: f64 = sample.iter().map(|x| x.powi(6)).sum::<f64>() / mf;
        let want = 2.059_094_946_815_226_5;
        let se = libm::sqrt((m6 - m3 * m3).max(0.0) / mf);
        assert!(
            (m3 - want).abs() <= 4.0 * se,
            "third moment {m3} vs {want} (se {se})"
        );
    }

    #[test]
    fn single_chi_square_quantile_matches_the_closed_form() {
        let q = mixture_quantile(&[1.0], 0.05, 1_000_000, 40).unwrap();
        assert!((q.value - 2.009_214_9).abs() <= 0.02, "quantile {}", q.value);
        assert!(q.std_error > 0.0 && q.std_error < 0.05);
    }

    #[test]
    fn pure_gaussian_quantile_matches_the_normal() {
        let q = mixture_quantile(&[], 0.05, 1_000_000, 41).unwrap();
        assert!((q.value - 1.644_853_6).abs() <= 0.01, "quantile {}", q.value);
    }

    #[test]
    fn two_point_quantile_sits_between_the_endpoints() {
        let q = mixture_quantile(&[0.8, 0.6], 0.05, 400_000, 42).unwrap();
        assert!(q.value > 1.645 && q.value < 2.009, "quantile {}", q.value);
    }

    #[test]
    fn mixture_quantile_is_monotone_in_alpha() {
        // same seed → same sorted sample → exact monotonicity
        let qs: Vec<f64> = [0.01, 0.05, 0.1, 0.25]
            .iter()
            .map(|&a| mixture_quantile(&[0.8, 0.6], a, 200_000, 5).unwrap().value)
            .collect();
        assert!(qs.windows(2).all(|w| w[0] >= w[1]), "{qs:?}");
    }

    #[test]
    fn quantile_budget_is_enforced() {
        assert!(matches!(
            mixture_quantile(&[1.0], 0.05, 50_000, 1),
            Err(Error::SampleBudgetTooSmall { .. })
        ));
    }

    #[test]
    fn approximation_error_vanishes_in_the_exact_regimes() {
        let grid = [0.01, 0.05, 0.1];
        // single eigenvalue: K₁ is the limit itself
        for row in approximation_error(&[1.0], 1.0, &grid, 400_000, 50).unwrap() {
            assert!(
                row.gap.abs() <= 4.0 * row.mixture.std_error.max(1e-3),
                "chi1 regime gap {} at alpha {}",
                row.gap,
                row.alpha
            );
        }
        // 500 equal eigenvalues: the mixture IS K₅₀₀ (f_P = 500 exactly)
        let betas = alloc::vec![1.0 / libm::sqrt(500.0); 500];
        for row in approximation_error(&betas, 500.0, &grid, 200_000, 51).unwrap() {
            assert!(
                row.gap.abs() <= 4.0 * row.mixture.std_error.max(1e-3),
                "uniform regime gap {} at alpha {}",
                row.gap,
                row.alpha
            );
        }
    }

    #[test]
    fn approximation_error_is_real_between_the_regimes() {
        // (0.8, 0.6): the third-moment match leaves a genuine deficit of
        // ≈ −0.008 at α = 0.05 (K_f slightly conservative); the quantile
        // standard error is ≈ 0.001 at 2·10⁷ draws, enough to resolve it.
        let f_p = 1.886_849_414_321_941_4;
        let rows = approximation_error(&[0.8, 0.6], f_p, &[0.05], 20_000_000, 52).unwrap();
        let row = &rows[0];
        assert_relative_eq!(row.gap, row.mixture.value - row.kf, epsilon = 1e-15);
        assert!(
            row.gap < 0.0 && row.gap.abs() > 4.0 * row.mixture.std_error,
            "gap {} se {}",
            row.gap,
            row.mixture.std_error
        );
        assert!(row.gap.abs() < 0.02, "gap {} implausibly large", row.gap);
    }
}
