//! Unbiased U-statistic estimators of `tr(T_S Σ)`, `tr((T_S Σ)²)` and
//! `tr((T_S Σ)³)`.
//!
//! All three estimators — `A₁` (order 2), `A₂` (order 4) and `C₁`
//! (order 6), plus the subsampled variant `C₁*` — are built from
//! within-group differences only, so they are exactly invariant under
//! group-mean shifts and need no model for the mean structure. Every
//! kernel evaluation reduces to a handful of entries of the per-group
//! Gram matrix
//!
//! ```text
//! G_i[ℓ, k] = X_{i,ℓ}ᵀ T_S X_{i,k},
//! ```
//!
//! because `T_S` is idempotent: a projected difference inner product
//! `(T_S(X_a − X_b))ᵀ (T_S(X_c − X_d))` expands into four `G` entries.
//! Building `G_i` costs one `O(n_i d²)` projection pass plus an
//! `O(n_i² d)` product; after that each order-4 or order-6 kernel term is
//! `O(1)`, which is what makes the sextic estimator usable at `d` in the
//! hundreds. Naive `d`-dimensional inner products inside the order-4/6
//! loops are deliberately absent from this path (they only appear as raw
//! oracles in tests).

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::design::{thresholds, DataSet, Design};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Per-group Gram matrices of the `T_S`-projected observations.
#[derive(Debug, Clone, PartialEq)]
pub struct GramCache {
    grams: Vec<DMatrix<f64>>,
}

impl GramCache {
    /// Gram matrix of group `i` (`n_i × n_i`).
    pub fn group(&self, i: usize) -> &DMatrix<f64> {
        &self.grams[i]
    }

    /// Number of groups.
    pub fn a(&self) -> usize {
        self.grams.len()
    }

    /// Group sizes `n_i`.
    pub fn sizes(&self) -> Vec<usize> {
        self.grams.iter().map(|g| g.nrows()).collect()
    }
}

/// Builds the Gram cache `G_i = X_i T_S X_iᵀ` for every group.
pub fn gram(dataset: &DataSet, t_s: &DMatrix<f64>) -> Result<GramCache> {
    let d = dataset.design().d();
    if t_s.nrows() != d || t_s.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "sub-plot factor vs data dimension",
            expected: (d, d),
            found: (t_s.nrows(), t_s.ncols()),
        });
    }
    let grams = dataset
        .groups()
        .iter()
        .map(|x| {
            let projected = x * t_s; // O(n d²)
            let g = &projected * x.transpose(); // O(n² d)
            (&g + g.transpose()) * 0.5
        })
        .collect();
    Ok(GramCache { grams })
}

/// Difference-kernel entry
/// `Λ(ab, cd) = (X_a − X_b)ᵀ T_S (X_c − X_d)` read off the Gram matrix.
#[inline]
fn lam(g: &DMatrix<f64>, a: usize, b: usize, c: usize, d: usize) -> f64 {
    g[(a, c)] - g[(a, d)] - g[(b, c)] + g[(b, d)]
}

/// Exact binomial coefficient in wide integer arithmetic.
fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    acc
}

/// Order-2 estimator of `tr(T_S Σ)`:
///
/// ```text
/// A₁ = Σ_i Σ_{ℓ₁<ℓ₂} (X_{i,ℓ₁}−X_{i,ℓ₂})ᵀ T_S (X_{i,ℓ₁}−X_{i,ℓ₂})
///      ─────────────────────────────────────────────────────────
///                        Σ_i n_i(n_i − 1)
/// ```
///
/// Groups with `n_i < 2` contribute to neither numerator nor denominator.
pub fn a1(gram: &GramCache) -> Result<f64> {
    let mut num = 0.0;
    let mut den: u128 = 0;
    for g in &gram.grams {
        let n = g.nrows();
        if n < thresholds::A1 {
            continue;
        }
        let mut sum = 0.0;
        for l1 in 0..n {
            for l2 in (l1 + 1)..n {
                sum += g[(l1, l1)] + g[(l2, l2)] - 2.0 * g[(l1, l2)];
            }
        }
        num += sum;
        den += (n * (n - 1)) as u128;
    }
    if den == 0 {
        return Err(Error::NoEligibleGroup { estimator: "A1", required: thresholds::A1 });
    }
    Ok(num / den as f64)
}

/// Order-4 estimator of `tr((T_S Σ)²)`:
///
/// ```text
/// A₂ = Σ_i Σ_{ℓ₁>ℓ₂, k₁>k₂, all four distinct}
///          [(X_{i,ℓ₁}−X_{i,ℓ₂})ᵀ T_S (X_{i,k₁}−X_{i,k₂})]²
///      ─────────────────────────────────────────────────────
///                      4 · 6 · Σ_i C(n_i, 4)
/// ```
///
/// Nonnegative by construction; `O(Σ n_i⁴)` kernel evaluations, each
/// `O(1)` via the Gram cache. Groups with `n_i < 4` are excluded.
pub fn a2(gram: &GramCache) -> Result<f64> {
    let mut num = 0.0;
    let mut quads: u128 = 0;
    for g in &gram.grams {
        let n = g.nrows();
        if n < thresholds::A2 {
            continue;
        }
        let mut sum = 0.0;
        for l1 in 1..n {
            for l2 in 0..l1 {
                for k1 in 1..n {
                    if k1 == l1 || k1 == l2 {
                        continue;
                    }
                    for k2 in 0..k1 {
                        if k2 == l1 || k2 == l2 {
                            continue;
                        }
                        let v = lam(g, l1, l2, k1, k2);
                        sum += v * v;
                    }
                }
            }
        }
        num += sum;
        quads += binomial(n, 4);
    }
    if quads == 0 {
        return Err(Error::NoEligibleGroup { estimator: "A2", required: thresholds::A2 });
    }
    Ok(num / (24.0 * quads as f64))
}

/// Advances a sorted index combination in lexicographic order; returns
/// `false` once exhausted.
fn next_combination(comb: &mut [usize; 6], n: usize) -> bool {
    let k = comb.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in (i + 1)..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// The three pairings of four sorted indices `q₀<q₁<q₂<q₃` into two pairs.
const REMAINING_MATCHINGS: [(usize, usize, usize, usize); 3] =
    [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)];

/// Sum of the order-6 cycle kernel over all 15 perfect matchings of all
/// 6-subsets of one group: the collapsed form of the ordered 6-tuple sum.
fn c1_group_sum(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    let mut comb: [usize; 6] = [0, 1, 2, 3, 4, 5];
    let mut total = 0.0;
    loop {
        // Matchings of the subset: the smallest element pairs with one of
        // the other five; the remaining four split in three ways.
        for j in 1..6 {
            let (p1a, p1b) = (comb[0], comb[j]);
            let mut q = [0usize; 4];
            let mut t = 0;
            for (m, &c) in comb.iter().enumerate().skip(1) {
                if m != j {
                    q[t] = c;
                    t += 1;
                }
            }
            for &(x, y, z, w) in &REMAINING_MATCHINGS {
                let (p2a, p2b) = (q[x], q[y]);
                let (p3a, p3b) = (q[z], q[w]);
                total += lam(g, p1a, p1b, p2a, p2b)
                    * lam(g, p2a, p2b, p3a, p3b)
                    * lam(g, p3a, p3b, p1a, p1b);
            }
        }
        if !next_combination(&mut comb, n) {
            return total;
        }
    }
}

/// Order-6 estimator of `tr((T_S Σ)³)` by full enumeration:
///
/// ```text
/// C₁ = Σ_i C_{i,1} / (6! · Σ_j C(n_j, 6)),
/// C_{i,1} = (1/8) Σ_{ℓ₁≠…≠ℓ₆} Λ(ℓ₁ℓ₂, ℓ₃ℓ₄) Λ(ℓ₃ℓ₄, ℓ₅ℓ₆) Λ(ℓ₅ℓ₆, ℓ₁ℓ₂).
/// ```
///
/// The ordered sum is never materialized: the cycle product is invariant
/// under swapping within each of the three pairs (two sign flips cancel)
/// and under permuting the pairs, so the `6! · C(n,6)` ordered tuples
/// collapse 48-fold onto 6-subsets × 15 perfect matchings, and
/// `C_{i,1} = 6 · Σ_{subsets} Σ_{matchings} (cycle product)`. Equality
/// with the raw ordered enumeration is locked in by test.
///
/// `term_cap` bounds the ordered-tuple count `Σ_i 6!·C(n_i, 6)`; beyond it
/// the error directs callers to [`c1_subsampled`].
pub fn c1_exact(gram: &GramCache, term_cap: u128) -> Result<f64> {
    let mut tuples: u128 = 0;
    let mut any = false;
    for g in &gram.grams {
        let n = g.nrows();
        if n < thresholds::C1 {
            continue;
        }
        any = true;
        tuples += 720 * binomial(n, 6);
    }
    if !any {
        return Err(Error::NoEligibleGroup { estimator: "C1", required: thresholds::C1 });
    }
    if tuples > term_cap {
        return Err(Error::TermCapExceeded { terms: tuples, cap: term_cap });
    }
    let mut num = 0.0;
    for g in &gram.grams {
        if g.nrows() < thresholds::C1 {
            continue;
        }
        num += 6.0 * c1_group_sum(g);
    }
    Ok(num / tuples as f64)
}

/// Default ordered-tuple budget for [`c1_exact`] (10⁸ kernel terms).
pub const DEFAULT_TERM_CAP: u128 = 100_000_000;

/// Subsampling plan for `C₁*`: the fraction `υ`, the seed, and the derived
/// per-group repetition counts `w_i = ⌈υ·C(n_i, 6)⌉` (0 for groups below
/// the order-6 threshold).
#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleConfig {
    upsilon: f64,
    seed: u64,
    w: Vec<u64>,
}

impl SubsampleConfig {
    /// Builds the plan for a design. `upsilon` must be a positive finite
    /// fraction.
    pub fn new(upsilon: f64, seed: u64, design: &Design) -> Result<Self> {
        if !(upsilon > 0.0) || !upsilon.is_finite() {
            return Err(Error::InvalidProbability { name: "upsilon", value: upsilon });
        }
        let w = design
            .n()
            .iter()
            .map(|&ni| {
                if ni < thresholds::C1 {
                    return 0;
                }
                let count = binomial(ni, 6) as f64;
                let x = upsilon * count;
                // A product that is an exact integer in real arithmetic can
                // land epsilon above it in floating point (υ itself is not
                // representable); back off one relative ulp-scale before
                // taking the ceiling so ⌈υ·C⌉ matches the exact value.
                let guarded = x - (x * 1e-12 + 1e-12);
                let w = libm::ceil(guarded);
                (w as u64).max(1)
            })
            .collect();
        Ok(SubsampleConfig { upsilon, seed, w })
    }

    /// The subsampling fraction `υ`.
    pub fn upsilon(&self) -> f64 {
        self.upsilon
    }

    /// The seed driving all subsample draws.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-group repetition counts `w_i` (0 = group ineligible).
    pub fn w(&self) -> &[u64] {
        &self.w
    }
}

/// Subsampled order-6 estimator `C₁*`:
///
/// ```text
/// C₁* = Σ_i Σ_{b=1}^{w_i} Λ₁(σ_i(b)) Λ₂(σ_i(b)) Λ₃(σ_i(b)) / (8 · Σ_j w_j)
/// ```
///
/// For each eligible group, `w_i` ordered 6-tuples of distinct subject
/// indices are drawn uniformly (independently across draws, duplicates
/// across draws allowed) from the substream `(seed, group index)`, so the
/// result is deterministic for a seed and independent of group iteration
/// order or thread count. Conditionally on the data each draw has mean
/// `8·C₁`-per-tuple, making `C₁*` unbiased for `tr((T_S Σ)³)`.
pub fn c1_subsampled(gram: &GramCache, config: &SubsampleConfig) -> Result<f64> {
    if config.w.len() != gram.a() {
        return Err(Error::DimensionMismatch {
            context: "subsample plan vs Gram cache groups",
            expected: (gram.a(), 1),
            found: (config.w.len(), 1),
        });
    }
    let root = Stream::from_seed(config.seed);
    let mut num = 0.0;
    let mut draws: u128 = 0;
    for (i, g) in gram.grams.iter().enumerate() {
        let n = g.nrows();
        let wi = config.w[i];
        if wi == 0 || n < thresholds::C1 {
            continue;
        }
        let mut stream = root.substream(i as u64);
        // Partial Fisher–Yates over a persistent index pool: each draw
        // shuffles fresh uniform picks into the first six slots, which is
        // uniform over ordered distinct 6-tuples from any starting
        // arrangement.
        let mut pool: Vec<usize> = (0..n).collect();
        let mut sum = 0.0;
        for _ in 0..wi {
            for t in 0..6 {
                let j = t + stream.next_index(n - t);
                pool.swap(t, j);
            }
            sum += lam(g, pool[0], pool[1], pool[2], pool[3])
                * lam(g, pool[2], pool[3], pool[4], pool[5])
                * lam(g, pool[4], pool[5], pool[0], pool[1]);
        }
        num += sum;
        draws += wi as u128;
    }
    if draws == 0 {
        return Err(Error::NoEligibleGroup { estimator: "C1*", required: thresholds::C1 });
    }
    Ok(num / (8.0 * draws as f64))
}

/// Degrees-of-freedom estimate `f̂ = (A₂³ / C₁²) · η`.
///
/// Total: a vanishing third-trace estimate (`|c1| < 1e-300`) returns the
/// `+∞` sentinel, meaning "normal-limit regime" — the critical-value layer
/// maps it to the standard normal quantile.
pub fn f_hat(a2: f64, c1: f64, eta: f64) -> f64 {
    if c1.abs() < 1e-300 {
        return f64::INFINITY;
    }
    (a2 * a2 * a2) / (c1 * c1) * eta
}

/// Which variant filled the `c1` slot of a [`TraceEstimates`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum C1Mode {
    /// Full enumeration over all 6-subsets.
    Exact,
    /// Subsampled with per-group repetition counts `w_i`.
    Subsampled,
}

/// The three trace estimates plus provenance: which groups were eligible
/// for (and therefore entered) each estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEstimates {
    /// Estimate of `tr(T_S Σ)`.
    pub a1: f64,
    /// Estimate of `tr((T_S Σ)²)`; nonnegative.
    pub a2: f64,
    /// Estimate of `tr((T_S Σ)³)` (may be negative in small samples).
    pub c1: f64,
    /// Whether `c1` came from full enumeration or subsampling.
    pub c1_mode: C1Mode,
    /// Groups entering `A₁` (those with `n_i ≥ 2`).
    pub groups_a1: Vec<usize>,
    /// Groups entering `A₂` (those with `n_i ≥ 4`).
    pub groups_a2: Vec<usize>,
    /// Groups entering the order-6 estimator (those with `n_i ≥ 6`).
    pub groups_c1: Vec<usize>,
}

fn eligible(sizes: &[usize], min: usize) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .filter_map(|(i, &n)| if n >= min { Some(i) } else { None })
        .collect()
}

/// Computes all three estimates with the subsampled `C₁*`.
pub fn estimate_traces(gram: &GramCache, config: &SubsampleConfig) -> Result<TraceEstimates> {
    let sizes = gram.sizes();
    Ok(TraceEstimates {
        a1: a1(gram)?,
        a2: a2(gram)?,
        c1: c1_subsampled(gram, config)?,
        c1_mode: C1Mode::Subsampled,
        groups_a1: eligible(&sizes, thresholds::A1),
        groups_a2: eligible(&sizes, thresholds::A2),
        groups_c1: eligible(&sizes, thresholds::C1),
    })
}

/// Computes all three estimates with the fully enumerated `C₁`.
pub fn estimate_traces_exact(gram: &GramCache, term_cap: u128) -> Result<TraceEstimates> {
    let sizes = gram.sizes();
    Ok(TraceEstimates {
        a1: a1(gram)?,
        a2: a2(gram)?,
        c1: c1_exact(gram, term_cap)?,
        c1_mode: C1Mode::Exact,
        groups_a1: eligible(&sizes, thresholds::A1),
        groups_a2: eligible(&sizes, thresholds::A2),
        groups_c1: eligible(&sizes, thresholds::C1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{DataSet, Design};
    use crate::kron::{centering_matrix, trace_powers, CovarianceModel};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn dataset(groups: Vec<DMatrix<f64>>) -> DataSet {
        let n: Vec<usize> = groups.iter().map(|g| g.nrows()).collect();
        let d = groups[0].ncols();
        DataSet::new(Design::new(n, d).unwrap(), groups).unwrap()
    }

    fn pseudo_group(n: usize, d: usize, phase: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |i, j| libm::sin(phase + (i * d + j) as f64 * 0.7) * 2.0)
    }

    /// N(0, Σ) group sampled through the Cholesky factor.
    fn gaussian_group(
        stream: &mut crate::rng::Stream,
        n: usize,
        chol_l: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let d = chol_l.nrows();
        let mut x = DMatrix::zeros(n, d);
        for r in 0..n {
            let z = nalgebra::DVector::from_fn(d, |_, _| stream.next_normal());
            let row = chol_l * z;
            for c in 0..d {
                x[(r, c)] = row[c];
            }
        }
        x
    }

    #[test]
    fn gram_matches_dense_oracle() {
        let x = pseudo_group(4, 3, 0.3);
        let t_s = centering_matrix(3).unwrap();
        let ds = dataset(vec![x.clone()]);
        let cache = gram(&ds, &t_s).unwrap();
        for l in 0..4 {
            for k in 0..4 {
                let dense = (x.row(l) * &t_s * x.row(k).transpose())[(0, 0)];
                assert_relative_eq!(cache.group(0)[(l, k)], dense, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn gram_rejects_mismatched_projection() {
        let ds = dataset(vec![pseudo_group(3, 4, 0.0)]);
        let t_s = centering_matrix(3).unwrap();
        assert!(matches!(gram(&ds, &t_s), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn a1_single_pair_hand_value() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let ds = dataset(vec![x]);
        let cache = gram(&ds, &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(a1(&cache).unwrap(), 0.5);
    }

    #[test]
    fn constant_groups_give_zero_estimates() {
        let x = DMatrix::from_fn(7, 3, |_, j| (j + 1) as f64);
        let ds = dataset(vec![x]);
        let cache = gram(&ds, &centering_matrix(3).unwrap()).unwrap();
        assert_eq!(a1(&cache).unwrap(), 0.0);
        assert_eq!(a2(&cache).unwrap(), 0.0);
        assert_eq!(c1_exact(&cache, DEFAULT_TERM_CAP).unwrap(), 0.0);
        let design = Design::new(vec![7], 3).unwrap();
        let cfg = SubsampleConfig::new(0.5, 11, &design).unwrap();
        assert_eq!(c1_subsampled(&cache, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn singleton_groups_are_excluded_from_a1() {
        // one singleton + one pair: only the pair contributes, denominator 2
        let single = DMatrix::from_row_slice(1, 2, &[9.0, 9.0]);
        let pair = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let ds = dataset(vec![single, pair]);
        let cache = gram(&ds, &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(a1(&cache).unwrap(), 0.5);
    }

    #[test]
    fn size_thresholds_produce_no_eligible_group_errors() {
        let ds = dataset(vec![pseudo_group(3, 2, 0.1)]);
        let cache = gram(&ds, &DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(a2(&cache), Err(Error::NoEligibleGroup { estimator: "A2", .. })));
        assert!(matches!(
            c1_exact(&cache, DEFAULT_TERM_CAP),
            Err(Error::NoEligibleGroup { estimator: "C1", .. })
        ));

        let singles = dataset(vec![DMatrix::from_row_slice(1, 2, &[0.0, 0.0])]);
        let cache1 = gram(&singles, &DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(a1(&cache1), Err(Error::NoEligibleGroup { estimator: "A1", .. })));
    }

    /// Raw ordered-enumeration oracle for one group: all 6!·C(n,6) ordered
    /// distinct tuples, cycle kernel from the Gram, divided by 8.
    fn c1_group_raw(g: &DMatrix<f64>) -> f64 {
        let n = g.nrows();
        let mut sum = 0.0;
        let idx: Vec<usize> = (0..n).collect();
        for &l1 in &idx {
            for &l2 in &idx {
                if l2 == l1 {
                    continue;
                }
                for &l3 in &idx {
                    if l3 == l1 || l3 == l2 {
                        continue;
                    }
                    for &l4 in &idx {
                        if [l1, l2, l3].contains(&l4) {
                            continue;
                        }
                        for &l5 in &idx {
                            if [l1, l2, l3, l4].contains(&l5) {
                                continue;
                            }
                            for &l6 in &idx {
                                if [l1, l2, l3, l4, l5].contains(&l6) {
                                    continue;
                                }
                                sum += lam(g, l1, l2, l3, l4)
                                    * lam(g, l3, l4, l5, l6)
                                    * lam(g, l5, l6, l1, l2);
                            }
                        }
                    }
                }
            }
        }
        sum / 8.0
    }

    #[test]
    fn c1_collapse_matches_raw_ordered_enumeration() {
        for (n, phase) in [(6usize, 0.2), (7, 1.4)] {
            let x = pseudo_group(n, 2, phase);
            let ds = dataset(vec![x]);
            let t_s = centering_matrix(2).unwrap();
            let cache = gram(&ds, &t_s).unwrap();
            let collapsed = c1_exact(&cache, DEFAULT_TERM_CAP).unwrap();
            let raw = c1_group_raw(cache.group(0)) / (720.0 * binomial(n, 6) as f64);
            assert_relative_eq!(collapsed, raw, max_relative = 1e-12);
        }
    }

    #[test]
    fn c1_exact_respects_the_term_cap() {
        let ds = dataset(vec![pseudo_group(8, 2, 0.5)]);
        let cache = gram(&ds, &DMatrix::identity(2, 2)).unwrap();
        // 720·C(8,6) = 20160 ordered tuples
        assert!(c1_exact(&cache, 20_160).is_ok());
        assert!(matches!(
            c1_exact(&cache, 20_159),
            Err(Error::TermCapExceeded { terms: 20_160, cap: 20_159 })
        ));
    }

    #[test]
    fn subsample_plan_matches_hand_ceilings() {
        let design = Design::new(vec![15, 15, 20, 35, 5], 3).unwrap();
        let cfg = SubsampleConfig::new(0.05, 123, &design).unwrap();
        // C(15,6)=5005 → 251; C(20,6)=38760 → 1938; C(35,6)=1623160 → 81158
        // (the last is exact in real arithmetic, so the ceiling must not be
        // bumped by floating-point excess); n=5 ineligible → 0.
        assert_eq!(cfg.w(), &[251, 251, 1938, 81_158, 0]);
        assert!(SubsampleConfig::new(0.0, 1, &design).is_err());
        assert!(SubsampleConfig::new(-0.2, 1, &design).is_err());

        // tiny fractions still give every eligible group at least one draw
        let tiny = SubsampleConfig::new(1e-9, 1, &design).unwrap();
        assert_eq!(tiny.w(), &[1, 1, 1, 1, 0]);
    }

    #[test]
    fn c1_subsampled_is_deterministic_in_the_seed() {
        let ds = dataset(vec![pseudo_group(9, 3, 0.8), pseudo_group(7, 3, 2.2)]);
        let t_s = centering_matrix(3).unwrap();
        let cache = gram(&ds, &t_s).unwrap();
        let design = Design::new(vec![9, 7], 3).unwrap();
        let cfg = SubsampleConfig::new(0.3, 77, &design).unwrap();
        let first = c1_subsampled(&cache, &cfg).unwrap();
        let second = c1_subsampled(&cache, &cfg).unwrap();
        assert_eq!(first, second);
        let other = SubsampleConfig::new(0.3, 78, &design).unwrap();
        assert_ne!(first, c1_subsampled(&cache, &other).unwrap());
    }

    #[test]
    fn f_hat_identities_and_sentinel() {
        assert_relative_eq!(f_hat(3.7, 3.7, 1.0), 3.7, max_relative = 1e-15);
        assert_eq!(f_hat(1.0, 0.0, 1.0), f64::INFINITY);
        // rank-one spectrum: a2 = λ², c1 = λ³ → f̂ = 1
        let l: f64 = 2.9;
        assert_relative_eq!(f_hat(l * l, l * l * l, 1.0), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn estimators_are_shift_invariant_within_groups() {
        let x = pseudo_group(8, 3, 0.4);
        let shift = nalgebra::RowDVector::from_row_slice(&[13.0, -4.0, 7.5]);
        let mut shifted = x.clone();
        for r in 0..8 {
            shifted.set_row(r, &(x.row(r) + &shift));
        }
        let t_s = centering_matrix(3).unwrap();
        let base = gram(&dataset(vec![x]), &t_s).unwrap();
        let moved = gram(&dataset(vec![shifted]), &t_s).unwrap();
        assert_relative_eq!(a1(&base).unwrap(), a1(&moved).unwrap(), max_relative = 1e-9);
        assert_relative_eq!(a2(&base).unwrap(), a2(&moved).unwrap(), max_relative = 1e-9);
        assert_relative_eq!(
            c1_exact(&base, DEFAULT_TERM_CAP).unwrap(),
            c1_exact(&moved, DEFAULT_TERM_CAP).unwrap(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn estimators_scale_with_the_right_powers() {
        let x = pseudo_group(7, 3, 1.1);
        let c = 2.0;
        let t_s = centering_matrix(3).unwrap();
        let base = gram(&dataset(vec![x.clone()]), &t_s).unwrap();
        let scaled = gram(&dataset(vec![x * c]), &t_s).unwrap();
        assert_relative_eq!(
            a1(&scaled).unwrap(),
            c.powi(2) * a1(&base).unwrap(),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            a2(&scaled).unwrap(),
            c.powi(4) * a2(&base).unwrap(),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            c1_exact(&scaled, DEFAULT_TERM_CAP).unwrap(),
            c.powi(6) * c1_exact(&base, DEFAULT_TERM_CAP).unwrap(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn estimators_are_permutation_invariant_within_groups() {
        let x = pseudo_group(7, 3, 0.9);
        let perm = [3usize, 0, 6, 1, 5, 2, 4];
        let mut shuffled = DMatrix::zeros(7, 3);
        for (to, &from) in perm.iter().enumerate() {
            shuffled.set_row(to, &x.row(from));
        }
        let t_s = centering_matrix(3).unwrap();
        let base = gram(&dataset(vec![x]), &t_s).unwrap();
        let moved = gram(&dataset(vec![shuffled]), &t_s).unwrap();
        // invariant up to floating-point reassociation of the term sums
        assert_relative_eq!(a1(&base).unwrap(), a1(&moved).unwrap(), max_relative = 1e-12);
        assert_relative_eq!(a2(&base).unwrap(), a2(&moved).unwrap(), max_relative = 1e-12);
        assert_relative_eq!(
            c1_exact(&base, DEFAULT_TERM_CAP).unwrap(),
            c1_exact(&moved, DEFAULT_TERM_CAP).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn estimate_traces_records_eligibility() {
        let ds = dataset(vec![
            pseudo_group(3, 2, 0.1),
            pseudo_group(5, 2, 0.2),
            pseudo_group(8, 2, 0.3),
        ]);
        let cache = gram(&ds, &centering_matrix(2).unwrap()).unwrap();
        let design = Design::new(vec![3, 5, 8], 2).unwrap();
        let cfg = SubsampleConfig::new(0.2, 5, &design).unwrap();
        let est = estimate_traces(&cache, &cfg).unwrap();
        assert_eq!(est.groups_a1, vec![0, 1, 2]);
        assert_eq!(est.groups_a2, vec![1, 2]);
        assert_eq!(est.groups_c1, vec![2]);
        assert_eq!(est.c1_mode, C1Mode::Subsampled);
        assert!(est.a2 >= 0.0);

        let exact = estimate_traces_exact(&cache, DEFAULT_TERM_CAP).unwrap();
        assert_eq!(exact.c1_mode, C1Mode::Exact);
        assert_eq!(exact.a1, est.a1);
    }

    /// Monte Carlo unbiasedness spot check against the exact trace powers;
    /// the acceptance suite runs the full-size version.
    #[test]
    fn estimators_are_unbiased_in_monte_carlo() {
        let d = 3;
        let reps = 2_000;
        let sigma = CovarianceModel::autoregressive(d, 0.6).unwrap().materialize();
        let t_s = centering_matrix(d).unwrap();
        let truth = trace_powers(&t_s, &sigma).unwrap();
        let chol_l = nalgebra::Cholesky::new(sigma.clone()).unwrap().l();
        let design = Design::new(vec![7, 6], d).unwrap();
        let cfg_proto = |seed| SubsampleConfig::new(0.5, seed, &design).unwrap();

        let mut root = Stream::from_seed(4242);
        let (mut s1, mut s2, mut s3, mut sstar) = (0.0, 0.0, 0.0, 0.0);
        let (mut q1, mut q2, mut q3, mut qstar) = (0.0, 0.0, 0.0, 0.0);
        for rep in 0..reps {
            let mut stream = root.substream(rep as u64);
            let groups =
                vec![gaussian_group(&mut stream, 7, &chol_l), gaussian_group(&mut stream, 6, &chol_l)];
            let ds = DataSet::new(design.clone(), groups).unwrap();
            let cache = gram(&ds, &t_s).unwrap();
            let v1 = a1(&cache).unwrap();
            let v2 = a2(&cache).unwrap();
            let v3 = c1_exact(&cache, DEFAULT_TERM_CAP).unwrap();
            let vstar = c1_subsampled(&cache, &cfg_proto(root.next_u64())).unwrap();
            s1 += v1;
            s2 += v2;
            s3 += v3;
            sstar += vstar;
            q1 += v1 * v1;
            q2 += v2 * v2;
            q3 += v3 * v3;
            qstar += vstar * vstar;
        }
        let m = reps as f64;
        let check = |sum: f64, sumsq: f64, truth: f64, label: &str| {
            let mean = sum / m;
            let var = (sumsq / m - mean * mean).max(0.0);
            let se = libm::sqrt(var / m);
            assert!(
                (mean - truth).abs() <= 4.0 * se,
                "{label}: mean {mean} vs truth {truth} (se {se})"
            );
        };
        check(s1, q1, truth.t1, "A1");
        check(s2, q2, truth.t2, "A2");
        check(s3, q3, truth.t3, "C1");
        check(sstar, qstar, truth.t3, "C1*");
    }
}
