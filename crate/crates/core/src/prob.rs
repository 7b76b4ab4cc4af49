//! Special functions and quantiles for the chi-square critical-value
//! machinery.
//!
//! Everything downstream (standardized chi-square quantiles, p-values, the
//! normal calibration limit) reduces to the regularized incomplete gamma
//! function and its inverse, so this module implements that small stack by
//! hand rather than pulling in a numerics dependency:
//!
//! * [`ln_gamma`] — Lanczos approximation (g = 7, 9 coefficients),
//!   accurate to ~1e-13 relative over the positive axis;
//! * [`reg_gamma_lower`] / [`reg_gamma_upper`] — power series for
//!   `x < s + 1`, Lentz continued fraction otherwise;
//! * [`chi2_cdf`] / [`chi2_quantile`] — the quantile inverts the CDF with a
//!   Wilson–Hilferty starting point refined by bracketed Newton steps, good
//!   to well below the 1e-8 absolute tolerance the critical-value layer
//!   assumes;
//! * [`normal_cdf`] / [`normal_quantile`] — the CDF rides on the incomplete
//!   gamma; the quantile is Wichura's PPND16 rational approximation,
//!   accurate to ~1e-16.
//!
//! Degrees of freedom are `f64` throughout: estimated degrees of freedom
//! are fractional by construction and may drift below 1.

use crate::error::{Error, Result};

/// ln(2π)/2, the constant term of the Stirling/Lanczos expansion.
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Lanczos coefficients for g = 7.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural logarithm of the gamma function for `x > 0`.
///
/// Values below 0.5 are routed through the reflection formula so the
/// Lanczos sum is only ever evaluated on its well-conditioned domain.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x)Γ(1−x) = π / sin(πx)
        let s = libm::sin(core::f64::consts::PI * x);
        return libm::log(core::f64::consts::PI / libm::fabs(s)) - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut sum = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (z + i as f64);
    }
    let base = z + 7.5;
    HALF_LN_TWO_PI + (z + 0.5) * libm::log(base) - base + libm::log(sum)
}

/// Series expansion of the regularized lower incomplete gamma `P(s, x)`,
/// valid (and fast) for `x < s + 1`.
fn gamma_series(s: f64, x: f64) -> f64 {
    let mut ap = s;
    let mut term = 1.0 / s;
    let mut sum = term;
    // Near x ≈ s the series needs O(√s) terms; the cap covers s up to ~1e7
    // (far beyond the point where callers switch to the normal limit).
    for _ in 0..40_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if libm::fabs(term) < libm::fabs(sum) * 1e-16 {
            break;
        }
    }
    sum * libm::exp(-x + s * libm::log(x) - ln_gamma(s))
}

/// Lentz continued fraction for the regularized upper incomplete gamma
/// `Q(s, x)`, valid for `x >= s + 1`.
fn gamma_continued_fraction(s: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    // Like the series, the fraction converges in O(√s) steps when x ≈ s.
    for i in 1..40_000 {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = b + an / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if libm::fabs(delta - 1.0) < 1e-16 {
            break;
        }
    }
    libm::exp(-x + s * libm::log(x) - ln_gamma(s)) * h
}

/// Regularized lower incomplete gamma `P(s, x)` for `s > 0`, `x >= 0`.
pub fn reg_gamma_lower(s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < s + 1.0 {
        gamma_series(s, x)
    } else {
        1.0 - gamma_continued_fraction(s, x)
    }
}

/// Regularized upper incomplete gamma `Q(s, x) = 1 − P(s, x)`.
///
/// Computed directly from the continued fraction in the tail, so it keeps
/// full relative accuracy where `P` saturates at 1.
pub fn reg_gamma_upper(s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < s + 1.0 {
        1.0 - gamma_series(s, x)
    } else {
        gamma_continued_fraction(s, x)
    }
}

/// Chi-square CDF with (possibly fractional) degrees of freedom `f > 0`.
pub fn chi2_cdf(x: f64, f: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        reg_gamma_lower(0.5 * f, 0.5 * x)
    }
}

/// Chi-square density, used as the Newton derivative inside the quantile.
fn chi2_pdf(x: f64, f: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let half_f = 0.5 * f;
    libm::exp((half_f - 1.0) * libm::log(x) - 0.5 * x - half_f * core::f64::consts::LN_2 - ln_gamma(half_f))
}

/// Chi-square quantile: the `p`-quantile of the chi-square distribution
/// with `f > 0` degrees of freedom.
///
/// Strategy: Wilson–Hilferty cube starting point, then a bracketed Newton
/// iteration on the CDF (falling back to bisection whenever a Newton step
/// leaves the bracket). Converges to ~1e-12 relative for all `f` met in
/// practice, comfortably inside the 1e-8 contract of the critical-value
/// layer.
pub fn chi2_quantile(p: f64, f: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability { name: "p", value: p });
    }
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::InvalidDegreesOfFreedom { f });
    }

    // Wilson–Hilferty: (χ²/f)^(1/3) is approximately normal.
    let z = normal_quantile(p)?;
    let t = 1.0 - 2.0 / (9.0 * f) + z * libm::sqrt(2.0 / (9.0 * f));
    let mut x = f * t * t * t;
    if !(x > 0.0) || !x.is_finite() {
        x = f; // harmless positive fallback; the bracket search fixes it up
    }

    // Establish a bracket [lo, hi] with cdf(lo) <= p <= cdf(hi).
    let mut lo = x;
    let mut hi = x;
    if chi2_cdf(x, f) < p {
        for _ in 0..200 {
            hi *= 2.0;
            if chi2_cdf(hi, f) >= p {
                break;
            }
            lo = hi;
        }
    } else {
        for _ in 0..200 {
            lo *= 0.5;
            if chi2_cdf(lo, f) <= p {
                break;
            }
            hi = lo;
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let err = chi2_cdf(x, f) - p;
        if err > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dens = chi2_pdf(x, f);
        let mut next = if dens > 0.0 { x - err / dens } else { x };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = libm::fabs(next - x);
        x = next;
        // Relative criteria: lower-tail quantiles of small-f chi-squares
        // live at 1e-14 and below, where any absolute floor is enormous.
        if step <= 1e-14 * x || hi - lo <= 1e-14 * x {
            break;
        }
    }
    Ok(x)
}

/// Standard normal CDF, evaluated through the incomplete gamma identity
/// `Φ(x) = 1 − Q(1/2, x²/2) / 2` for `x ≥ 0` (and symmetry below 0).
pub fn normal_cdf(x: f64) -> f64 {
    let tail = 0.5 * reg_gamma_upper(0.5, 0.5 * x * x);
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Standard normal quantile (inverse CDF) via Wichura's PPND16 rational
/// minimax approximation; absolute error below 1e-15 on (0, 1).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability { name: "p", value: p });
    }
    let q = p - 0.5;
    if libm::fabs(q) <= 0.425 {
        let r = 0.180_625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545_5e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return Ok(num / den);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = libm::sqrt(-libm::log(r));
    let val = if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -val } else { val })
}
