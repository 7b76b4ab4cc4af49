//! Exact `τ_P = 1/f_P` tables over a `(d, a)` grid.
//!
//! The sub-plot trace factor `tr³((T_SΣ)²)/tr²((T_SΣ)³)` depends only on
//! `d`, so it is computed once per dimension (that is where the `O(d³)`
//! matrix products live); the whole-plot factor `η` is recomputed per
//! group count, which costs only `O(a³)`.

use splitq_core::design::HypothesisSpec;
use splitq_core::kron::{eta, trace_powers, FpValue};

use crate::error::{CliError, Result};
use crate::sim::{default_group_sizes, CovSpec};

/// One cell of the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpRow {
    /// Dimension (time points).
    pub d: usize,
    /// Number of groups.
    pub a: usize,
    /// Third-moment-matching degrees of freedom.
    pub f_p: f64,
    /// `τ_P = 1/f_P`.
    pub tau_p: f64,
}

/// Group sizes for a table column: an explicit vector must cover the
/// largest `a` and is truncated per column; otherwise the default
/// benchmark sizes apply.
fn column_sizes(explicit: Option<&[usize]>, a: usize) -> Result<Vec<usize>> {
    match explicit {
        Some(n) => {
            if n.len() < a {
                return Err(CliError::usage(format!(
                    "group-size vector has {} entries but the grid asks for a = {}",
                    n.len(),
                    a
                )));
            }
            Ok(n[..a].to_vec())
        }
        None => Ok(default_group_sizes(a)),
    }
}

/// Computes `f_P` and `τ_P` for every `(d, a)` pair of the grid,
/// d-major. Matches `f_p_exact` cell by cell; the factorization merely
/// avoids recomputing the `d`-side traces for every `a`.
pub fn fp_table(
    d_list: &[usize],
    a_list: &[usize],
    cov: CovSpec,
    hypothesis: &HypothesisSpec,
    explicit_n: Option<&[usize]>,
) -> Result<Vec<FpRow>> {
    if d_list.is_empty() || a_list.is_empty() {
        return Err(CliError::usage("the (d, a) grid must be nonempty"));
    }
    let mut rows = Vec::with_capacity(d_list.len() * a_list.len());
    for &d in d_list {
        let sigma = cov.model(d)?.materialize();
        let mut sub_factor: Option<f64> = None;
        for &a in a_list {
            let n = column_sizes(explicit_n, a)?;
            let pair = hypothesis.projection(a, d)?;
            let sub = match sub_factor {
                Some(v) => v,
                None => {
                    let traces = trace_powers(pair.t_s(), &sigma)?;
                    if traces.t3 <= 0.0 {
                        return Err(splitq_core::Error::NullSpectrum.into());
                    }
                    let v = traces.t2.powi(3) / traces.t3.powi(2);
                    sub_factor = Some(v);
                    v
                }
            };
            let f_p = sub * eta(pair.t_w(), &n)?;
            rows.push(FpRow { d, a, f_p, tau_p: 1.0 / f_p });
        }
    }
    Ok(rows)
}

/// Single-cell convenience wrapper with the same semantics as the table.
pub fn fp_cell(
    d: usize,
    a: usize,
    cov: CovSpec,
    hypothesis: &HypothesisSpec,
    explicit_n: Option<&[usize]>,
) -> Result<FpValue> {
    let row = fp_table(&[d], &[a], cov, hypothesis, explicit_n)?;
    Ok(FpValue { f_p: row[0].f_p, tau_p: row[0].tau_p })
}
