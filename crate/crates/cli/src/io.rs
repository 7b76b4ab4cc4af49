//! File formats: wide CSV datasets, JSON test reports, and the CSV/text
//! emitters for simulation results, `τ_P` tables, and limit diagnostics.
//!
//! Every writer is deterministic: identical inputs produce identical
//! bytes, with no clocks, locales, or map iteration anywhere.

use nalgebra::DMatrix;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use splitq_core::design::{DataSet, Design};
use splitq_core::engine::TestResult;
use splitq_core::estimators::C1Mode;
use splitq_core::limit::{ApproximationRow, RegimeReport, RegimeTag};

use crate::error::{CliError, Result};
use crate::sim::SimResult;
use crate::table::FpRow;

/// A parsed dataset plus the group labels it arrived with, so that
/// re-serialization preserves the file's vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// Group labels in first-appearance order, one per group.
    pub labels: Vec<String>,
    /// The numeric payload.
    pub data: DataSet,
}

/// Parses wide CSV: header `group,t1,…,td`, one row per subject. Groups
/// are ordered by first appearance; rows of one group need not be
/// contiguous. Errors carry 1-based (row, column) locations, counting
/// the header as row 1.
pub fn parse_dataset(text: &str) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(Ok(record)) => record,
        Some(Err(e)) => return Err(CliError::usage(format!("CSV header: {e}"))),
        None => {
            return Err(CliError::usage("empty input: expected a header row `group,t1,…,td`"))
        }
    };
    if header.len() < 2 || header.get(0).map(str::trim) != Some("group") {
        return Err(CliError::usage(
            "malformed header: expected `group,t1,…,td` with at least one time column",
        ));
    }
    for (k, field) in header.iter().enumerate().skip(1) {
        let expected = format!("t{k}");
        if field.trim() != expected {
            return Err(CliError::usage(format!(
                "malformed header: column {} is {:?}, expected {:?}",
                k + 1,
                field,
                expected
            )));
        }
    }
    let d = header.len() - 1;

    let mut labels: Vec<String> = Vec::new();
    let mut rows_by_group: Vec<Vec<Vec<f64>>> = Vec::new();
    for result in records {
        let record = result.map_err(|e| CliError::usage(format!("CSV: {e}")))?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != d + 1 {
            return Err(CliError::usage(format!(
                "row {row}: expected {} fields, found {}",
                d + 1,
                record.len()
            )));
        }
        let label = record.get(0).expect("length checked").to_string();
        let mut values = Vec::with_capacity(d);
        for (k, field) in record.iter().enumerate().skip(1) {
            let trimmed = field.trim();
            if trimmed.is_empty() {
                return Err(CliError::usage(format!(
                    "row {row}, column {}: missing value",
                    k + 1
                )));
            }
            let value: f64 = trimmed.parse().map_err(|_| {
                CliError::usage(format!(
                    "row {row}, column {}: not a number: {field:?}",
                    k + 1
                ))
            })?;
            values.push(value);
        }
        let group = match labels.iter().position(|l| l == &label) {
            Some(i) => i,
            None => {
                labels.push(label);
                rows_by_group.push(Vec::new());
                labels.len() - 1
            }
        };
        rows_by_group[group].push(values);
    }
    if labels.is_empty() {
        return Err(CliError::usage("no data rows after the header"));
    }

    let n: Vec<usize> = rows_by_group.iter().map(Vec::len).collect();
    let design = Design::new(n, d)?;
    let groups: Vec<DMatrix<f64>> = rows_by_group
        .into_iter()
        .map(|rows| DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]))
        .collect();
    Ok(LabeledDataset { labels, data: DataSet::new(design, groups)? })
}

/// Serializes a dataset to wide CSV. Numbers use the shortest
/// representation that parses back to the same double, so
/// `parse(write(ds))` reproduces `ds` exactly for finite values. Without
/// explicit labels groups are named 1, 2, ….
pub fn write_dataset(data: &DataSet, labels: Option<&[String]>) -> String {
    let design = data.design();
    if let Some(ls) = labels {
        assert_eq!(ls.len(), design.a(), "one label per group");
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = Vec::with_capacity(design.d() + 1);
    header.push("group".to_string());
    for t in 1..=design.d() {
        header.push(format!("t{t}"));
    }
    writer.write_record(&header).expect("in-memory CSV write");
    for i in 0..design.a() {
        let label = match labels {
            Some(ls) => ls[i].clone(),
            None => (i + 1).to_string(),
        };
        let x = data.group(i);
        for r in 0..x.nrows() {
            let mut row = Vec::with_capacity(design.d() + 1);
            row.push(label.clone());
            for c in 0..design.d() {
                row.push(x[(r, c)].to_string());
            }
            writer.write_record(&row).expect("in-memory CSV write");
        }
    }
    String::from_utf8(writer.into_inner().expect("in-memory CSV flush"))
        .expect("CSV output is UTF-8")
}

/// Estimated degrees of freedom in a report: a finite number, or the
/// string `"infinity"` when the order-6 trace estimate vanished (JSON has
/// no literal for infinities).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FHat(pub f64);

impl Serialize for FHat {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            serializer.serialize_f64(self.0)
        } else {
            serializer.serialize_str("infinity")
        }
    }
}

impl<'de> Deserialize<'de> for FHat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        struct FHatVisitor;
        impl Visitor<'_> for FHatVisitor {
            type Value = FHat;

            fn expecting(&self, f: &mut core::fmt::Formatter) -> core::fmt::Result {
                f.write_str("a number or the string \"infinity\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> core::result::Result<FHat, E> {
                Ok(FHat(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> core::result::Result<FHat, E> {
                Ok(FHat(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> core::result::Result<FHat, E> {
                Ok(FHat(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> core::result::Result<FHat, E> {
                if v == "infinity" {
                    Ok(FHat(f64::INFINITY))
                } else {
                    Err(E::custom(format!("unexpected degrees-of-freedom string {v:?}")))
                }
            }
        }
        deserializer.deserialize_any(FHatVisitor)
    }
}

/// Design block of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSummary {
    /// Number of groups.
    pub a: usize,
    /// Group sizes.
    pub n: Vec<usize>,
    /// Time points per subject.
    pub d: usize,
    /// `N = Σ n_i`.
    pub total: usize,
}

/// Statistic block of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticSummary {
    /// Quadratic form `Q_N`.
    pub q: f64,
    /// Standardized statistic `W_N`.
    pub w: f64,
}

/// Trace-estimate block of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSummary {
    /// Estimate of `tr(T_SΣ)`.
    pub a1: f64,
    /// Estimate of `tr((T_SΣ)²)`.
    pub a2: f64,
    /// Estimate of `tr((T_SΣ)³)`.
    pub c1: f64,
    /// `"exact"` or `"subsampled"`.
    pub c1_mode: String,
    /// Groups that entered the order-2 estimator.
    pub groups_a1: Vec<usize>,
    /// Groups that entered the order-4 estimator.
    pub groups_a2: Vec<usize>,
    /// Groups that entered the order-6 estimator.
    pub groups_c1: Vec<usize>,
}

/// Critical-value block of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalValues {
    /// Standard normal `z_{1−α}`.
    pub z: f64,
    /// Standardized single-chi-square value `(χ²_{1;1−α}−1)/√2`.
    pub chi1: f64,
    /// Data-calibrated `K_{f̂}` quantile.
    pub kf: f64,
}

/// Decision block of a report (`true` = reject).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decisions {
    /// Gaussian-limit test.
    pub z: bool,
    /// Single-chi-square-limit test.
    pub chi1: bool,
    /// Estimated-degrees-of-freedom test.
    pub kf: bool,
}

/// The complete structured result of one test run. Serializes to JSON
/// with 17 significant digits per float, so the document round-trips
/// losslessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    /// Crate version that produced the report.
    pub version: String,
    /// Design echo.
    pub design: DesignSummary,
    /// Hypothesis name.
    pub hypothesis: String,
    /// Significance level.
    pub alpha: f64,
    /// Subsampling fraction.
    pub upsilon: f64,
    /// Subsample seed.
    pub seed: u64,
    /// `Q_N` and `W_N`.
    pub statistic: StatisticSummary,
    /// Trace estimates behind the standardization.
    pub traces: TraceSummary,
    /// Estimated degrees of freedom (may be infinite).
    pub f_hat: FHat,
    /// The three critical values.
    pub critical_values: CriticalValues,
    /// Survival probability of `K_{f̂}` at `W_N`.
    pub p_value: f64,
    /// The three decisions.
    pub decisions: Decisions,
}

/// Assembles the report for one finished test run.
pub fn report_from_result(
    result: &TestResult,
    design: &Design,
    hypothesis: &str,
    upsilon: f64,
) -> ReportDocument {
    ReportDocument {
        version: env!("CARGO_PKG_VERSION").to_string(),
        design: DesignSummary {
            a: design.a(),
            n: design.n().to_vec(),
            d: design.d(),
            total: design.total(),
        },
        hypothesis: hypothesis.to_string(),
        alpha: result.alpha,
        upsilon,
        seed: result.seed,
        statistic: StatisticSummary { q: result.q, w: result.w },
        traces: TraceSummary {
            a1: result.traces.a1,
            a2: result.traces.a2,
            c1: result.traces.c1,
            c1_mode: match result.traces.c1_mode {
                C1Mode::Exact => "exact".to_string(),
                C1Mode::Subsampled => "subsampled".to_string(),
            },
            groups_a1: result.traces.groups_a1.clone(),
            groups_a2: result.traces.groups_a2.clone(),
            groups_c1: result.traces.groups_c1.clone(),
        },
        f_hat: FHat(result.f_hat),
        critical_values: CriticalValues {
            z: result.crit_z,
            chi1: result.crit_chi1,
            kf: result.crit_kf,
        },
        p_value: result.p_value,
        decisions: Decisions {
            z: result.reject_z,
            chi1: result.reject_chi1,
            kf: result.reject_kf,
        },
    }
}

/// JSON formatter writing every float as `{:.16e}` — 17 significant
/// digits, enough to reproduce any finite double exactly on re-parse.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes a report to JSON text (compact, 17-significant-digit
/// floats, byte-deterministic).
pub fn write_report_json(doc: &ReportDocument) -> String {
    let mut buffer = Vec::new();
    let mut serializer = serde_json::Serializer::with_formatter(&mut buffer, SciFormatter);
    doc.serialize(&mut serializer).expect("report serialization is infallible");
    String::from_utf8(buffer).expect("JSON is UTF-8")
}

/// Parses a report document back from JSON text.
pub fn parse_report_json(text: &str) -> Result<ReportDocument> {
    serde_json::from_str(text).map_err(|e| CliError::usage(format!("report JSON: {e}")))
}

fn decision_word(reject: bool) -> &'static str {
    if reject {
        "reject"
    } else {
        "retain"
    }
}

fn group_list(groups: &[usize]) -> String {
    let items: Vec<String> = groups.iter().map(|g| (g + 1).to_string()).collect();
    if items.is_empty() {
        "none".to_string()
    } else {
        items.join(", ")
    }
}

/// Renders the report as a short human-readable block for stdout.
pub fn human_summary(doc: &ReportDocument) -> String {
    let sizes: Vec<String> = doc.design.n.iter().map(|n| n.to_string()).collect();
    let f_hat = if doc.f_hat.0.is_finite() {
        format!("{:.6}", doc.f_hat.0)
    } else {
        "infinity".to_string()
    };
    format!(
        "design: a = {} groups, d = {} time points, n = ({}), N = {}\n\
         hypothesis: {}   (alpha = {}, upsilon = {}, seed = {})\n\
         Q_N = {:.6}\n\
         W_N = {:.6}\n\
         traces: A1 = {:.6}, A2 = {:.6}, C1 = {:.6} ({}; order-6 groups: {})\n\
         estimated degrees of freedom: f_hat = {}\n\
         critical values: z = {:.6}, chi1 = {:.6}, K_f = {:.6}\n\
         p-value (K_f) = {:.6}\n\
         decisions: z-limit {} | chi1-limit {} | estimated-f {}\n",
        doc.design.a,
        doc.design.d,
        sizes.join(", "),
        doc.design.total,
        doc.hypothesis,
        doc.alpha,
        doc.upsilon,
        doc.seed,
        doc.statistic.q,
        doc.statistic.w,
        doc.traces.a1,
        doc.traces.a2,
        doc.traces.c1,
        doc.traces.c1_mode,
        group_list(&doc.traces.groups_c1),
        f_hat,
        doc.critical_values.z,
        doc.critical_values.chi1,
        doc.critical_values.kf,
        doc.p_value,
        decision_word(doc.decisions.z),
        decision_word(doc.decisions.chi1),
        decision_word(doc.decisions.kf),
    )
}

/// Serializes simulation rates as CSV: `delta,test,rate,se,reps`.
pub fn write_sim_csv(result: &SimResult) -> String {
    let mut out = String::from("delta,test,rate,se,reps\n");
    for row in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.delta, row.test, row.rate, row.se, row.replications
        ));
    }
    out
}

/// Serializes a `τ_P` table as CSV: `d,a,tau_p` with 10 decimals.
pub fn write_fp_csv(rows: &[FpRow]) -> String {
    let mut out = String::from("d,a,tau_p\n");
    for row in rows {
        out.push_str(&format!("{},{},{:.10}\n", row.d, row.a, row.tau_p));
    }
    out
}

/// Stable kebab-case name of a limit-regime tag.
pub fn regime_name(tag: RegimeTag) -> &'static str {
    match tag {
        RegimeTag::Normal => "normal",
        RegimeTag::Chi1 => "chi1",
        RegimeTag::FiniteMixture => "finite-mixture",
        RegimeTag::InfiniteMixture => "infinite-mixture",
    }
}

/// Renders the limit diagnostics: classification plus the quantile
/// comparison between the simulated mixture and the `K_{f_P}`
/// approximation.
pub fn write_limit_report(
    regime: &RegimeReport,
    f_p: f64,
    spectrum_len: usize,
    rows: &[ApproximationRow],
) -> String {
    let r_eff = if regime.r_effective > spectrum_len {
        format!("> {spectrum_len} (mass cut not reached within the spectrum)")
    } else {
        regime.r_effective.to_string()
    };
    let mut out = format!(
        "limit-regime diagnostics\n\
         beta1 = {:.6}   (largest normalized spectral weight)\n\
         r_effective = {}   (prefix covering {:.0}% of squared spectral mass)\n\
         regime: {}\n\
         f_P = {:.6}, tau_P = {:.6}\n\n\
         {:>8}  {:>18}  {:>12}  {:>18}  {:>12}\n",
        regime.beta1,
        r_eff,
        regime.thresholds.mass_cut * 100.0,
        regime_name(regime.tag),
        f_p,
        1.0 / f_p,
        "alpha",
        "mixture quantile",
        "(se)",
        "K_{f_P} quantile",
        "gap",
    );
    for row in rows {
        out.push_str(&format!(
            "{:>8.4}  {:>18.6}  {:>12.6}  {:>18.6}  {:>12.6}\n",
            row.alpha, row.mixture.value, row.mixture.std_error, row.kf, row.gap
        ));
    }
    out
}
