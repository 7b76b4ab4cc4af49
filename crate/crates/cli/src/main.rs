//! The `splitq` command line: `test`, `simulate`, `fp-table`, and
//! `limit` subcommands.
//!
//! Exit codes: 0 on success (whatever the statistical decision), 2 for
//! input or infeasibility errors, 1 for runtime failures. The
//! `SPLITQ_THREADS` environment variable sets the default worker count;
//! a `--threads` flag overrides it. Timing goes to stderr only, so
//! stdout and file artifacts are byte-reproducible.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use splitq::error::{CliError, Result};
use splitq::io;
use splitq::plot::{line_plot, Series};
use splitq::sim::{
    self, default_group_sizes, parse_hypothesis, Alternative, CovSpec, SimConfig,
};
use splitq::table;
use splitq_core::design::{validate_design, Design};
use splitq_core::engine::{run_test, TestOptions};
use splitq_core::kron::{f_p_exact, spectrum_tvt};
use splitq_core::limit::{approximation_error, classify_regime, RegimeThresholds};

#[derive(Parser)]
#[command(
    name = "splitq",
    version,
    about = "Mean-vector tests for split-plot designs: quadratic-form statistics with \
             estimated degrees of freedom, plus simulation and limit diagnostics"
)]
struct Cli {
    /// Worker threads for parallel commands (default: SPLITQ_THREADS or
    /// all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the test on a wide-format CSV dataset.
    Test(TestArgs),
    /// Monte Carlo rejection rates and power curves.
    Simulate(SimulateArgs),
    /// Exact tau_P = 1/f_P over a (d, a) grid.
    FpTable(FpTableArgs),
    /// Limit-regime diagnostics: spectrum, classification, quantile gaps.
    Limit(LimitArgs),
}

#[derive(Args)]
struct TestArgs {
    /// CSV file with header `group,t1,...,td`, one row per subject.
    #[arg(long)]
    data: PathBuf,
    /// Hypothesis: group, time, interaction, or grand-mean.
    #[arg(long)]
    hypothesis: String,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Subsampling fraction for the order-6 trace estimator.
    #[arg(long, default_value_t = 0.05)]
    upsilon: f64,
    /// Seed for the subsample draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the full JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file holding a complete simulation config (alternative to
    /// the inline flags below).
    #[arg(long, conflicts_with_all = ["a", "d", "n", "cov", "hypothesis", "alt", "delta_grid", "reps", "alpha", "upsilon", "seed"])]
    config: Option<PathBuf>,
    /// Number of groups.
    #[arg(long)]
    a: Option<usize>,
    /// Number of time points.
    #[arg(long)]
    d: Option<usize>,
    /// Comma-separated group sizes (default: benchmark vector).
    #[arg(long)]
    n: Option<String>,
    /// Covariance: identity, ar:RHO, or cs:RHO.
    #[arg(long, default_value = "ar:0.6")]
    cov: String,
    /// Hypothesis: group, time, interaction, or grand-mean.
    #[arg(long)]
    hypothesis: Option<String>,
    /// Alternative: null, trend, one-point, or shift.
    #[arg(long, default_value = "null")]
    alt: String,
    /// Comma-separated effect sizes.
    #[arg(long, default_value = "0")]
    delta_grid: String,
    /// Monte Carlo replications per effect size.
    #[arg(long, default_value_t = 2_000)]
    reps: u64,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Subsampling fraction.
    #[arg(long, default_value_t = 0.05)]
    upsilon: f64,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the rate table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG line plot (rate vs delta, one curve per test).
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct FpTableArgs {
    /// Comma-separated dimensions.
    #[arg(long, default_value = "5,50,200,600")]
    d: String,
    /// Group counts: comma list or inclusive range `2..12`.
    #[arg(long, default_value = "2..12")]
    a: String,
    /// Covariance: identity, ar:RHO, or cs:RHO.
    #[arg(long, default_value = "ar:0.6")]
    cov: String,
    /// Comma-separated group sizes covering the largest `a` (default:
    /// benchmark vector).
    #[arg(long)]
    n: Option<String>,
    /// Hypothesis: group, time, interaction, or grand-mean.
    #[arg(long, default_value = "interaction")]
    hypothesis: String,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LimitArgs {
    /// Number of groups.
    #[arg(long)]
    a: usize,
    /// Number of time points.
    #[arg(long)]
    d: usize,
    /// Comma-separated group sizes (default: benchmark vector).
    #[arg(long)]
    n: Option<String>,
    /// Covariance: identity, ar:RHO, or cs:RHO.
    #[arg(long, default_value = "ar:0.6")]
    cov: String,
    /// Hypothesis: group, time, interaction, or grand-mean.
    #[arg(long)]
    hypothesis: String,
    /// Comma-separated levels for the quantile comparison.
    #[arg(long, default_value = "0.01,0.05,0.1")]
    alpha_grid: String,
    /// Monte Carlo draws for the mixture quantiles (min 100000).
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    /// Seed for the mixture draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    };
    std::process::exit(code);
}

fn env_threads() -> Result<Option<usize>> {
    match std::env::var("SPLITQ_THREADS") {
        Ok(text) => {
            let value: usize = text.trim().parse().map_err(|_| {
                CliError::usage(format!("SPLITQ_THREADS must be a positive integer, got {text:?}"))
            })?;
            if value == 0 {
                return Err(CliError::usage("SPLITQ_THREADS must be at least 1"));
            }
            Ok(Some(value))
        }
        Err(_) => Ok(None),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let threads = match cli.threads {
        Some(t) if t == 0 => return Err(CliError::usage("--threads must be at least 1")),
        Some(t) => Some(t),
        None => env_threads()?,
    };
    match cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Simulate(args) => cmd_simulate(args, threads),
        Command::FpTable(args) => cmd_fp_table(args),
        Command::Limit(args) => cmd_limit(args),
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("invalid {what} entry: {part:?}")))
        })
        .collect()
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    let trimmed = text.trim();
    if let Some((lo, hi)) = trimmed.split_once("..") {
        let lo: usize = lo
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("invalid {what} range start: {lo:?}")))?;
        let hi: usize = hi
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("invalid {what} range end: {hi:?}")))?;
        if hi < lo {
            return Err(CliError::usage(format!("empty {what} range {lo}..{hi}")));
        }
        return Ok((lo..=hi).collect());
    }
    trimmed
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| CliError::usage(format!("invalid {what} entry: {part:?}")))
        })
        .collect()
}

fn cmd_test(args: TestArgs) -> Result<()> {
    let text = read_file(&args.data)?;
    let parsed = io::parse_dataset(&text)?;
    let design = parsed.data.design();

    let diagnostics = validate_design(design);
    if !diagnostics.c1_feasible {
        let largest = design.n().iter().copied().max().unwrap_or(0);
        return Err(CliError::usage(format!(
            "infeasible design: the trace estimators need groups with at least 6 observations, \
             but the largest group here has {largest}"
        )));
    }

    let hypothesis = parse_hypothesis(&args.hypothesis)?;
    let options = TestOptions { alpha: args.alpha, upsilon: args.upsilon, seed: args.seed };
    let result = run_test(&parsed.data, &hypothesis, &options)?;
    let report = io::report_from_result(&result, design, hypothesis.name(), args.upsilon);

    print!("{}", io::human_summary(&report));
    if let Some(path) = &args.json {
        write_file(path, &io::write_report_json(&report))?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, threads: Option<usize>) -> Result<()> {
    let mut config: SimConfig = match &args.config {
        Some(path) => {
            let text = read_file(path)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?
        }
        None => {
            let a = args.a.ok_or_else(|| CliError::usage("--a is required without --config"))?;
            let d = args.d.ok_or_else(|| CliError::usage("--d is required without --config"))?;
            let hypothesis = args
                .hypothesis
                .clone()
                .ok_or_else(|| CliError::usage("--hypothesis is required without --config"))?;
            let n = match &args.n {
                Some(text) => Some(parse_usize_list(text, "group size")?),
                None => None,
            };
            SimConfig {
                a,
                d,
                n,
                cov: CovSpec::parse(&args.cov)?,
                hypothesis,
                alternative: Alternative::parse(&args.alt)?,
                delta_grid: parse_f64_list(&args.delta_grid, "delta")?,
                alpha: args.alpha,
                replications: args.reps,
                upsilon: args.upsilon,
                seed: args.seed,
                threads: None,
            }
        }
    };
    if threads.is_some() {
        config.threads = threads;
    }

    let result = sim::run_sim(&config)?;
    eprintln!(
        "simulated {} replications x {} effect sizes in {:.2}s",
        result.replications,
        config.delta_grid.len(),
        result.wall_seconds
    );
    if config.delta_grid.len() > 1 {
        for test in ["z", "chi1", "kf"] {
            if !result.monotone_in_delta(test, 3.0) {
                eprintln!("note: {test} power is not monotone in delta beyond 3 SE");
            }
        }
    }

    let csv = io::write_sim_csv(&result);
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }

    if let Some(path) = &args.svg {
        let series: Vec<Series> = ["z", "chi1", "kf"]
            .iter()
            .map(|test| Series {
                name: (*test).to_string(),
                points: result.rows_for(test).iter().map(|r| (r.delta, r.rate)).collect(),
            })
            .collect();
        let svg = line_plot(
            &format!(
                "{} rejection rate, a={}, d={}, {}",
                result.config.alternative.name(),
                result.config.a,
                result.config.d,
                result.config.cov
            ),
            "delta",
            "rejection rate",
            &series,
        );
        write_file(path, &svg)?;
    }
    Ok(())
}

fn cmd_fp_table(args: FpTableArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let d_list = parse_usize_list(&args.d, "dimension")?;
    let a_list = parse_usize_list(&args.a, "group count")?;
    let cov = CovSpec::parse(&args.cov)?;
    let hypothesis = parse_hypothesis(&args.hypothesis)?;
    let explicit_n = match &args.n {
        Some(text) => Some(parse_usize_list(text, "group size")?),
        None => None,
    };
    let rows = table::fp_table(&d_list, &a_list, cov, &hypothesis, explicit_n.as_deref())?;
    eprintln!("computed {} cells in {:.2}s", rows.len(), started.elapsed().as_secs_f64());
    let csv = io::write_fp_csv(&rows);
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_limit(args: LimitArgs) -> Result<()> {
    let started = std::time::Instant::now();
    let n = match &args.n {
        Some(text) => parse_usize_list(text, "group size")?,
        None => default_group_sizes(args.a),
    };
    if n.len() != args.a {
        return Err(CliError::usage(format!(
            "group-size vector has {} entries but a = {}",
            n.len(),
            args.a
        )));
    }
    let _ = Design::new(n.clone(), args.d)?;
    let cov = CovSpec::parse(&args.cov)?;
    let hypothesis = parse_hypothesis(&args.hypothesis)?;
    let alpha_grid = parse_f64_list(&args.alpha_grid, "alpha")?;

    let sigma = cov.model(args.d)?.materialize();
    let pair = hypothesis.projection(args.a, args.d)?;
    let spectrum = spectrum_tvt(pair.t_w(), pair.t_s(), &sigma, &n)?;
    let regime = classify_regime(spectrum.betas(), &RegimeThresholds::default())?;
    let fp = f_p_exact(pair.t_w(), pair.t_s(), &sigma, &n)?;
    let rows = approximation_error(spectrum.betas(), fp.f_p, &alpha_grid, args.samples, args.seed)?;

    eprintln!(
        "sampled {} mixture draws over {} levels in {:.2}s",
        args.samples,
        alpha_grid.len(),
        started.elapsed().as_secs_f64()
    );
    print!("{}", io::write_limit_report(&regime, fp.f_p, spectrum.betas().len(), &rows));
    Ok(())
}
