//! Command-line front end: `estimate`, `generate` and `bench`.
//!
//! Every estimator flag can also be set through an environment variable
//! named after it with the `PULSE_PERIOD_` prefix, e.g.
//! `PULSE_PERIOD_SIGMA_BAR`.

pub mod bench;
pub mod io;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::domain::HyperParams;
use crate::error::Error;
use crate::pipeline::{estimate_period, EstimatorConfig};
use crate::synth::{generate, OutlierMode};
use bench::{Axis, Noise, PointSummary, TrialRecord, TrialSetup};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Estimator(#[from] Error),
}

#[derive(Debug, Parser)]
#[command(
    name = "pulse-period",
    version,
    about = "Period and phase estimation for sparse pulse trains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate period and phase from a TOA file.
    Estimate(EstimateArgs),
    /// Write a synthetic TOA file and its ground-truth sidecar.
    Generate(GenerateArgs),
    /// Run a seeded parameter sweep and write CSV and SVG summaries.
    Bench(BenchArgs),
}

/// Flags shared by every command that runs the estimator.
#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Significance level of the statistical tests.
    #[arg(long, env = "PULSE_PERIOD_CONFIDENCE", default_value_t = 1e-6)]
    pub confidence: f64,
    /// Largest step between consecutive detected pulses.
    #[arg(long = "n-max", env = "PULSE_PERIOD_N_MAX", default_value_t = 50)]
    pub n_max: u64,
    /// Upper bound on the fraction of spurious detections.
    #[arg(long, env = "PULSE_PERIOD_P_BAR")]
    pub p_bar: Option<f64>,
    #[arg(long, env = "PULSE_PERIOD_T_MIN")]
    pub t_min: Option<f64>,
    #[arg(long, env = "PULSE_PERIOD_T_MAX")]
    pub t_max: Option<f64>,
    /// Restarts allowed when the leading detections cannot be explained.
    #[arg(long, env = "PULSE_PERIOD_RESTARTS", default_value_t = 2)]
    pub restarts: u32,
    /// Also prune with a Kolmogorov-Smirnov test on the residuals.
    #[arg(long, env = "PULSE_PERIOD_NORMALITY_TEST")]
    pub normality_test: bool,
    #[arg(long, env = "PULSE_PERIOD_THREADS", default_value_t = 1)]
    pub threads: usize,
    /// Node expansions per search, 0 for no limit.
    #[arg(long, env = "PULSE_PERIOD_NODE_BUDGET", default_value_t = crate::search::DEFAULT_NODE_BUDGET)]
    pub node_budget: u64,
    /// Wall-clock limit in seconds, 0 for none.
    #[arg(
        long = "time-budget-s",
        env = "PULSE_PERIOD_TIME_BUDGET_S",
        default_value_t = 60.0
    )]
    pub time_budget_s: f64,
}

impl SearchArgs {
    fn node_budget(&self) -> Option<u64> {
        (self.node_budget > 0).then_some(self.node_budget)
    }

    fn time_budget(&self) -> Result<Option<Duration>, CliError> {
        if self.time_budget_s == 0.0 || self.time_budget_s == f64::INFINITY {
            return Ok(None);
        }
        Duration::try_from_secs_f64(self.time_budget_s)
            .map(Some)
            .map_err(|_| {
                CliError::Usage("--time-budget-s must be a non-negative number of seconds".into())
            })
    }

    fn threads(&self) -> Result<usize, CliError> {
        if self.threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        Ok(self.threads)
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// TOA file, one number per line.
    pub input: PathBuf,
    /// Upper bound on the TOA noise standard deviation.
    #[arg(long, env = "PULSE_PERIOD_SIGMA_BAR")]
    pub sigma_bar: f64,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Also write the full estimate as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutlierModeArg {
    UpTo,
    Exact,
}

impl From<OutlierModeArg> for OutlierMode {
    fn from(m: OutlierModeArg) -> Self {
        match m {
            OutlierModeArg::UpTo => OutlierMode::UpTo,
            OutlierModeArg::Exact => OutlierMode::Exact,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Period; drawn from [t-min, t-max) when absent.
    #[arg(long)]
    pub t: Option<f64>,
    /// Phase; drawn from [0, t) when absent.
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Detection probability; drawn from [0.2, 1] when absent.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 0.05)]
    pub outlier_fraction: f64,
    #[arg(long, value_enum, default_value = "up-to")]
    pub outlier_mode: OutlierModeArg,
    #[arg(long, default_value_t = 20.0)]
    pub t_min: f64,
    #[arg(long, default_value_t = 100.0)]
    pub t_max: f64,
    #[arg(long, env = "PULSE_PERIOD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// TOA file to write; the sidecar gets `.truth.csv` appended.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// outlier_pct, sigma_over_t, gamma or sigma_bar_over_sigma.
    #[arg(long, value_parser = parse_axis)]
    pub axis: Axis,
    /// Comma-separated axis values; a default grid when absent.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    /// Seed of the first trial; trial i uses seed + i at every point.
    #[arg(long, env = "PULSE_PERIOD_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub horizon: u64,
    /// Fixed detection probability; drawn from [0.2, 1] per trial when absent.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Absolute noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub outlier_fraction: f64,
    #[arg(long, value_enum, default_value = "up-to")]
    pub outlier_mode: OutlierModeArg,
    /// Noise bound handed to the estimator, as a multiple of the true sigma.
    #[arg(long, default_value_t = 1.0)]
    pub sigma_bar_ratio: f64,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    s.parse()
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Generate(a) => cmd_generate(&a).map(|()| 0),
        Command::Bench(a) => cmd_bench(&a).map(|()| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Runs the estimator on a TOA file. Returns 0 when solved, 2 otherwise.
pub fn cmd_estimate(a: &EstimateArgs) -> Result<i32, CliError> {
    let toas = io::read_toas(&a.input)?;
    let (Some(t_min), Some(t_max)) = (a.search.t_min, a.search.t_max) else {
        return Err(CliError::Usage("--t-min and --t-max are required".into()));
    };
    let mut theta = HyperParams::new(
        a.search.confidence,
        a.sigma_bar,
        a.search.n_max,
        a.search.p_bar.unwrap_or(0.1),
        t_min,
        t_max,
    )?;
    theta.restart_cap = a.search.restarts;
    theta.normality_test_enabled = a.search.normality_test;
    let config = EstimatorConfig {
        node_budget: a.search.node_budget(),
        time_budget: a.search.time_budget()?,
        threads: a.search.threads()?,
        ..EstimatorConfig::default()
    };
    let est = estimate_period(&toas, &theta, &config)?;

    println!("status      {}", est.status);
    if est.is_solved() {
        println!("period      {}", est.t_hat);
        println!("phase       {}", est.b_hat);
        println!("intercept   {}", est.intercept);
        println!("inliers     {}", est.assignment.inlier_count());
        println!("outliers    {}", est.assignment.outlier_count());
        println!("lambda      {}", est.lambda_applied);
        println!("residual_ss {}", est.residual_ss);
    }
    println!("detections  {}", toas.len());
    println!("restarts    {}", est.restarts_used);
    println!("nodes       {}", est.diagnostics.nodes_expanded);
    if est.diagnostics.budget_exceeded {
        println!("budget      exceeded");
    }

    if let Some(path) = &a.report {
        let json = serde_json::to_string_pretty(&est).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(path, json + "\n")
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(if est.is_solved() { 0 } else { 2 })
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<(), CliError> {
    let setup = TrialSetup {
        horizon: a.horizon,
        gamma: a.gamma,
        t_range: match a.t {
            Some(t) => (t, t),
            None => (a.t_min, a.t_max),
        },
        noise: Noise::Absolute(a.sigma),
        outlier_fraction: a.outlier_fraction,
        outlier_mode: a.outlier_mode.into(),
        ..TrialSetup::default()
    };
    if a.t.is_none() && !(a.t_min > 0.0 && a.t_min <= a.t_max) {
        return Err(CliError::Usage("need 0 < t-min <= t-max".into()));
    }
    let mut params = setup.gen_params(a.seed);
    if let Some(b) = a.b {
        params.b_true = b;
    }
    let (toas, truth) = generate(&params)?;
    let header = vec![
        format!("period {}", params.t_true),
        format!("phase {}", params.b_true),
        format!("sigma {}", params.sigma),
        format!("gamma {}", params.gamma),
        format!("seed {}", params.seed),
        format!("outliers {}", truth.outliers.len()),
    ];
    io::write_toas(&a.out, &header, &toas)?;
    io::write_truth(&io::truth_path(&a.out), &toas, &truth)?;
    println!(
        "wrote {} detections ({} outliers) to {}",
        toas.len(),
        truth.outliers.len(),
        a.out.display()
    );
    Ok(())
}

/// Column order of the trial CSV.
pub const TRIAL_COLUMNS: [&str; 25] = [
    "axis_value",
    "seed",
    "t_true",
    "b_true",
    "sigma",
    "sigma_bar",
    "gamma",
    "horizon",
    "outlier_fraction",
    "p_bar",
    "n_detections",
    "n_outliers_true",
    "t_hat",
    "b_hat",
    "status",
    "restarts",
    "outliers_flagged",
    "lambda",
    "outcome",
    "rel_error",
    "crlb_rel",
    "wall_time_s",
    "nodes_expanded",
    "nodes_pruned",
    "reconstructed",
];

/// Column order of the summary CSV.
pub const SUMMARY_COLUMNS: [&str; 7] = [
    "axis_value",
    "trials",
    "success_rate",
    "rel_rmse",
    "rmse_over_crlb",
    "median_time_s",
    "p90_time_s",
];

fn write_rows<S: serde::Serialize>(
    path: &Path,
    columns: &[&str],
    rows: &[S],
) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(err)?;
    w.write_record(columns).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Io(e.to_string()))
}

pub fn read_summary(path: &Path) -> Result<Vec<PointSummary>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Io(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4e}"))
}

pub fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let t_min = a.search.t_min.unwrap_or(20.0);
    let t_max = a.search.t_max.unwrap_or(100.0);
    let base = TrialSetup {
        horizon: a.horizon,
        gamma: a.gamma,
        t_range: (t_min, t_max),
        noise: Noise::Absolute(a.sigma),
        sigma_bar_over_sigma: a.sigma_bar_ratio,
        outlier_fraction: a.outlier_fraction,
        outlier_mode: a.outlier_mode.into(),
        c: a.search.confidence,
        n_max: a.search.n_max,
        p_bar: a.search.p_bar,
        t_bounds: (t_min, t_max),
        restarts: a.search.restarts,
        normality: a.search.normality_test,
        node_budget: a.search.node_budget(),
        time_budget: a.search.time_budget()?.unwrap_or(Duration::MAX),
    };
    // Surface bad estimator flags before spending time on trials.
    base.hyper_params(1.0)?;
    let values = if a.values.is_empty() {
        a.axis.default_values()
    } else {
        a.values.clone()
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.search.threads()?)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let records =
        pool.install(|| bench::sweep(&base, a.axis, &values, a.search.p_bar, a.seed, a.trials))?;
    let summary = bench::summarize_all(&records);

    fs::create_dir_all(&a.out).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    write_rows(&a.out.join("trials.csv"), &TRIAL_COLUMNS, &records)?;
    write_rows(&a.out.join("summary.csv"), &SUMMARY_COLUMNS, &summary)?;

    let axis = a.axis.name();
    let series = |f: fn(&PointSummary) -> Option<f64>| {
        summary
            .iter()
            .filter_map(|s| f(s).map(|v| (s.axis_value, v)))
            .collect::<Vec<_>>()
    };
    let charts = [
        (
            "success_rate.svg",
            svg::line_chart(
                "Success rate",
                axis,
                "success rate",
                &[("success", series(|s| Some(s.success_rate)))],
                false,
            ),
        ),
        (
            "precision.svg",
            svg::line_chart(
                "Relative RMSE of the period",
                axis,
                "relative RMSE",
                &[("rmse", series(|s| s.rel_rmse))],
                true,
            ),
        ),
        (
            "rmse_over_crlb.svg",
            svg::line_chart(
                "RMSE over Cramér-Rao bound",
                axis,
                "RMSE / CRLB",
                &[("ratio", series(|s| s.rmse_over_crlb))],
                false,
            ),
        ),
        (
            "runtime.svg",
            svg::line_chart(
                "Runtime",
                axis,
                "seconds",
                &[
                    ("median", series(|s| s.median_time_s)),
                    ("p90", series(|s| s.p90_time_s)),
                ],
                true,
            ),
        ),
        (
            "runtime_hist.svg",
            svg::loglog_histogram(
                "Runtime distribution",
                "seconds",
                &records.iter().map(|r| r.wall_time_s).collect::<Vec<_>>(),
                30,
            ),
        ),
    ];
    for (name, body) in charts {
        let path = a.out.join(name);
        fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }

    println!(
        "{:>12} {:>7} {:>8} {:>11} {:>11} {:>11}",
        axis, "trials", "success", "rel_rmse", "rmse/crlb", "median_s"
    );
    for s in &summary {
        println!(
            "{:>12} {:>7} {:>8.3} {:>11} {:>11} {:>11}",
            s.axis_value,
            s.trials,
            s.success_rate,
            opt(s.rel_rmse),
            opt(s.rmse_over_crlb),
            opt(s.median_time_s)
        );
    }
    println!("wrote {} trials to {}", records.len(), a.out.display());
    Ok(())
}
