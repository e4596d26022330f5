//! `rmg`: estimate, simulate and analyze restricted-covariance GARCH models.
//!
//! Model objects travel as JSON, panels and series as CSV. The resolved
//! configuration of every run is echoed to stderr as one JSON line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "rmg",
    version,
    about = "Restricted-covariance multivariate GARCH: targeting, fitting, simulation and analytics",
    after_help = "Set RMG_THREADS to cap the worker threads used by parallel sections."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Estimate the covariance target from a calibration window.
    Target(TargetArgs),
    /// Maximum-likelihood fit of one parameter tier.
    Fit(FitArgs),
    /// Simulate a panel from a target and parameters.
    Simulate(SimulateArgs),
    /// Write the garch-filtered returns H^{-1/2} r of a fitted path.
    Degarch(DegarchArgs),
    /// Fit a univariate GARCH(1,1) to every asset.
    Uvg(UvgArgs),
    /// Post-fit statistics.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Debug, Args, Serialize)]
struct PanelArgs {
    /// Panel CSV: a `date` column followed by one column per ticker.
    #[arg(long)]
    panel: PathBuf,
    /// Cells hold prices; log returns are taken on load.
    #[arg(long)]
    prices: bool,
    /// Demean every column and rescale the panel to unit mean square.
    #[arg(long)]
    normalize: bool,
}

/// Optional panel used only for tickers, dates and volumes.
#[derive(Debug, Args, Serialize)]
struct TickerArgs {
    /// Panel CSV supplying tickers (synthetic `A0000...` otherwise).
    #[arg(long)]
    panel: Option<PathBuf>,
    /// The panel holds prices.
    #[arg(long)]
    prices: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum TierArg {
    #[value(name = "2")]
    Two,
    #[value(name = "4")]
    Four,
    #[value(name = "6")]
    Six,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum NoiseArg {
    Gauss,
    T,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Exact,
    LargeN,
}

#[derive(Debug, Args, Serialize)]
struct NoiseArgs {
    /// Innovation family.
    #[arg(long, value_enum, default_value = "t")]
    noise: NoiseArg,
    /// Student-t tail index (start value when it is estimated).
    #[arg(long, default_value_t = 4.0)]
    nu: f64,
}

#[derive(Debug, Args, Serialize)]
struct TargetArgs {
    #[command(flatten)]
    input: PanelArgs,
    /// First calibration date (inclusive).
    #[arg(long)]
    window_from: Option<NaiveDate>,
    /// Last calibration date (inclusive).
    #[arg(long)]
    window_to: Option<NaiveDate>,
    /// Rows used when no window is given.
    #[arg(long, default_value_t = 1000)]
    default_rows: usize,
    /// Output TargetSpec JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[command(flatten)]
    input: PanelArgs,
    /// TargetSpec JSON; estimated from the first 1000 rows when absent.
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "6")]
    tier: TierArg,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Keep the tail index fixed at --nu.
    #[arg(long)]
    fix_nu: bool,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    /// Recorded in the config only; fitting is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Starting parameters (ModelParams JSON) instead of the tier chain.
    #[arg(long)]
    start: Option<PathBuf>,
    /// Start from the default point rather than the lower-tier optima.
    #[arg(long)]
    no_chain: bool,
    /// Skip the Hessian standard errors.
    #[arg(long)]
    no_se: bool,
    /// Likelihood evaluations per optimizer run.
    #[arg(long, default_value_t = 3000)]
    max_evals: usize,
    /// FitReport JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fitted state path JSON.
    #[arg(long)]
    states: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    target: PathBuf,
    /// ModelParams JSON (noise included).
    #[arg(long)]
    params: PathBuf,
    /// Number of emitted days.
    #[arg(short = 'T', long = "days")]
    days: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    /// Simulated panel CSV.
    #[arg(long)]
    out: PathBuf,
    /// State path JSON.
    #[arg(long)]
    states: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct DegarchArgs {
    #[command(flatten)]
    input: PanelArgs,
    /// State path JSON aligned with the panel rows.
    #[arg(long)]
    states: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct UvgArgs {
    #[command(flatten)]
    input: PanelArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Per-asset CSV `ticker,alpha,gamma,h_bar,loglik`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
enum AnalyzeCommand {
    /// Sector risk measure from above-threshold betas.
    Risk(RiskArgs),
    /// DECO correlation and selected pair correlations per day.
    Corr(CorrArgs),
    /// Windowed median conditional correlation per sector pair.
    SectorCorr(SectorCorrArgs),
    /// Leverage curves and their asymmetry per asset.
    Leverage(LeverageArgs),
    /// Autocorrelation of absolute returns.
    Acf(AcfArgs),
    /// Pairwise co-movement discrepancy between two panels.
    Delta(DeltaArgs),
    /// Cliff's delta between two samples.
    Cliffs(CliffsArgs),
    /// Chi-square distance between two sample histograms.
    Chi2(Chi2Args),
    /// Model-implied returns drawn from a state path.
    Predicted(PredictedArgs),
    /// Dynamic betas in long format.
    Betas(BetasArgs),
    /// Student-t tail index of a pooled sample.
    Tail(TailArgs),
}

#[derive(Debug, Args, Serialize)]
struct RiskArgs {
    #[arg(long)]
    states: PathBuf,
    /// `ticker,sector` CSV.
    #[arg(long)]
    sectors: PathBuf,
    #[command(flatten)]
    tickers: TickerArgs,
    /// Volume CSV with the panel's layout; unit volumes when absent.
    #[arg(long, requires = "panel")]
    volumes: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    /// Centered smoothing window in days.
    #[arg(long, default_value_t = 21)]
    smooth: usize,
    /// Long CSV `t,sector,risk,risk_smoothed`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CorrArgs {
    #[arg(long)]
    states: PathBuf,
    /// Asset pair `i,j` (0-based); repeatable.
    #[arg(long = "pair", value_parser = parse_pair)]
    pairs: Vec<(usize, usize)>,
    /// Long CSV `t,series,value`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SectorCorrArgs {
    #[arg(long)]
    states: PathBuf,
    #[arg(long)]
    sectors: PathBuf,
    #[command(flatten)]
    tickers: TickerArgs,
    #[arg(long, default_value_t = 50)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct LeverageArgs {
    #[command(flatten)]
    input: PanelArgs,
    #[arg(long)]
    states: PathBuf,
    /// Largest lag in days.
    #[arg(long, default_value_t = 42)]
    t_max: usize,
    /// Use the garch-filtered returns instead of the raw ones.
    #[arg(long)]
    degarch: bool,
    /// Long CSV `asset,lag,corr`.
    #[arg(long)]
    out: PathBuf,
    /// CSV `asset,asymmetry`.
    #[arg(long)]
    asymmetry_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AcfArgs {
    #[command(flatten)]
    input: PanelArgs,
    /// Filter the panel through this state path first.
    #[arg(long)]
    states: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    max_lag: usize,
    /// CSV `lag,acf`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DeltaArgs {
    #[command(flatten)]
    input: PanelArgs,
    /// Panel CSV to compare against, same shape.
    #[arg(long)]
    simulated: PathBuf,
    #[arg(long, default_value_t = 70)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV `i,j,delta`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CliffsArgs {
    /// Sample CSV (first column, header row).
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct Chi2Args {
    #[arg(long)]
    empirical: PathBuf,
    #[arg(long)]
    predicted: PathBuf,
    #[arg(long, default_value_t = 100)]
    bins: usize,
}

#[derive(Debug, Args, Serialize)]
struct PredictedArgs {
    #[command(flatten)]
    input: PanelArgs,
    #[arg(long)]
    states: PathBuf,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, default_value_t = 10)]
    replications: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pooled predicted returns as a sample CSV.
    #[arg(long)]
    out: PathBuf,
    /// Pooled panel returns as a sample CSV.
    #[arg(long)]
    empirical_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct BetasArgs {
    #[arg(long)]
    states: PathBuf,
    #[command(flatten)]
    tickers: TickerArgs,
    /// Long CSV `t,asset,beta`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TailArgs {
    #[arg(long)]
    sample: PathBuf,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `i,j`, got `{s}`"))?;
    let i = a.trim().parse().map_err(|_| format!("bad index `{a}`"))?;
    let j = b.trim().parse().map_err(|_| format!("bad index `{b}`"))?;
    Ok((i, j))
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("RMG_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("RMG_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match serde_json::to_string(&cli.command) {
        Ok(cfg) => eprintln!("{cfg}"),
        Err(e) => log::warn!("could not serialize config: {e}"),
    }
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
