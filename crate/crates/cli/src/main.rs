//! `tau-kit`: tau statistics, envelopes, global tests and clustering ranges
//! from the command line.

mod commands;
mod error;
mod plot;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{error_json, CliError, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "tau-kit", version, about = "Spatiotemporal tau statistics")]
struct Cli {
    /// Worker threads for pair tallies and replicates (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Which tables to write besides the plots.
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    format: Format,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tau curve with an optional bootstrap envelope.
    Tau(TauArgs),
    /// Clustering range from bootstrap curves, with the legacy heuristic.
    Range(RangeArgs),
    /// Global envelope test against permuted onset times.
    Test(TestArgs),
    /// Tau over a distance x time-lag grid.
    Map(MapArgs),
    /// Synthetic case data.
    Simulate(SimulateArgs),
    /// Preview a band specification without estimating anything.
    Bands(BandsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Odds,
    Prev,
    Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    BandEnd,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CrossingArg {
    First,
    Last,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Cases CSV: id, x, y, t, status and optional mark columns.
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// Persons CSV for the rate estimator: id, entry, exit, x, y.
    #[arg(long)]
    pub persons: Option<PathBuf>,
    /// Episodes CSV for the rate estimator: person_id, onset, recovery.
    #[arg(long)]
    pub episodes: Option<PathBuf>,
    /// Optional relocations CSV: id, from_t, x, y.
    #[arg(long)]
    pub relocations: Option<PathBuf>,
    /// Coordinates are longitude/latitude in degrees.
    #[arg(long)]
    pub geographic: bool,
    /// Episodes confer lifelong immunity.
    #[arg(long)]
    pub immunizing: bool,
    /// Infectious for this many days after onset instead of until recovery.
    #[arg(long, value_name = "DAYS")]
    pub infectious_days: Option<f64>,
    /// Days after recovery before a person is susceptible again.
    #[arg(long, value_name = "DAYS", default_value_t = 0.0)]
    pub susceptibility_delay: f64,
}

#[derive(Debug, Clone, Args)]
pub struct RuleArgs {
    /// Related when the onset lag lies in [T1, T2] days.
    #[arg(long, value_name = "T1:T2")]
    pub relate: Option<String>,
    /// Related when both carry the same value of this mark.
    #[arg(long, value_name = "MARK")]
    pub same_mark: Option<String>,
    /// Related when exactly one of the pair is flagged prevalent by this mark.
    #[arg(long, value_name = "MARK")]
    pub prevalent_mark: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub rule: RuleArgs,
    /// width:<d_max>:<k>, width:<k>, discs:<c1>,<c2>,..., eqcount:<k>,
    /// overlap:<c1>,<c2>,...:<half_width> or global.
    #[arg(long, default_value = "width:10")]
    pub bands: String,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Odds)]
    pub estimator: EstimatorArg,
    /// Replicates.
    #[arg(long = "R", value_name = "R")]
    pub replicates: Option<usize>,
    /// Seed; falls back to TAUKIT_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Envelope level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Drop pairs whose relatedness cannot be judged instead of counting them as unrelated.
    #[arg(long)]
    pub exclude_inapplicable: bool,
    /// Where each band is drawn.
    #[arg(long, value_enum, default_value_t = ConventionArg::BandEnd)]
    pub convention: ConventionArg,
    /// Logarithmic tau axis.
    #[arg(long)]
    pub log_tau: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TauArgs {
    #[command(flatten)]
    pub curve: CurveArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RangeArgs {
    #[command(flatten)]
    pub curve: CurveArgs,
    /// Which down-crossing of tau = 1 defines the range.
    #[arg(long, value_enum, default_value_t = CrossingArg::First)]
    pub crossing: CrossingArg,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub curve: CurveArgs,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long)]
    pub geographic: bool,
    /// Distance bands.
    #[arg(long, default_value = "width:10")]
    pub dbands: String,
    /// Time-lag bands; must not depend on the data.
    #[arg(long)]
    pub tbands: String,
    /// Cells with fewer related pairs are flagged.
    #[arg(long, default_value_t = taukit::estimators::DEFAULT_MIN_PAIRS)]
    pub min_pairs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Null,
    Epidemic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Exponential,
    Disc,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Epidemic)]
    pub model: ModelArg,
    /// Epidemic configuration as JSON; flags below are ignored when given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cases drawn by the null model.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Side of the square region in metres.
    #[arg(long, default_value_t = 2000.0)]
    pub side: f64,
    /// Days.
    #[arg(long, default_value_t = 120.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 5000)]
    pub population: usize,
    /// Gaussian population clusters; 0 spreads people uniformly.
    #[arg(long, default_value_t = 0)]
    pub clusters: usize,
    #[arg(long, default_value_t = 100.0)]
    pub cluster_sd: f64,
    #[arg(long, value_enum, default_value_t = KernelArg::Gaussian)]
    pub kernel: KernelArg,
    /// Kernel sd, rate or radius.
    #[arg(long, default_value_t = 100.0)]
    pub kernel_param: f64,
    #[arg(long, default_value_t = 15.0)]
    pub si_mean: f64,
    #[arg(long, default_value_t = 5.0)]
    pub si_sd: f64,
    #[arg(long, default_value_t = 2.0)]
    pub r_e: f64,
    #[arg(long, default_value_t = 5)]
    pub initial: usize,
    /// Observe each case with this probability.
    #[arg(long)]
    pub observe: Option<f64>,
    /// Uninfected people written as noncases.
    #[arg(long, default_value_t = 0)]
    pub noncases: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BandsArgs {
    #[arg(long)]
    pub bands: String,
    /// Cases, needed for data-driven specs and for pair counts.
    #[arg(long)]
    pub cases: Option<PathBuf>,
    #[arg(long)]
    pub geographic: bool,
    /// Count pairs as this estimator would.
    #[arg(long, value_enum, default_value_t = EstimatorArg::Odds)]
    pub estimator: EstimatorArg,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(error::config("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| error::config(format!("cannot start {n} workers: {e}")))?;
    }
    let out = commands::Output {
        dir: cli.out,
        format: cli.format,
    };
    match cli.command {
        Command::Tau(a) => commands::tau(&a.curve, &out),
        Command::Range(a) => commands::range(&a, &out),
        Command::Test(a) => commands::test(&a, &out),
        Command::Map(a) => commands::map(&a, &out),
        Command::Simulate(a) => commands::simulate(&a, &out),
        Command::Bands(a) => commands::bands(&a, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                e.exit();
            }
            eprintln!("{}", error_json("config", EXIT_CONFIG, e.to_string().trim().to_owned()));
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", error_json(e.kind(), code, e.to_string()));
            ExitCode::from(code)
        }
    }
}
