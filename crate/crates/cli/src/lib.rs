//! The `carbon` command line: emission accounting, hybrid forecasting,
//! LMDI decomposition and spatial/group analysis over a provincial panel.
//!
//! Every command stages its outputs in a scratch directory next to
//! `--out-dir` and moves it into place only once everything succeeded.

mod inputs;
mod output;
mod stages;
mod summary;

use std::ffi::OsString;
use std::path::PathBuf;

use carbon_core::arima::ArimaOrder;
use carbon_core::dataio::{Format, RunConfig};
use carbon_core::synthetic::{generate, PanelSpec};
use carbon_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use inputs::series_seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Seed of the shipped sample panel.
pub const SAMPLE_SEED: u64 = 10;

/// A core error, optionally wrapped in labels naming where it happened.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{label}: {source}")]
    Labeled { label: String, source: Box<CliError> },
}

impl CliError {
    pub fn core(&self) -> &Error {
        match self {
            CliError::Core(e) => e,
            CliError::Labeled { source, .. } => source.core(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.core().is_internal() {
            EXIT_INTERNAL
        } else {
            EXIT_INPUT
        }
    }
}

pub(crate) trait Label<T> {
    fn label(self, label: impl Into<String>) -> Result<T, CliError>;
}

impl<T, E: Into<CliError>> Label<T> for Result<T, E> {
    fn label(self, label: impl Into<String>) -> Result<T, CliError> {
        self.map_err(|e| CliError::Labeled { label: label.into(), source: Box::new(e.into()) })
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Core(Error::InvalidArgument(msg.into()))
}

#[derive(Debug, Parser)]
#[command(name = "carbon", version, about = "Provincial carbon emission accounting, forecasting and decomposition")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub(crate) struct Shared {
    /// Run configuration file (`key=value` lines); defaults apply when omitted
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding energy.csv, economic.csv and optionally emission_factors.csv
    #[arg(long, global = true, default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "csv", value_parser = parse_format)]
    pub format: Format,
    /// Worker threads for per-series work; 0 uses every core
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Replace a non-empty output directory
    #[arg(long, global = true)]
    pub force: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Emission totals per province, per sector and nationally
    Account,
    /// Hybrid ARIMA/BP forecasts of emission series
    Forecast(ForecastArgs),
    /// LMDI decomposition of national emission changes
    Decompose(DecomposeArgs),
    /// Emission-weighted standard deviational ellipse for every year
    Spatial(SpatialArgs),
    /// Group-difference tests on emissions and emission intensity
    GroupTest(GroupTestArgs),
    /// Every stage in order, plus a plain-text summary
    Pipeline(PipelineArgs),
    /// Writes a synthetic sample panel to --out-dir
    SampleData,
}

#[derive(Debug, Clone, Default, Args)]
pub(crate) struct OrderArgs {
    /// Fixed ARIMA order `p,d,q` for every series, skipping order selection
    #[arg(long, value_parser = parse_order)]
    pub order: Option<ArimaOrder>,
    /// Order to use for series that no differencing makes stationary
    #[arg(long, value_parser = parse_order)]
    pub fallback_order: Option<ArimaOrder>,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    /// Last forecast year; defaults to the configured horizon
    #[arg(long)]
    to_year: Option<i32>,
    /// Comma-separated series: `national` and/or province names; all by default
    #[arg(long, value_delimiter = ',')]
    series: Vec<String>,
    #[command(flatten)]
    orders: OrderArgs,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    /// Check the shipped reference effects table row by row instead
    #[arg(long)]
    verify_fixture: bool,
    /// Also decompose projected years up to this year from forecast drivers
    #[arg(long)]
    to_year: Option<i32>,
    #[command(flatten)]
    orders: OrderArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum Weights {
    Emissions,
    Uniform,
}

#[derive(Debug, Args)]
struct SpatialArgs {
    #[arg(long, value_enum, default_value = "emissions")]
    weights: Weights,
}

#[derive(Debug, Args)]
struct GroupTestArgs {
    /// Replay the shipped group summaries instead of testing the panel
    #[arg(long)]
    fixture: bool,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Last forecast year; defaults to the configured horizon
    #[arg(long)]
    to_year: Option<i32>,
    #[command(flatten)]
    orders: OrderArgs,
}

fn parse_format(s: &str) -> Result<Format, Error> {
    s.parse()
}

fn parse_order(s: &str) -> Result<ArimaOrder, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("expected p,d,q with non-negative integers, got `{s}`"))?;
    match nums[..] {
        [p, d, q] if p <= 3 && d <= 2 && q <= 3 => Ok(ArimaOrder::new(p, d, q)),
        [_, _, _] => Err("orders are limited to p,q <= 3 and d <= 2".into()),
        _ => Err(format!("expected p,d,q, got `{s}`")),
    }
}

fn init_logging(verbose: u8) {
    // accounting warns once per scope; `account` reports the total instead
    let level = match verbose {
        0 => "warn,carbon_core::accounting=error",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    init_logging(cli.shared.verbose);
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.shared.workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let shared = &cli.shared;
    if let Command::SampleData = cli.command {
        return sample_data(shared);
    }
    let staging = output::Staging::new(&shared.out_dir, shared.force, &[&shared.data_dir])?.with_format(shared.format);
    let (config, digests) = inputs::load_config(shared)?;
    let name = command_name(&cli.command);
    let load = || inputs::Inputs::load(shared, config.clone(), digests.clone());
    let mut manifest = output::Manifest::new(name, &config, &digests);
    match &cli.command {
        Command::Account => {
            let inputs = load()?;
            let acc = stages::account(&inputs)?;
            stages::write_accounts(&acc, &staging)?;
            manifest = output::Manifest::new(name, &config, &inputs.digests);
            println!("accounted {} provinces over {}-{}", acc.provinces.len(), acc.first_year(), acc.last_year());
        }
        Command::Forecast(args) => {
            let inputs = load()?;
            let acc = stages::account(&inputs)?;
            let to_year = args.to_year.unwrap_or(config.forecast_horizon_end_year);
            let fcs = stages::forecast(&inputs, &acc, &args.series, to_year, &args.orders)?;
            manifest = output::Manifest::new(name, &config, &inputs.digests);
            stages::write_forecasts(&fcs, &staging, &mut manifest)?;
            for f in &fcs {
                println!("{}: ARIMA{} forecast to {to_year}", f.name, f.forecast.order);
            }
        }
        Command::Decompose(args) if args.verify_fixture => {
            let verdicts = stages::verify_effects_fixture(&staging)?;
            let failed = verdicts.iter().filter(|v| !v.1).count();
            if failed > 0 {
                return Err(invalid(format!(
                    "{failed} of {} reference rows do not add up to their gross effect",
                    verdicts.len()
                )));
            }
        }
        Command::Decompose(args) => {
            let inputs = load()?;
            let dec = stages::decompose(&inputs, args.to_year, &args.orders)?;
            manifest = output::Manifest::new(name, &config, &inputs.digests);
            stages::write_decomposition(&dec, &staging, &mut manifest)?;
            let c = &dec.historical.cumulative;
            println!(
                "decomposed {}-{}: total change {}",
                c.from_year,
                c.year,
                carbon_core::dataio::format_number(c.total)
            );
        }
        Command::Spatial(args) => {
            let inputs = load()?;
            let acc = stages::account(&inputs)?;
            let path = stages::spatial(&acc, args.weights)?;
            stages::write_spatial(&path, &staging)?;
            manifest = output::Manifest::new(name, &config, &inputs.digests);
            println!("{}", stages::drift_line(&path));
        }
        Command::GroupTest(args) => {
            let report = if args.fixture {
                stages::group_tests_fixture()?
            } else {
                let inputs = load()?;
                manifest = output::Manifest::new(name, &config, &inputs.digests);
                stages::group_tests(&inputs, &stages::account(&inputs)?)?
            };
            stages::write_group_tests(&report, &staging)?;
            for line in report.lines() {
                println!("{line}");
            }
        }
        Command::Pipeline(args) => {
            let inputs = load().label("load")?;
            manifest = output::Manifest::new(name, &config, &inputs.digests);
            let to_year = args.to_year.unwrap_or(config.forecast_horizon_end_year);
            let acc = stages::account(&inputs).label("account")?;
            stages::write_accounts(&acc, &staging).label("account")?;
            let fcs = stages::forecast(&inputs, &acc, &[], to_year, &args.orders).label("forecast")?;
            stages::write_forecasts(&fcs, &staging, &mut manifest).label("forecast")?;
            let dec = stages::decompose(&inputs, None, &args.orders).label("decompose")?;
            stages::write_decomposition(&dec, &staging, &mut manifest).label("decompose")?;
            let path = stages::spatial(&acc, Weights::Emissions).label("spatial")?;
            stages::write_spatial(&path, &staging).label("spatial")?;
            let groups = stages::group_tests(&inputs, &acc).label("group-test")?;
            stages::write_group_tests(&groups, &staging).label("group-test")?;
            let text = summary::render(&summary::Parts {
                inputs: &inputs,
                accounts: &acc,
                forecasts: &fcs,
                to_year,
                decomposition: &dec,
                path: &path,
                groups: &groups,
            });
            staging.text("summary.txt", &text)?;
            print!("{text}");
        }
        Command::SampleData => unreachable!("handled above"),
    }
    manifest.write(&staging)?;
    staging.commit()
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Account => "account",
        Command::Forecast(_) => "forecast",
        Command::Decompose(_) => "decompose",
        Command::Spatial(_) => "spatial",
        Command::GroupTest(_) => "group-test",
        Command::Pipeline(_) => "pipeline",
        Command::SampleData => "sample-data",
    }
}

fn sample_data(shared: &Shared) -> Result<(), CliError> {
    let staging = output::Staging::new(&shared.out_dir, shared.force, &[])?;
    let seed = shared.seed.unwrap_or(SAMPLE_SEED);
    let (energy, economic) = generate(&PanelSpec::standard(seed)?)?;
    carbon_core::dataio::write_energy_panel(&energy, staging.path("energy.csv")?)?;
    carbon_core::dataio::write_economic_panel(&economic, staging.path("economic.csv")?)?;
    let config = RunConfig { seed, ..RunConfig::default() };
    let digests = inputs::digest_dir(staging.root(), &["energy.csv", "economic.csv"])?;
    output::Manifest::new("sample-data", &config, &digests).write(&staging)?;
    staging.commit()?;
    println!("wrote a {}-province sample panel with seed {seed}", energy.provinces().len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_root_error() {
        let internal: Result<(), Error> = Err(Error::Invariant("sum".into()));
        assert_eq!(internal.label("decompose").unwrap_err().exit_code(), EXIT_INTERNAL);
        assert_eq!(invalid("bad").exit_code(), EXIT_INPUT);
        let nested: Result<(), CliError> = Err(invalid("x")).label("inner");
        let e = nested.label("outer").unwrap_err();
        assert_eq!(e.to_string(), "outer: inner: invalid argument: x");
    }

    #[test]
    fn order_flag_parses_and_checks_bounds() {
        assert_eq!(parse_order("1, 1,0").unwrap(), ArimaOrder::new(1, 1, 0));
        assert!(parse_order("1,3,0").is_err());
        assert!(parse_order("1,1").is_err());
        assert!(parse_order("a,b,c").is_err());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["carbon", "no-such-command"]), EXIT_INPUT);
        assert_eq!(run(["carbon", "--help"]), EXIT_OK);
    }
}
