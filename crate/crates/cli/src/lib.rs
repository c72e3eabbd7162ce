//! Command-line front end. Values are resolved as flag, then config file,
//! then the reference plant defaults.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hydrosched::bench::{emit_results, performance_ratio, run_sweep, summarize, FlowArchive, OutputFormat, SweepSpec};
use hydrosched::config::ConfigFile;
use hydrosched::flow::{load_flow_csv, FlowSeries, MeanFlowProfile};
use hydrosched::plant::Regime;
use hydrosched::strategy::{run_hindsight, run_receding_horizon, PerfectForecast, StrategyRecord};
use hydrosched::synth::{synthetic_flow, SynthParams};

const AFTER_HELP: &str = "Precedence: command-line flags override values from --config, \
which override the built-in reference plant defaults.";

#[derive(Debug, Parser)]
#[command(name = "hydrosched", version, about = "Hydropower production scheduling", after_help = AFTER_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a flow CSV and write its smoothed mean profile.
    Ingest(IngestArgs),
    /// Hindsight and receding-horizon schedules for one year, plus their ratio.
    Optimize(RunArgs),
    /// Receding-horizon schedule for one year.
    Simulate(RunArgs),
    /// Parameter sweep over years, forecast length, dam size, γ and half-life.
    Sweep(SweepArgs),
    /// Write a synthetic flow series in the ingestion format.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flow CSV with header `date,flow_m3s`.
    #[arg(long)]
    pub flow_data: Option<PathBuf>,
    /// TOML file with plant keys and optional [grid] and [sweep] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: OutputFormat,
    /// Use a synthetic series with this seed when no --flow-data is given.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub regime: Option<Regime>,
    /// Quarter the number of volume levels.
    #[arg(long)]
    pub coarse: bool,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Years averaged into the profile (default: every complete year).
    #[arg(long, value_delimiter = ',')]
    pub years: Vec<i32>,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Target year (default: last complete year in the data).
    #[arg(long)]
    pub year: Option<i32>,
    #[arg(long)]
    pub forecast_days: Option<usize>,
    #[arg(long)]
    pub dam_days: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub half_life: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated test years (default: every complete year after the first).
    #[arg(long, value_delimiter = ',')]
    pub years: Vec<i32>,
    #[arg(long, value_delimiter = ',')]
    pub history_years: Vec<i32>,
    #[arg(long, value_delimiter = ',')]
    pub forecast_days: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub dam_days: Vec<f64>,
    #[arg(long, alias = "gammas", value_delimiter = ',')]
    pub gamma: Vec<f64>,
    #[arg(long, alias = "half-lives", value_delimiter = ',')]
    pub half_life: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub years: usize,
    #[arg(long, default_value_t = 2015)]
    pub start_year: i32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a, stdout),
        Command::Optimize(a) => cmd_optimize(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::Sweep(a) => cmd_sweep(&a, stdout),
        Command::Synth(a) => cmd_synth(&a, stdout),
    }
}

fn load_config(common: &CommonArgs) -> Result<ConfigFile> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
            ConfigFile::parse(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => ConfigFile::default(),
    };
    if common.coarse {
        config.grid.coarse = true;
    }
    Ok(config)
}

fn regime(common: &CommonArgs, config: &ConfigFile) -> Regime {
    common.regime.or(config.sweep.regime).unwrap_or(Regime::Dam)
}

fn load_series(common: &CommonArgs) -> Result<FlowSeries> {
    match (&common.flow_data, common.seed) {
        (Some(path), _) => {
            let file = File::open(path).with_context(|| format!("cannot open flow data {}", path.display()))?;
            load_flow_csv(file).with_context(|| format!("invalid flow data {}", path.display()))
        }
        (None, Some(seed)) => Ok(synthetic_flow(seed, 2015, 8, &SynthParams::default())?),
        (None, None) => bail!("no flow data: pass --flow-data <path> or --seed <u64>"),
    }
}

fn write_output(out: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display())),
        None => stdout.write_all(bytes).context("cannot write to stdout"),
    }
}

fn cmd_ingest(args: &IngestArgs, stdout: &mut dyn Write) -> Result<()> {
    if args.common.format != OutputFormat::Csv {
        bail!("ingest writes the profile as csv only");
    }
    let config = load_config(&args.common)?;
    let window = args.window.unwrap_or(config.plant.smoothing_window);
    let series = load_series(&args.common)?;
    let archive = FlowArchive::from_series(&series);
    let years: Vec<i32> = if args.years.is_empty() {
        archive.years().collect()
    } else {
        args.years.clone()
    };
    if years.is_empty() {
        bail!("flow data contains no complete calendar year");
    }
    let profile = archive.profile(&years, i32::MAX, window)?;
    let mut bytes = Vec::new();
    profile.write_csv(&mut bytes)?;
    write_output(args.common.out.as_deref(), &bytes, stdout)?;
    if args.common.out.is_some() {
        writeln!(
            stdout,
            "rows={} years={} window={}",
            series.len(),
            years.iter().map(i32::to_string).collect::<Vec<_>>().join(","),
            window
        )?;
    }
    Ok(())
}

struct YearRun {
    year: i32,
    config: ConfigFile,
    regime: Regime,
    actual: Vec<f64>,
    profile: MeanFlowProfile,
}

fn prepare_year(args: &RunArgs) -> Result<YearRun> {
    let mut config = load_config(&args.common)?;
    let p = &mut config.plant;
    if let Some(m) = args.forecast_days {
        p.forecast_days = m;
    }
    if let Some(n) = args.dam_days {
        p.n_days_dam = n;
    }
    if let Some(g) = args.gamma {
        p.gamma = g;
    }
    if let Some(h) = args.half_life {
        p.half_life_days = h;
    }
    p.validate()?;
    config.grid.grid().validate()?;
    let regime = regime(&args.common, &config);

    let series = load_series(&args.common)?;
    let archive = FlowArchive::from_series(&series);
    let year = match args.year {
        Some(y) => y,
        None => archive
            .years()
            .last()
            .context("flow data contains no complete calendar year")?,
    };
    let horizon = config.grid.horizon;
    let flow = archive.year(year)?;
    if flow.len() < horizon {
        bail!("year {year} has {} days of flow, horizon is {horizon}", flow.len());
    }
    let actual = flow[..horizon].to_vec();
    // Earlier years if there are any, else every other year, else the target
    // year itself.
    let mut history = config.sweep.history_years.clone();
    if history.is_empty() {
        history = archive.years().filter(|y| *y < year).collect();
    }
    if history.is_empty() {
        history = archive.years().filter(|y| *y != year).collect();
    }
    if history.is_empty() {
        history.push(year);
    }
    let profile = archive.profile(&history, year, config.plant.smoothing_window)?;
    Ok(YearRun {
        year,
        config,
        regime,
        actual,
        profile,
    })
}

fn receding(run: &YearRun) -> Result<StrategyRecord> {
    let p = &run.config.plant;
    let plant = p.plant(run.regime)?;
    let forecaster = PerfectForecast::new(&run.actual, p.forecast_days);
    Ok(run_receding_horizon(
        &run.actual,
        &forecaster,
        &run.profile,
        &plant,
        &run.config.grid.grid(),
        &p.price_series()?,
        p.half_life_days,
    )?)
}

fn write_record(record: &StrategyRecord, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    record.write_text(&mut w)?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_optimize(args: &RunArgs, stdout: &mut dyn Write) -> Result<()> {
    let run = prepare_year(args)?;
    let p = &run.config.plant;
    let plant = p.plant(run.regime)?;
    let hindsight = run_hindsight(&run.actual, &plant, &run.config.grid.grid(), &p.price_series()?)?;
    let strategy = receding(&run)?;

    let dir = args.common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let h_path = dir.join(format!("hindsight_{}.txt", run.year));
    let r_path = dir.join(format!("receding_{}.txt", run.year));
    write_record(&hindsight, &h_path)?;
    write_record(&strategy, &r_path)?;

    writeln!(
        stdout,
        "year={} regime={} hindsight_profit={:.6} strategy_profit={:.6} switches_opt={} switches_dpp={}",
        run.year,
        run.regime,
        hindsight.total_profit,
        strategy.total_profit,
        hindsight.switch_count(),
        strategy.switch_count()
    )?;
    let ratio = performance_ratio(strategy.total_profit, hindsight.total_profit)?;
    writeln!(stdout, "ratio={ratio:.9}")?;
    if ratio > 1.0 + hydrosched::bench::DOMINANCE_SLACK {
        bail!("strategy profit exceeds the hindsight optimum (ratio {ratio})");
    }
    Ok(())
}

fn cmd_simulate(args: &RunArgs, stdout: &mut dyn Write) -> Result<()> {
    let run = prepare_year(args)?;
    let strategy = receding(&run)?;
    match &args.common.out {
        Some(path) => {
            write_record(&strategy, path)?;
            writeln!(
                stdout,
                "year={} total_profit={:.6} switches={}",
                run.year,
                strategy.total_profit,
                strategy.switch_count()
            )?;
        }
        None => strategy.write_text(&mut *stdout)?,
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<()> {
    let config = load_config(&args.common)?;
    let mut spec = SweepSpec::from_config(&config);
    spec.regime = regime(&args.common, &config);
    let replace = |axis: &mut Vec<f64>, given: &[f64]| {
        if !given.is_empty() {
            *axis = given.to_vec();
        }
    };
    replace(&mut spec.dam_days, &args.dam_days);
    replace(&mut spec.gammas, &args.gamma);
    replace(&mut spec.half_lives, &args.half_life);
    if !args.forecast_days.is_empty() {
        spec.forecast_days = args.forecast_days.clone();
    }
    if !args.history_years.is_empty() {
        spec.history_years = args.history_years.clone();
    }

    let series = load_series(&args.common)?;
    let archive = FlowArchive::from_series(&series);
    if !args.years.is_empty() {
        spec.years = args.years.clone();
    }
    if spec.years.is_empty() {
        spec.years = archive.years().skip(1).collect();
    }
    let results = run_sweep(&spec, &archive)?;
    let bytes = emit_results(&results, args.common.format)?;
    write_output(args.common.out.as_deref(), &bytes, stdout)?;

    if args.common.out.is_some() {
        writeln!(stdout, "cells={}", results.len())?;
        for s in summarize(&results) {
            writeln!(
                stdout,
                "mean_ratio {}={} {:.6} ({} cells)",
                s.axis, s.value, s.mean_ratio, s.cells
            )?;
        }
    }
    let bad: Vec<_> = results.iter().filter(|r| r.violates_dominance()).collect();
    if let Some(r) = bad.first() {
        bail!(
            "{} cell(s) exceed the hindsight optimum, e.g. year {} M={} N={} gamma={}",
            bad.len(),
            r.year,
            r.forecast_days,
            r.dam_days,
            r.gamma
        );
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs, stdout: &mut dyn Write) -> Result<()> {
    if args.years == 0 {
        bail!("--years must be at least 1");
    }
    let series = synthetic_flow(args.seed, args.start_year, args.years, &SynthParams::default())?;
    let mut bytes = Vec::new();
    series.write_csv(&mut bytes)?;
    write_output(args.out.as_deref(), &bytes, stdout)
}

/// Runs the binary's logic, printing errors to stderr. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock).and_then(|()| lock.flush().context("cannot write to stdout")) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
