use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use pass_core::batch::{
    eval_kkt, eval_solutions, read_eval_input, run_batch, BatchConfig, EvalInput, KktFile,
    SolutionFile,
};
use pass_core::io::{
    export_dataset, gen_scenarios, read_json, read_records, read_scenario_file, report, write_json,
    write_records, write_series, Method, ReportAxis, RunRecord, ScenarioParams, SCHEMA_VERSION,
};
use pass_core::mmpdd::write_trace_csv;
use pass_core::PassError;

/// Worker-thread count for batch runs.
const THREADS_ENV: &str = "PASS_THREADS";

const EXIT_INVALID: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "pass", version, about = "Pinching-antenna beamforming solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded scenario file.
    Gen(GenArgs),
    /// Solve every scenario of a file and write a result CSV.
    Solve(SolveArgs),
    /// Score a solution file or a KKT parameter file.
    Eval(EvalArgs),
    /// Export a scenario file as a trainer dataset.
    Dataset(DatasetArgs),
    /// Aggregate result CSVs into (x, mean, std) series per method.
    Report(ReportArgs),
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long, default_value_t = 64)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with generation parameters; flags below override it.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Number of users (and waveguides).
    #[arg(long)]
    users: Option<usize>,
    /// Pinching antennas per waveguide.
    #[arg(long)]
    pas: Option<usize>,
    #[arg(long)]
    span_x: Option<f64>,
    #[arg(long)]
    span_y: Option<f64>,
    #[arg(long)]
    power_dbm: Option<f64>,
    #[arg(long)]
    noise_dbm: Option<f64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    Mmpdd,
    KdlSearch,
    FdMimo,
    Uniform,
    Oracle,
}

impl From<SolveMethod> for Method {
    fn from(m: SolveMethod) -> Self {
        match m {
            SolveMethod::Mmpdd => Method::Mmpdd,
            SolveMethod::KdlSearch => Method::KdlSearch,
            SolveMethod::FdMimo => Method::FdMimo,
            SolveMethod::Uniform => Method::Uniform,
            SolveMethod::Oracle => Method::Oracle,
        }
    }
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long, short)]
    scenarios: PathBuf,
    #[arg(long, short, value_enum)]
    method: SolveMethod,
    /// Result CSV.
    #[arg(long, short)]
    out: PathBuf,
    /// JSON batch configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Evaluation budget of kdl-search.
    #[arg(long)]
    budget: Option<usize>,
    /// Grid step of the oracle in meters.
    #[arg(long)]
    oracle_resolution: Option<f64>,
    /// Write placements and beams here.
    #[arg(long)]
    solutions: Option<PathBuf>,
    /// Write KKT parameters here (kdl-search only).
    #[arg(long)]
    kkt_out: Option<PathBuf>,
    /// Write one outer-iteration trace CSV per scenario here (mmpdd only).
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Exit with status 3 if any scenario failed or did not converge.
    #[arg(long)]
    strict: bool,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long, short)]
    scenarios: PathBuf,
    /// Solution file or KKT parameter file.
    #[arg(long, short)]
    input: PathBuf,
    /// Method recorded for KKT parameter files.
    #[arg(long, default_value = "transformer")]
    method: String,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct DatasetArgs {
    #[arg(long, short)]
    scenarios: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    PDbm,
    L,
    SpanX,
    NUsers,
}

impl From<Axis> for ReportAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::PDbm => ReportAxis::PDbm,
            Axis::L => ReportAxis::L,
            Axis::SpanX => ReportAxis::SpanX,
            Axis::NUsers => ReportAxis::NUsers,
        }
    }
}

#[derive(clap::Args)]
struct ReportArgs {
    /// Result CSVs to aggregate.
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "p-dbm")]
    axis: Axis,
    #[arg(long, short)]
    out: PathBuf,
}

/// Errors that map to a specific exit status.
#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] PassError),
    #[error("{0}")]
    Usage(String),
    #[error("{failed} of {total} scenarios failed or did not converge")]
    NotConverged { failed: usize, total: usize },
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Core(_) | CliError::Usage(_) => EXIT_INVALID,
            CliError::NotConverged { .. } => EXIT_NOT_CONVERGED,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("building the worker pool")?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Dataset(a) => dataset(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn gen(a: GenArgs) -> CliResult<()> {
    let mut params: ScenarioParams = match &a.params {
        Some(p) => read_json(p).map_err(at(p))?,
        None => ScenarioParams::default(),
    };
    if let Some(v) = a.users {
        params.n_users = v;
    }
    if let Some(v) = a.pas {
        params.pas_per_waveguide = v;
    }
    if let Some(v) = a.span_x {
        params.span_x = v;
    }
    if let Some(v) = a.span_y {
        params.span_y = v;
    }
    if let Some(v) = a.power_dbm {
        params.max_power_dbm = v;
    }
    if let Some(v) = a.noise_dbm {
        params.noise_power_dbm = v;
    }
    let file = gen_scenarios(a.count, &params, a.seed)?;
    write_json(&file, &a.out)?;
    info!(
        "wrote {} scenarios to {}",
        file.scenarios.len(),
        a.out.display()
    );
    Ok(())
}

fn solve(a: SolveArgs) -> CliResult<()> {
    let file = read_scenario_file(&a.scenarios).map_err(at(&a.scenarios))?;
    let method = Method::from(a.method);
    let mut config = match &a.config {
        Some(p) => {
            let mut c: BatchConfig = read_json(p).map_err(at(p))?;
            c.method = method;
            c
        }
        None => BatchConfig::new(method),
    };
    if let Some(b) = a.budget {
        config.search.budget = b;
    }
    if let Some(r) = a.oracle_resolution {
        config.oracle_resolution = r;
    }
    config.solver.validate()?;
    if config.oracle_resolution.is_nan() || config.oracle_resolution <= 0.0 {
        return Err(CliError::Usage("oracle resolution must be positive".into()));
    }

    let items = run_batch(&file, &config);
    let records: Vec<RunRecord> = items.iter().map(|i| i.record.clone()).collect();
    write_csv(&a.out, &records)?;

    if let Some(path) = &a.solutions {
        let sols = SolutionFile {
            schema_version: SCHEMA_VERSION,
            entries: items.iter().filter_map(|i| i.solution.clone()).collect(),
        };
        write_json(&sols, path)?;
    }
    if let Some(path) = &a.kkt_out {
        let kkt = KktFile {
            schema_version: SCHEMA_VERSION,
            entries: items.iter().filter_map(|i| i.kkt.clone()).collect(),
        };
        write_json(&kkt, path)?;
    }
    if let Some(dir) = &a.trace_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for item in &items {
            if let Some(trace) = &item.trace {
                let path = dir.join(format!("{}.csv", item.record.scenario_id));
                let f =
                    File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                write_trace_csv(trace, BufWriter::new(f))?;
            }
        }
    }

    for r in records.iter().filter(|r| !r.error.is_empty()) {
        warn!("{}: {}", r.scenario_id, r.error);
    }
    let failed = records
        .iter()
        .filter(|r| !r.error.is_empty() || !r.converged)
        .count();
    if a.strict && failed > 0 {
        return Err(CliError::NotConverged {
            failed,
            total: records.len(),
        });
    }
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let file = read_scenario_file(&a.scenarios).map_err(at(&a.scenarios))?;
    let records = match read_eval_input(&a.input).map_err(at(&a.input))? {
        EvalInput::Solutions(s) => eval_solutions(&file, &s)?,
        EvalInput::Kkt(k) => {
            let method: Method = a.method.parse()?;
            eval_kkt(&file, &k, method)?
        }
    };
    write_csv(&a.out, &records)
}

fn dataset(a: DatasetArgs) -> CliResult<()> {
    let file = read_scenario_file(&a.scenarios).map_err(at(&a.scenarios))?;
    write_json(&export_dataset(&file), &a.out)?;
    Ok(())
}

fn report_cmd(a: ReportArgs) -> CliResult<()> {
    let mut records = Vec::new();
    for path in &a.inputs {
        let f = open(path)?;
        records.extend(read_records(BufReader::new(f)).map_err(at(path))?);
    }
    let points = report(&records, a.axis.into());
    let f = create(&a.out)?;
    write_series(&points, BufWriter::new(f))?;
    Ok(())
}

fn write_csv(path: &Path, records: &[RunRecord]) -> CliResult<()> {
    let f = create(path)?;
    write_records(records, BufWriter::new(f))?;
    Ok(())
}

/// Prefixes a read error with the offending path.
fn at(path: &Path) -> impl FnOnce(PassError) -> CliError + '_ {
    move |e| CliError::Usage(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<File> {
    Ok(File::create(path).with_context(|| format!("creating {}", path.display()))?)
}
