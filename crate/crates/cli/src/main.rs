use clap::{Args, Parser, Subcommand, ValueEnum};
use fcpt::covariance::default_bandwidth;
use fcpt::limits::{limit_amoc, limit_gradual, DEFAULT_GRID_STEPS, DEFAULT_MC_REPS};
use fcpt::pipeline::{self, energy_dimension, RunConfig, SimulationSpec, StudySpec};
use fcpt::{crit_value, eig, io, json, lrcov, Bandwidth, Error, KernelFn, Method, Result, WeightFn};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fcpt", version, about = "Change point tests for the mean of functional time series")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test one dataset for a change in the mean.
    Detect(DetectArgs),
    /// Generate a synthetic dataset from a JSON specification.
    Simulate(SimulateArgs),
    /// Simulate critical values of the null limit.
    Critvals(CritvalsArgs),
    /// Run a size and power study from a JSON specification.
    PowerStudy(StudyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, default_value = "wf")]
    method: Method,
    /// Weight of the gradual statistic, `power:<alpha>` or `step`. Omit for the AMOC test.
    #[arg(long)]
    h: Option<WeightFn>,
    #[arg(long, default_value = "bartlett")]
    kernel: KernelFn,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// PC dimension.
    #[arg(long)]
    num_components: Option<usize>,
    /// Choose the PC dimension by explained fraction of the long-run trace.
    #[arg(long, conflicts_with = "num_components")]
    energy: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MC_REPS)]
    mc_reps: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_STEPS)]
    grid_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Treat the first CSV row as the grid points.
    #[arg(long)]
    grid_header: bool,
}

#[derive(Args)]
struct DetectArgs {
    /// CSV file with one curve per row.
    input: PathBuf,
    #[command(flatten)]
    test: TestArgs,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON simulation specification.
    spec: PathBuf,
    /// Overrides the seed of the specification.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the grid points as a header row.
    #[arg(long)]
    grid_header: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CritvalsArgs {
    /// Eigenvalues as a JSON array, e.g. `[1.0, 0.25]`.
    #[arg(long, required_unless_present = "from_data", conflicts_with = "from_data")]
    eigenvalues: Option<String>,
    /// Estimate the eigenvalues from a CSV dataset.
    #[arg(long)]
    from_data: Option<PathBuf>,
    #[command(flatten)]
    test: TestArgs,
    /// Significance levels.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.01")]
    alpha: Vec<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// JSON study specification.
    spec: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match output {
        Some(path) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
            write(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(output: Option<&Path>, value: &T) -> Result<()> {
    let text = json::to_string(value)?;
    emit(output, |w| Ok(w.write_all(text.as_bytes())?))
}

fn detect(args: DetectArgs) -> Result<()> {
    let t = args.test;
    let cfg = RunConfig {
        method: t.method,
        h: t.h,
        kernel: t.kernel,
        bandwidth: t.bandwidth,
        num_components: t.num_components,
        energy: t.energy,
        alpha: args.alpha,
        mc_reps: t.mc_reps,
        grid_steps: t.grid_steps,
        seed: t.seed,
        input: Some(args.input),
        grid_header: t.grid_header,
    };
    let report = pipeline::detect_pipeline(&cfg)?;
    emit_json(args.output.as_deref(), &report)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut spec: SimulationSpec = read_json(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let xs = pipeline::simulate(&spec)?;
    emit(args.output.as_deref(), |w| io::write_series(w, &xs, args.grid_header))
}

#[derive(Serialize)]
struct CritRow {
    alpha: f64,
    /// On the scale of the reported statistic.
    critical_value: f64,
    critical_value_squared: f64,
}

#[derive(Serialize)]
struct CritReport {
    schema_version: u32,
    version: &'static str,
    family: fcpt::Family,
    eigenvalues: Vec<f64>,
    d: Option<usize>,
    h: Option<WeightFn>,
    mc_reps: usize,
    grid_steps: usize,
    seed: u64,
    critical_values: Vec<CritRow>,
}

fn critvals(args: CritvalsArgs) -> Result<()> {
    let t = args.test;
    let eigenvalues: Vec<f64> = match (&args.eigenvalues, &args.from_data) {
        (Some(text), _) => serde_json::from_str(text)
            .map_err(|e| Error::Input(format!("eigenvalues must be a JSON array of numbers: {e}")))?,
        (None, Some(path)) => {
            let xs = io::read_csv(path, t.grid_header)?;
            let h = match t.bandwidth {
                Some(b) => Bandwidth::new(b)?,
                None => default_bandwidth(xs.n(), t.kernel),
            };
            eig(&lrcov(&xs, t.kernel, h)?)?.eigenvalues().to_vec()
        }
        (None, None) => return Err(Error::Input("give --eigenvalues or --from-data".into())),
    };
    let d = match t.method {
        Method::Pc => Some(match t.num_components {
            Some(d) => d,
            None => energy_dimension(&eigenvalues, t.energy)?,
        }),
        _ => None,
    };
    let samples = match &t.h {
        None => limit_amoc(t.method, &eigenvalues, d, t.mc_reps, t.grid_steps, t.seed)?,
        Some(h) => limit_gradual(t.method, &eigenvalues, d, h, t.mc_reps, t.grid_steps, t.seed)?,
    };
    let squared = t.method == Method::Pc;
    let critical_values = args
        .alpha
        .iter()
        .map(|&alpha| {
            let c = crit_value(&samples, alpha)?;
            Ok(CritRow { alpha, critical_value: if squared { c } else { c.sqrt() }, critical_value_squared: c })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = CritReport {
        schema_version: json::SCHEMA_VERSION,
        version: fcpt::VERSION,
        family: samples.family,
        eigenvalues,
        d,
        h: t.h,
        mc_reps: t.mc_reps,
        grid_steps: t.grid_steps,
        seed: t.seed,
        critical_values,
    };
    match args.format {
        Format::Json => emit_json(args.output.as_deref(), &report),
        Format::Csv => emit(args.output.as_deref(), |w| {
            writeln!(w, "alpha,critical_value,critical_value_squared")?;
            for row in &report.critical_values {
                writeln!(w, "{:?},{:?},{:?}", row.alpha, row.critical_value, row.critical_value_squared)?;
            }
            Ok(())
        }),
    }
}

fn study(args: StudyArgs) -> Result<()> {
    let spec: StudySpec = read_json(&args.spec)?;
    let result = pipeline::power_study(&spec)?;
    match args.format {
        Format::Json => emit_json(args.output.as_deref(), &result),
        Format::Csv => emit(args.output.as_deref(), |w| pipeline::write_study_csv(w, &result)),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Parameter(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Detect(a) => detect(a),
        Command::Simulate(a) => simulate(a),
        Command::Critvals(a) => critvals(a),
        Command::PowerStudy(a) => study(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
