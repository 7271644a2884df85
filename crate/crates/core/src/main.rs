use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use ptproc::config::{ModelKind, RunConfig, SampleSource};
use ptproc::error::ParamError;
use ptproc::harness::{self, Trace};
use ptproc::mh::{mh_step, MhChainState};
use ptproc::poisson::sample_poisson;
use ptproc::rng::{substream, StreamTag};
use ptproc::{EngineKind, Error, PointPattern, StatisticSpec};

#[derive(Parser)]
#[command(name = "ptproc", version, about = "Expectations of locally stable point processes by AIS, MH and dominated CFTP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate E_f[K(X)] with one engine and print a JSON report.
    Estimate {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        engine: Option<EngineKind>,
        #[arg(long)]
        target_rel_se: Option<f64>,
    },
    /// Run every engine on a list of cases and write the time-variance CSV.
    Benchmark {
        #[command(flatten)]
        shared: Shared,
        /// Restrict all cases to these engines.
        #[arg(long, value_enum, value_delimiter = ',')]
        engines: Option<Vec<EngineKind>>,
        #[arg(long)]
        target_rel_se: Option<f64>,
    },
    /// Brute-force series value of E_f[K(X)] for tiny windows.
    Oracle {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        mc_points: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Write sampled patterns as CSV, one file per replication.
    Sample {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        engine: Option<SampleSource>,
        /// Intensity for `--engine poisson`.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        replications: Option<usize>,
    },
}

#[derive(Args)]
struct Shared {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "PTPROC_THREADS")]
    threads: Option<usize>,
    /// Output file (a directory for `sample`); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: bool,
    /// Named case set: paper-tables, desk, tiny-strauss, tiny-poisson.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatKind {
    PapangelouOrigin,
    BoundaryCount,
    PointCount,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "stat", value_enum)]
    stat: Option<StatKind>,
    /// Band for `--stat boundary-count`.
    #[arg(long, default_value_t = 0.49)]
    band: f64,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    window_lower: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    window_upper: Option<Vec<f64>>,
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let m = &mut cfg.model;
        if let Some(k) = self.model {
            m.kind = k;
        }
        m.beta = self.beta.or(m.beta);
        m.gamma = self.gamma.or(m.gamma);
        m.r = self.r.unwrap_or(m.r);
        m.alpha = self.alpha.unwrap_or(m.alpha);
        if let Some(s) = self.stat {
            cfg.statistic = match s {
                StatKind::PapangelouOrigin => StatisticSpec::PapangelouOrigin,
                StatKind::BoundaryCount => StatisticSpec::BoundaryCount { band: self.band },
                StatKind::PointCount => StatisticSpec::PointCount,
            };
        }
        if let Some(lo) = &self.window_lower {
            cfg.window.lower = lo.clone();
        }
        if let Some(hi) = &self.window_upper {
            cfg.window.upper = hi.clone();
        }
    }
}

enum Failure {
    Invalid(String),
    Engine(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Engine(_) => 3,
            Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Engine(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ParamError> for Failure {
    fn from(e: ParamError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Geometry(_) | Error::Param(_) => Failure::Invalid(e.to_string()),
            Error::Cftp(_) | Error::Oracle(_) => Failure::Engine(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn load(shared: &Shared) -> Result<RunConfig, Failure> {
    let mut cfg = match &shared.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("config: {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = shared.seed {
        cfg.seed = s;
    }
    if shared.threads.is_some() {
        cfg.threads = shared.threads;
    }
    if shared.out.is_some() {
        cfg.out = shared.out.clone();
    }
    cfg.trace |= shared.trace;
    Ok(cfg)
}

fn init_threads(cfg: &RunConfig) -> Result<(), Failure> {
    match cfg.threads {
        Some(0) => Err(Failure::Invalid("threads: must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(format!("thread pool: {e}"))),
        None => Ok(()),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

/// `report.json` → `report.trace.csv`; `trace.csv` beside stdout output.
fn sidecar(out: Option<&Path>, suffix: &str) -> PathBuf {
    match out {
        Some(p) => {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            p.with_file_name(format!("{stem}.{suffix}"))
        }
        None => PathBuf::from(suffix),
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn write_trace(path: &Path, trace: &Trace) -> Result<(), Failure> {
    let mut w = csv_writer(fs::File::create(path)?);
    match trace {
        Trace::Ais(records) => {
            for r in records {
                w.serialize(r)?;
            }
        }
        Trace::Samples(values) => {
            w.write_record(["sample", "k"])?;
            for (i, v) in values.iter().enumerate() {
                w.write_record([i.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_estimate(shared: Shared, model: ModelArgs, engine: Option<EngineKind>, target: Option<f64>) -> Result<(), Failure> {
    let mut cfg = load(&shared)?;
    if let Some(p) = &shared.preset {
        cfg.apply_preset(p)?;
    }
    model.apply(&mut cfg);
    cfg.engine = engine.unwrap_or(cfg.engine);
    cfg.target_rel_se = target.unwrap_or(cfg.target_rel_se);
    let (m, k) = cfg.build()?;
    init_threads(&cfg)?;
    let est = harness::estimate(cfg.engine, m.as_ref(), k.as_ref(), cfg.target_rel_se, &cfg.settings, cfg.seed)?;
    let out = cfg.out.as_deref();
    emit(out, &to_json(&json!({ "report": est.report, "config": cfg })))?;
    if cfg.trace {
        write_trace(&sidecar(out, "trace.csv"), &est.trace)?;
    }
    Ok(())
}

fn hardware_metadata(cfg: &RunConfig) -> serde_json::Value {
    let cpu = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("model name")).and_then(|l| l.split(':').nth(1)).map(|s| s.trim().to_string()));
    json!({
        "ptproc_version": env!("CARGO_PKG_VERSION"),
        "os": std::env::consts::OS,
        "arch": std::env::consts::ARCH,
        "cpu_model": cpu,
        "available_parallelism": std::thread::available_parallelism().map(|n| n.get()).ok(),
        "worker_threads": rayon::current_num_threads(),
        "clock": "monotonic",
        "config": cfg,
    })
}

fn cmd_benchmark(shared: Shared, engines: Option<Vec<EngineKind>>, target: Option<f64>) -> Result<(), Failure> {
    let mut cfg = load(&shared)?;
    if let Some(p) = &shared.preset {
        cfg.benchmark.preset = Some(p.clone());
        cfg.benchmark.cases = None;
    }
    if engines.is_some() {
        cfg.benchmark.engines = engines;
    }
    cfg.target_rel_se = target.unwrap_or(cfg.target_rel_se);
    let cases = cfg.benchmark.resolve_cases()?;
    cfg.settings.validate()?;
    init_threads(&cfg)?;
    let rows = harness::benchmark(&cases, cfg.target_rel_se, &cfg.settings, cfg.seed)?;
    let mut buf = Vec::new();
    harness::write_benchmark_csv(&rows, &mut buf)?;
    let out = cfg.out.as_deref();
    emit(out, &buf)?;
    if out.is_some() {
        fs::write(sidecar(out, "meta.json"), to_json(&hardware_metadata(&cfg)))?;
    }
    Ok(())
}

fn cmd_oracle(
    shared: Shared,
    model: ModelArgs,
    n_max: Option<usize>,
    mc_points: Option<usize>,
    tolerance: Option<f64>,
) -> Result<(), Failure> {
    let mut cfg = load(&shared)?;
    if let Some(p) = &shared.preset {
        cfg.apply_preset(p)?;
    }
    model.apply(&mut cfg);
    cfg.oracle.n_max = n_max.unwrap_or(cfg.oracle.n_max);
    cfg.oracle.mc_points = mc_points.unwrap_or(cfg.oracle.mc_points);
    cfg.oracle.tolerance = tolerance.unwrap_or(cfg.oracle.tolerance);
    if shared.seed.is_some() {
        cfg.oracle.seed = cfg.seed;
    }
    let (m, k) = cfg.build()?;
    init_threads(&cfg)?;
    let result = harness::brute_force_expectation(m.as_ref(), k.as_ref(), &cfg.oracle)?;
    emit(cfg.out.as_deref(), &to_json(&json!({ "result": result, "config": cfg })))?;
    Ok(())
}

fn write_pattern(path: &Path, x: &PointPattern) -> Result<(), Failure> {
    let mut w = csv_writer(fs::File::create(path)?);
    let header: Vec<String> = match x.dim() {
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        d => (0..d).map(|i| format!("x{i}")).collect(),
    };
    w.write_record(&header)?;
    for p in x.iter() {
        w.write_record(p.iter().map(|c| c.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_sample(
    shared: Shared,
    model: ModelArgs,
    engine: Option<SampleSource>,
    rho: Option<f64>,
    replications: Option<usize>,
) -> Result<(), Failure> {
    let mut cfg = load(&shared)?;
    if let Some(p) = &shared.preset {
        cfg.apply_preset(p)?;
    }
    model.apply(&mut cfg);
    cfg.sample.source = engine.unwrap_or(cfg.sample.source);
    cfg.sample.rho = rho.or(cfg.sample.rho);
    cfg.sample.replications = replications.unwrap_or(cfg.sample.replications);
    if cfg.sample.replications == 0 {
        return Err(ParamError::new("sample.replications", "must be at least 1").into());
    }
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("samples"));
    let n = cfg.sample.replications;
    let file = |k: usize| dir.join(format!("pattern_{k:04}.csv"));
    let mut trace = csv_writer(Vec::new());

    match cfg.sample.source {
        SampleSource::Poisson => {
            let window = cfg.window.build()?;
            let rho = cfg.sample.rho.ok_or_else(|| ParamError::new("sample.rho", "required for the poisson source (--rho)"))?;
            if !(rho.is_finite() && rho > 0.0) {
                return Err(ParamError::new("sample.rho", "must be positive and finite").into());
            }
            init_threads(&cfg)?;
            fs::create_dir_all(&dir)?;
            trace.write_record(["replication", "n"])?;
            for k in 0..n {
                let x = sample_poisson(&window, rho, &mut substream(cfg.seed, StreamTag::Sample, 0, k as u64));
                write_pattern(&file(k), &x)?;
                trace.write_record([k.to_string(), x.len().to_string()])?;
            }
        }
        SampleSource::Cftp => {
            let (m, _) = cfg.build()?;
            init_threads(&cfg)?;
            fs::create_dir_all(&dir)?;
            trace.write_record(["replication", "horizon", "doublings", "n"])?;
            for k in 0..n {
                let mut rng = substream(cfg.seed, StreamTag::Sample, 0, k as u64);
                let d = ptproc::cftp::cftp_sample(m.as_ref(), &cfg.settings.cftp, &mut rng).map_err(Error::from)?;
                write_pattern(&file(k), &d.pattern)?;
                trace.write_record([k.to_string(), d.horizon.to_string(), d.doublings.to_string(), d.pattern.len().to_string()])?;
            }
        }
        SampleSource::Mh => {
            // One chain; replication k is the k-th thinned state after burn-in.
            let (m, _) = cfg.build()?;
            init_threads(&cfg)?;
            fs::create_dir_all(&dir)?;
            let mh = cfg.settings.mh.resolve(m.as_ref())?;
            let mut rng = substream(cfg.seed, StreamTag::Sample, 0, 0);
            let mut state = MhChainState::initial(m.as_ref(), &mh, &mut rng);
            trace.write_record(["step", "n"])?;
            let mut step = 0u64;
            for k in 0..n {
                let todo = if k == 0 { mh.burn_in + mh.thin } else { mh.thin };
                for _ in 0..todo {
                    mh_step(&mut state, m.as_ref(), &mh, &mut rng);
                    step += 1;
                    trace.write_record([step.to_string(), state.pattern().len().to_string()])?;
                }
                write_pattern(&file(k), state.pattern())?;
            }
        }
    }
    if cfg.trace {
        let bytes = trace.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
        fs::write(dir.join("trace.csv"), bytes)?;
    }
    fs::write(dir.join("config.json"), to_json(&cfg))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate { shared, model, engine, target_rel_se } => cmd_estimate(shared, model, engine, target_rel_se),
        Command::Benchmark { shared, engines, target_rel_se } => cmd_benchmark(shared, engines, target_rel_se),
        Command::Oracle { shared, model, n_max, mc_points, tolerance } => {
            cmd_oracle(shared, model, n_max, mc_points, tolerance)
        }
        Command::Sample { shared, model, engine, rho, replications } => cmd_sample(shared, model, engine, rho, replications),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ptproc: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
