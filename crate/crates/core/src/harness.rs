//! Engine-agnostic estimation, the brute-force series oracle, replication
//! studies and the time-variance benchmark.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::ais::{ais_run, AisConfig, TraceRecord};
use crate::cftp::{cftp_sample, CftpConfig};
use crate::error::{CftpError, Error, OracleError, ParamError};
use crate::geometry::{uniform_point, PointPattern, Window};
use crate::mh::{MhConfig, MhSampler};
use crate::models::{Model, ModelSpec, Statistic, StatisticSpec};
use crate::report::{EngineKind, EstimateReport, RunningMoments, StopReason};
use crate::rng::{derive_seed, substream, StreamTag};

/// Per-engine settings shared by every harness entry point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSettings {
    pub ais: AisConfig,
    pub mh: MhConfig,
    pub cftp: CftpConfig,
    /// Sequential stopping for MH and CFTP is not checked before this many samples.
    pub min_samples: usize,
    pub max_samples: usize,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            ais: AisConfig::default(),
            mh: MhConfig::default(),
            cftp: CftpConfig::default(),
            min_samples: 20,
            max_samples: 1_000_000,
        }
    }
}

impl EngineSettings {
    pub fn validate(&self) -> Result<(), ParamError> {
        self.ais.validate()?;
        self.mh.validate()?;
        if self.cftp.initial_horizon.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || !self.cftp.initial_horizon.is_finite()
        {
            return Err(ParamError::new("cftp.initial_horizon", "must be positive and finite"));
        }
        if self.min_samples < 2 {
            return Err(ParamError::new("min_samples", "must be at least 2"));
        }
        if self.max_samples < self.min_samples {
            return Err(ParamError::new("max_samples", "must be at least min_samples"));
        }
        Ok(())
    }
}

/// Per-step diagnostics: the AIS iteration record, or the raw statistic
/// values for the sampling engines.
#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    Ais(Vec<TraceRecord>),
    Samples(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub report: EstimateReport,
    pub trace: Trace,
}

fn check_target(target_rel_se: f64) -> Result<(), ParamError> {
    if target_rel_se.is_finite() && target_rel_se > 0.0 {
        Ok(())
    } else {
        Err(ParamError::new("target_rel_se", format!("must be positive, got {target_rel_se}")))
    }
}

/// Runs `engine` until the relative standard error reaches `target_rel_se`.
///
/// AIS uses its own stopping rule with `η₁ = target²`. MH and CFTP sample
/// until `se/|μ̂| ≤ target`, checked after every sample once
/// `min_samples` are in.
pub fn estimate(
    engine: EngineKind,
    model: &dyn Model,
    stat: &dyn Statistic,
    target_rel_se: f64,
    settings: &EngineSettings,
    seed: u64,
) -> Result<Estimate, Error> {
    check_target(target_rel_se)?;
    settings.validate()?;
    match engine {
        EngineKind::Ais => {
            let cfg = AisConfig { eta1: target_rel_se * target_rel_se, stopping: true, ..settings.ais.clone() };
            let run = ais_run(model, stat, &cfg, seed)?;
            Ok(Estimate { report: run.report, trace: Trace::Ais(run.trace) })
        }
        EngineKind::Mh | EngineKind::Cftp => {
            let stop = SampleStop::Target { rel_se: target_rel_se, min: settings.min_samples, max: settings.max_samples };
            sample_estimate(engine, model, stat, settings, stop, seed)
        }
    }
}

/// Runs `engine` on a fixed budget: AIS iterations or MH/CFTP samples.
pub fn estimate_fixed(
    engine: EngineKind,
    model: &dyn Model,
    stat: &dyn Statistic,
    budget: u64,
    settings: &EngineSettings,
    seed: u64,
) -> Result<Estimate, Error> {
    settings.validate()?;
    if budget < 2 && engine != EngineKind::Ais || budget == 0 {
        return Err(ParamError::new("budget", "too small").into());
    }
    match engine {
        EngineKind::Ais => {
            let cfg = AisConfig { stopping: false, max_steps: budget, ..settings.ais.clone() };
            let run = ais_run(model, stat, &cfg, seed)?;
            Ok(Estimate { report: run.report, trace: Trace::Ais(run.trace) })
        }
        EngineKind::Mh | EngineKind::Cftp => {
            sample_estimate(engine, model, stat, settings, SampleStop::Fixed(budget as usize), seed)
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum SampleStop {
    Target { rel_se: f64, min: usize, max: usize },
    Fixed(usize),
}

impl SampleStop {
    /// `Some(reason)` once sampling should end.
    fn check(&self, m: &RunningMoments) -> Option<StopReason> {
        let n = m.count() as usize;
        match *self {
            SampleStop::Fixed(k) => (n >= k).then_some(StopReason::MaxSteps),
            SampleStop::Target { rel_se, min, max } => {
                if n >= min && m.standard_error() <= rel_se * m.mean().abs() {
                    Some(StopReason::Converged)
                } else if n >= max {
                    Some(StopReason::MaxSteps)
                } else {
                    None
                }
            }
        }
    }
}

fn sample_estimate(
    engine: EngineKind,
    model: &dyn Model,
    stat: &dyn Statistic,
    settings: &EngineSettings,
    stop: SampleStop,
    seed: u64,
) -> Result<Estimate, Error> {
    let started = Instant::now();
    let mut moments = RunningMoments::default();
    let mut values = Vec::new();
    let (stop_reason, steps) = match engine {
        EngineKind::Mh => {
            let mut sampler = MhSampler::new(model, &settings.mh, substream(seed, StreamTag::MhChain, 0, 0))?;
            let reason = loop {
                let k = stat.evaluate(sampler.next_sample().pattern());
                moments.push(k);
                values.push(k);
                if let Some(r) = stop.check(&moments) {
                    break r;
                }
            };
            (reason, sampler.steps())
        }
        EngineKind::Cftp => {
            // Draws are produced in parallel batches but absorbed in index
            // order, so the result does not depend on the batch size.
            let batch = rayon::current_num_threads().max(1) as u64;
            let mut next = 0u64;
            let reason = 'outer: loop {
                let draws: Vec<Result<f64, CftpError>> = (next..next + batch)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = substream(seed, StreamTag::CftpDraw, 0, i);
                        cftp_sample(model, &settings.cftp, &mut rng).map(|d| stat.evaluate(&d.pattern))
                    })
                    .collect();
                next += batch;
                for k in draws {
                    let k = k?;
                    moments.push(k);
                    values.push(k);
                    if let Some(r) = stop.check(&moments) {
                        break 'outer r;
                    }
                }
            };
            (reason, moments.count())
        }
        EngineKind::Ais => unreachable!("AIS is not a sampling engine"),
    };
    let wall_seconds = started.elapsed().as_secs_f64();
    let se = moments.standard_error();
    let report = EstimateReport {
        engine,
        mu_hat: moments.mean(),
        se,
        rho_final: None,
        steps,
        n_total: moments.count(),
        wall_seconds,
        time_variance: se * se * wall_seconds,
        stop_reason,
    };
    Ok(Estimate { report, trace: Trace::Samples(values) })
}

/// Settings of the truncated-series oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    /// Series truncation order `N`.
    pub n_max: usize,
    pub mc_points: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { n_max: 12, mc_points: 1_000_000, seed: 0, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub mu: f64,
    /// Upper bound on `P_f(n(X) > n_max)`.
    pub tail_bound: f64,
    pub mc_se: f64,
    /// Estimated `P_f(n(X) = k)` for `k = 0..=n_max`.
    pub count_distribution: Vec<f64>,
    pub n_max: usize,
    pub mc_points: usize,
}

/// `ln(e^{−|S|} Σ_{n>N} c*^n / n!)`, bounding the unnormalized mass of
/// orders above `N` since `∫_{S^n} h ≤ c*^n`.
pub fn log_series_tail(c_star: f64, area: f64, n_max: usize) -> f64 {
    let ln_c = c_star.ln();
    let mut acc = f64::NEG_INFINITY;
    let mut n = n_max + 1;
    loop {
        let term = n as f64 * ln_c - ln_gamma(n as f64 + 1.0);
        acc = crate::logsum::log_add_exp(acc, term);
        if n as f64 > c_star && term < acc - 40.0 {
            break;
        }
        n += 1;
    }
    acc - area
}

const ORACLE_CHUNK: usize = 4096;

#[derive(Debug, Clone, Default)]
struct OracleSums {
    num: f64,
    den: f64,
    nn: f64,
    nd: f64,
    dd: f64,
    by_count: Vec<f64>,
}

impl OracleSums {
    fn merge(mut self, o: &OracleSums) -> Self {
        self.num += o.num;
        self.den += o.den;
        self.nn += o.nn;
        self.nd += o.nd;
        self.dd += o.dd;
        if self.by_count.is_empty() {
            self.by_count = vec![0.0; o.by_count.len()];
        }
        for (a, b) in self.by_count.iter_mut().zip(&o.by_count) {
            *a += b;
        }
        self
    }
}

/// `E_f[K]` by the Poisson series truncated at `n_max`, each order
/// integrated by plain Monte Carlo.
///
/// Draw `j` is a sequence of `n_max` uniform points; its prefixes feed every
/// order at once, so numerator and denominator share random numbers.
pub fn brute_force_expectation(model: &dyn Model, stat: &dyn Statistic, spec: &OracleSpec) -> Result<OracleResult, Error> {
    if spec.mc_points < 2 {
        return Err(ParamError::new("oracle.mc_points", "must be at least 2").into());
    }
    if !(spec.tolerance > 0.0) {
        return Err(ParamError::new("oracle.tolerance", "must be positive").into());
    }
    let window = model.window().clone();
    let area = window.area();
    let n_max = spec.n_max;
    // ln(e^{−|S|} |S|^n / n!)
    let log_c: Vec<f64> = (0..=n_max).map(|n| -area + n as f64 * area.ln() - ln_gamma(n as f64 + 1.0)).collect();

    let chunks = spec.mc_points.div_ceil(ORACLE_CHUNK);
    let partial: Vec<OracleSums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(spec.seed, StreamTag::Oracle, 0, c as u64);
            let len = ORACLE_CHUNK.min(spec.mc_points - c * ORACLE_CHUNK);
            let mut sums = OracleSums { by_count: vec![0.0; n_max + 1], ..Default::default() };
            let mut x = PointPattern::with_capacity(window.clone(), n_max);
            for _ in 0..len {
                x.clear();
                let (mut d, mut nu) = (0.0, 0.0);
                for (n, lc) in log_c.iter().enumerate() {
                    if n > 0 {
                        x.push(&uniform_point(&window, &mut rng));
                    }
                    let term = (lc + model.log_h(&x)).exp();
                    d += term;
                    nu += term * stat.evaluate(&x);
                    sums.by_count[n] += term;
                }
                sums.num += nu;
                sums.den += d;
                sums.nn += nu * nu;
                sums.nd += nu * d;
                sums.dd += d * d;
            }
            sums
        })
        .collect();
    let total = partial.iter().fold(OracleSums::default(), |acc, s| acc.merge(s));

    let m = spec.mc_points as f64;
    let mu = total.num / total.den;
    // Delta method on the residuals N_j − μ D_j.
    let resid2 = (total.nn - 2.0 * mu * total.nd + mu * mu * total.dd).max(0.0);
    let d_bar = total.den / m;
    let mc_se = (resid2 / (m - 1.0)).sqrt() / (m.sqrt() * d_bar);

    let tail_bound = (log_series_tail(model.phi_integral(), area, n_max) - d_bar.ln()).exp();
    if !(tail_bound < spec.tolerance) {
        return Err(OracleError::TailBound { bound: tail_bound, n_max, tolerance: spec.tolerance }.into());
    }
    let count_distribution = total.by_count.iter().map(|v| v / total.den).collect();
    Ok(OracleResult { mu, tail_bound, mc_se, count_distribution, n_max, mc_points: spec.mc_points })
}

/// Stopping rule for each replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Run to a relative standard error target.
    Target(f64),
    /// AIS iterations, or MH/CFTP samples.
    Fixed(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub engine: EngineKind,
    pub replications: usize,
    pub reference: f64,
    pub mean: f64,
    pub empirical_variance: f64,
    /// Mean of the reported `se²`.
    pub mean_reported_variance: f64,
    /// `empirical_variance / mean_reported_variance`.
    pub calibration_ratio: f64,
    /// Fraction of 95% intervals `μ̂ ± 1.96·se` containing `reference`.
    pub coverage: f64,
    pub estimates: Vec<(f64, f64)>,
}

/// `replications` independent runs compared against `reference`.
#[allow(clippy::too_many_arguments)]
pub fn replicate(
    engine: EngineKind,
    model: &dyn Model,
    stat: &dyn Statistic,
    budget: Budget,
    replications: usize,
    reference: f64,
    settings: &EngineSettings,
    seed: u64,
) -> Result<ReplicationSummary, Error> {
    if replications < 2 {
        return Err(ParamError::new("replications", "must be at least 2").into());
    }
    let runs: Vec<Result<EstimateReport, Error>> = (0..replications)
        .into_par_iter()
        .map(|k| {
            let s = derive_seed(seed, StreamTag::Replication, 0, k as u64);
            let est = match budget {
                Budget::Target(t) => estimate(engine, model, stat, t, settings, s)?,
                Budget::Fixed(b) => estimate_fixed(engine, model, stat, b, settings, s)?,
            };
            Ok(est.report)
        })
        .collect();
    let mut estimates = Vec::with_capacity(replications);
    for r in runs {
        let r = r?;
        estimates.push((r.mu_hat, r.se));
    }
    Ok(summarize(engine, reference, estimates))
}

fn summarize(engine: EngineKind, reference: f64, estimates: Vec<(f64, f64)>) -> ReplicationSummary {
    let mut mu = RunningMoments::default();
    let mut reported = 0.0;
    let mut covered = 0usize;
    for &(m, se) in &estimates {
        mu.push(m);
        reported += se * se;
        if (m - reference).abs() <= 1.96 * se {
            covered += 1;
        }
    }
    let r = estimates.len() as f64;
    let mean_reported_variance = reported / r;
    ReplicationSummary {
        engine,
        replications: estimates.len(),
        reference,
        mean: mu.mean(),
        empirical_variance: mu.variance(),
        mean_reported_variance,
        calibration_ratio: mu.variance() / mean_reported_variance,
        coverage: covered as f64 / r,
        estimates,
    }
}

/// Window bounds as read from run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { lower: vec![-0.5, -0.5], upper: vec![0.5, 0.5] }
    }
}

impl WindowSpec {
    pub fn build(&self) -> Result<Arc<Window>, ParamError> {
        Window::new(self.lower.clone(), self.upper.clone())
            .map(Arc::new)
            .map_err(|e| ParamError::new("window", e.to_string()))
    }
}

/// One benchmark cell: a model, a statistic and the engines to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub model: ModelSpec,
    pub statistic: StatisticSpec,
    #[serde(default)]
    pub window: WindowSpec,
    pub engines: Vec<EngineKind>,
}

impl Case {
    pub fn build(&self) -> Result<(Arc<dyn Model>, Arc<dyn Statistic>), ParamError> {
        let model = self.model.build(self.window.build()?)?;
        let stat = self.statistic.build(&model)?;
        Ok((model, stat))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub engine: EngineKind,
    pub beta: f64,
    pub gamma: f64,
    pub mu_hat: f64,
    pub se: f64,
    pub wall_seconds: f64,
    pub n_samples: u64,
    pub time_variance: f64,
    pub tv_ratio_vs_ais: f64,
}

/// Estimates every case with every listed engine, in order.
///
/// Ratios are taken against the case's AIS row; a case with a single engine
/// is its own base.
pub fn benchmark(
    cases: &[Case],
    target_rel_se: f64,
    settings: &EngineSettings,
    seed: u64,
) -> Result<Vec<BenchmarkRow>, Error> {
    check_target(target_rel_se)?;
    for (i, case) in cases.iter().enumerate() {
        if case.engines.len() > 1 && !case.engines.contains(&EngineKind::Ais) {
            return Err(ParamError::new(format!("cases[{i}].engines"), "AIS is required as the ratio base").into());
        }
        case.build()?;
    }
    let mut rows = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        let (model, stat) = case.build()?;
        let mut cell: Vec<BenchmarkRow> = Vec::new();
        for (ei, &engine) in case.engines.iter().enumerate() {
            let s = derive_seed(seed, StreamTag::Benchmark, ci as u64, ei as u64);
            let r = estimate(engine, model.as_ref(), stat.as_ref(), target_rel_se, settings, s)?.report;
            cell.push(BenchmarkRow {
                engine,
                beta: case.model.beta(),
                gamma: case.model.gamma(),
                mu_hat: r.mu_hat,
                se: r.se,
                wall_seconds: r.wall_seconds,
                n_samples: r.n_total,
                time_variance: r.time_variance,
                tv_ratio_vs_ais: f64::NAN,
            });
        }
        let base = cell.iter().find(|r| r.engine == EngineKind::Ais).unwrap_or(&cell[0]).time_variance;
        for r in &mut cell {
            r.tv_ratio_vs_ais = r.time_variance / base;
        }
        rows.extend(cell);
    }
    Ok(rows)
}

pub const BENCHMARK_HEADER: [&str; 9] =
    ["engine", "beta", "gamma", "mu_hat", "se", "wall_seconds", "n_samples", "time_variance", "tv_ratio_vs_ais"];

/// CSV with a header line, even for no rows.
pub fn write_benchmark_csv<W: std::io::Write>(rows: &[BenchmarkRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(BENCHMARK_HEADER)?;
    for r in rows {
        w.write_record([
            r.engine.label().to_string(),
            r.beta.to_string(),
            r.gamma.to_string(),
            r.mu_hat.to_string(),
            r.se.to_string(),
            r.wall_seconds.to_string(),
            r.n_samples.to_string(),
            r.time_variance.to_string(),
            r.tv_ratio_vs_ais.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub mod presets {
    use super::*;

    const R: f64 = 0.1;

    pub fn stationary(beta: f64, gamma: f64) -> Case {
        Case {
            model: ModelSpec::Strauss { beta, gamma, r: R },
            statistic: StatisticSpec::PapangelouOrigin,
            window: WindowSpec::default(),
            engines: EngineKind::ALL.to_vec(),
        }
    }

    pub fn inhomogeneous(beta: f64, gamma: f64) -> Case {
        Case {
            model: ModelSpec::InhomStrauss { beta, gamma, r: R, alpha: 1.0 },
            statistic: StatisticSpec::BoundaryCount { band: 0.49 },
            window: WindowSpec::default(),
            engines: EngineKind::ALL.to_vec(),
        }
    }

    /// The full published grid. The `β = 100, γ = 0.2` AIS cell runs for hours.
    pub fn paper_tables() -> Vec<Case> {
        let mut cases = Vec::new();
        for beta in [50.0, 100.0] {
            for gamma in [0.2, 0.4, 0.6, 0.8] {
                cases.push(stationary(beta, gamma));
            }
        }
        for beta in [50.0, 100.0] {
            for gamma in [0.4, 0.8] {
                cases.push(inhomogeneous(beta, gamma));
            }
        }
        cases
    }

    /// The subset that finishes in minutes on a desktop.
    pub fn desk() -> Vec<Case> {
        let mut cases: Vec<Case> = [0.4, 0.6, 0.8].iter().map(|&g| stationary(50.0, g)).collect();
        cases.extend([0.4, 0.8].iter().map(|&g| inhomogeneous(50.0, g)));
        cases
    }

    /// `[0, 0.2]²`, `β = 50`, `γ = 0.5`: small enough for the series oracle.
    pub fn tiny_strauss() -> Case {
        Case {
            model: ModelSpec::Strauss { beta: 50.0, gamma: 0.5, r: R },
            statistic: StatisticSpec::PointCount,
            window: WindowSpec { lower: vec![0.0, 0.0], upper: vec![0.2, 0.2] },
            engines: EngineKind::ALL.to_vec(),
        }
    }

    /// `γ = 1` on the tiny window, where `μ = β|S|`.
    pub fn tiny_poisson() -> Case {
        Case { model: ModelSpec::Strauss { beta: 50.0, gamma: 1.0, r: R }, ..tiny_strauss() }
    }

    pub fn by_name(name: &str) -> Option<Vec<Case>> {
        match name {
            "paper-tables" => Some(paper_tables()),
            "desk" => Some(desk()),
            "tiny-strauss" => Some(vec![tiny_strauss()]),
            "tiny-poisson" => Some(vec![tiny_poisson()]),
            _ => None,
        }
    }

    pub const NAMES: [&str; 4] = ["paper-tables", "desk", "tiny-strauss", "tiny-poisson"];
}

/// One pattern from a target-law sampler; AIS has none.
pub fn draw_pattern<R: Rng>(
    engine: EngineKind,
    model: &dyn Model,
    settings: &EngineSettings,
    rng: &mut R,
) -> Result<PointPattern, Error> {
    match engine {
        EngineKind::Cftp => Ok(cftp_sample(model, &settings.cftp, rng)?.pattern),
        EngineKind::Mh => {
            let mut s = MhSampler::new(model, &settings.mh, rng)?;
            Ok(s.next_sample().pattern().clone())
        }
        EngineKind::Ais => Err(ParamError::new("engine", "AIS draws from its proposal, not the target").into()),
    }
}
