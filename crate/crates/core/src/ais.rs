//! Adaptive importance sampling with homogeneous Poisson proposals.
//!
//! Step `t` draws `n_t` patterns from `Poi(S, ρ̂_{t−1})`, weights each by
//! `w = h / g(·; ρ̂_{t−1})`, and folds it into running sums over *all* steps so
//! far. From those sums it forms the self-normalized estimate
//!
//! ```text
//! μ̂_t  = ΣΣ K w / ΣΣ w
//! ρ̂_t  = (1/|S|) ΣΣ ñ |K| w / ΣΣ |K| w,   ñ = median{m_ρ|S|, n, M_ρ|S|}
//! σ̂²_t = n^(t) ΣΣ (K − μ̂_t)² w² / (ΣΣ w)²
//! ```
//!
//! `ρ̂_t` is the cross-entropy choice of Poisson intensity against `|K| f`;
//! truncating the count keeps it inside `[m_ρ, M_ρ]`. Iteration stops once the
//! squared relative standard error `σ̂²_t / (n^(t) μ̂_t²)` is at most `η₁` and the
//! relative change of `ρ̂` is at most `η₂`.
//!
//! The variance is expanded as `Σ K²w² − 2μ̂ Σ K w² + μ̂² Σ w²` so that each sum
//! can be accumulated once, in signed log space, without revisiting samples.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::ParamError;
use crate::geometry::PointPattern;
use crate::logsum::{log_add_exp, SignedLogSum};
use crate::models::{Model, Statistic};
use crate::poisson::{log_g_count, resample_poisson_into};
use crate::report::{EngineKind, EstimateReport, StopReason};
use crate::rng::{substream, StreamTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AisConfig {
    /// Initial intensity `ρ̂₀`; `None` means one third of the mean envelope
    /// (`β/3` for the Strauss families).
    pub rho0: Option<f64>,
    pub m_rho: f64,
    #[serde(rename = "M_rho")]
    pub big_m_rho: f64,
    /// Sample size of the first step.
    pub n1: usize,
    /// Sample size of every later step.
    pub n_t: usize,
    pub eta1: f64,
    pub eta2: f64,
    pub max_steps: u64,
    /// Earliest step at which the stopping rule is consulted.
    pub min_stop_step: u64,
    /// When false, `ρ̂` stays at `ρ̂₀`.
    pub adapt: bool,
    /// When false, run exactly `max_steps` steps.
    pub stopping: bool,
}

impl Default for AisConfig {
    fn default() -> Self {
        Self {
            rho0: None,
            m_rho: 1e-10,
            big_m_rho: 1e10,
            n1: 500,
            n_t: 100,
            eta1: 0.05 * 0.05,
            eta2: 0.01,
            max_steps: 1_000_000,
            min_stop_step: 2,
            adapt: true,
            stopping: true,
        }
    }
}

/// `η₁ = (ε / z_{α/2})²`, the squared relative standard error at which the
/// relative error is within `ε` with probability about `1 − α`.
pub fn eta1_from_confidence(epsilon: f64, alpha: f64) -> Result<f64, ParamError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ParamError::new("ais.epsilon", "must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ParamError::new("ais.alpha", "must lie in (0, 1)"));
    }
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    Ok((epsilon / z).powi(2))
}

impl AisConfig {
    /// Validates and fills `rho0` from the model.
    pub fn resolve(&self, model: &dyn Model) -> Result<AisConfig, ParamError> {
        let mut cfg = self.clone();
        let rho0 = cfg.rho0.unwrap_or_else(|| model.phi_integral() / model.window().area() / 3.0);
        cfg.rho0 = Some(rho0);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.m_rho > 0.0 && self.m_rho <= self.big_m_rho && self.big_m_rho.is_finite()) {
            return Err(ParamError::new("ais.m_rho", "need 0 < m_rho <= M_rho < inf"));
        }
        if let Some(rho0) = self.rho0 {
            if !(self.m_rho <= rho0 && rho0 <= self.big_m_rho) {
                return Err(ParamError::new("ais.rho0", format!("{rho0} is outside [m_rho, M_rho]")));
            }
        }
        if self.n_t == 0 || self.n1 <= self.n_t {
            return Err(ParamError::new("ais.n1", "need n1 > n_t >= 1"));
        }
        if !(self.eta1 > 0.0 && self.eta2 > 0.0) {
            return Err(ParamError::new("ais.eta1", "eta1 and eta2 must be positive"));
        }
        if self.max_steps == 0 {
            return Err(ParamError::new("ais.max_steps", "must be positive"));
        }
        Ok(())
    }

    fn sample_size(&self, t: u64) -> usize {
        if t == 1 { self.n1 } else { self.n_t }
    }
}

/// `ln w(x) = ln h(x) − ln g(x; ρ)`.
pub fn log_weight(model: &dyn Model, x: &PointPattern, rho: f64) -> f64 {
    model.log_h(x) - log_g_count(x.len(), rho, x.window().area())
}

/// `median{m_ρ|S|, n(x), M_ρ|S|}`.
pub fn truncated_count(x: &PointPattern, m_rho: f64, big_m_rho: f64, area: f64) -> f64 {
    (x.len() as f64).clamp(m_rho * area, big_m_rho * area)
}

/// Per-sample quantities the accumulators need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleTerms {
    pub k: f64,
    pub n_trunc: f64,
    pub log_w: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulators {
    kw: SignedLogSum,
    w: SignedLogSum,
    nkw: SignedLogSum,
    akw: SignedLogSum,
    spread: SquaredWeightSpread,
}

/// Running `Σ w²`, the `w²`-weighted mean `m` of `K` and `Σ w² (K − m)²`,
/// kept in log scale. Every update adds a nonnegative term, so
/// `Σ w² (K − μ)² = Σ w² (K − m)² + Σ w² (m − μ)²` has no cancellation.
#[derive(Debug, Clone, Copy)]
struct SquaredWeightSpread {
    log_w2: f64,
    mean: f64,
    log_m2: f64,
}

impl Default for SquaredWeightSpread {
    fn default() -> Self {
        Self { log_w2: f64::NEG_INFINITY, mean: 0.0, log_m2: f64::NEG_INFINITY }
    }
}

impl SquaredWeightSpread {
    fn push(&mut self, k: f64, log_v: f64) {
        let log_total = log_add_exp(self.log_w2, log_v);
        let delta = k - self.mean;
        self.mean += delta * (log_v - log_total).exp();
        if delta != 0.0 && self.log_w2 > f64::NEG_INFINITY {
            let term = 2.0 * delta.abs().ln() + log_v + self.log_w2 - log_total;
            self.log_m2 = log_add_exp(self.log_m2, term);
        }
        self.log_w2 = log_total;
    }

    /// `ln Σ w² (K − μ)²`.
    fn log_centered(&self, mu: f64) -> f64 {
        let shift = self.mean - mu;
        let shift_term = if shift == 0.0 { f64::NEG_INFINITY } else { self.log_w2 + 2.0 * shift.abs().ln() };
        log_add_exp(self.log_m2, shift_term)
    }
}

/// Trace row emitted after every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: u64,
    pub rho_hat: f64,
    pub mu_hat: f64,
    pub sigma2_hat: f64,
    pub n_total: u64,
}

/// Driver state of the adaptive sampler.
#[derive(Debug, Clone)]
pub struct AisState {
    t: u64,
    rho_hat: f64,
    prev_rho_hat: f64,
    n_total: u64,
    area: f64,
    acc: Accumulators,
    mu_hat: f64,
    sigma2_hat: f64,
}

impl AisState {
    pub fn new(rho0: f64, area: f64) -> Self {
        Self {
            t: 0,
            rho_hat: rho0,
            prev_rho_hat: rho0,
            n_total: 0,
            area,
            acc: Accumulators::default(),
            mu_hat: f64::NAN,
            sigma2_hat: f64::NAN,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// `ρ̂_t`, the intensity the next step samples from.
    pub fn rho_hat(&self) -> f64 {
        self.rho_hat
    }

    pub fn prev_rho_hat(&self) -> f64 {
        self.prev_rho_hat
    }

    /// `n^(t)`.
    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    pub fn mu_hat(&self) -> f64 {
        self.mu_hat
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.sigma2_hat
    }

    /// `sqrt(σ̂²_t / n^(t))`.
    pub fn standard_error(&self) -> f64 {
        (self.sigma2_hat / self.n_total as f64).sqrt()
    }

    pub fn trace_record(&self) -> TraceRecord {
        TraceRecord {
            t: self.t,
            rho_hat: self.rho_hat,
            mu_hat: self.mu_hat,
            sigma2_hat: self.sigma2_hat,
            n_total: self.n_total,
        }
    }

    /// Folds one sample into the running sums.
    pub fn absorb(&mut self, s: SampleTerms) {
        let a = &mut self.acc;
        let lw = s.log_w;
        a.kw.add_scaled(s.k, lw);
        a.w.add_term(1, lw);
        a.nkw.add_scaled(s.n_trunc * s.k.abs(), lw);
        a.akw.add_scaled(s.k.abs(), lw);
        a.spread.push(s.k, 2.0 * lw);
        self.n_total += 1;
    }

    /// Closes step `t`: recomputes `μ̂_t`, `σ̂²_t` and (when `adapt`) `ρ̂_t`.
    pub fn finish_step(&mut self, cfg: &AisConfig) {
        self.t += 1;
        let a = &self.acc;
        let mu = a.kw.ratio(&a.w);
        self.mu_hat = mu;

        self.sigma2_hat = self.n_total as f64 * (a.spread.log_centered(mu) - 2.0 * a.w.log_magnitude()).exp();

        self.prev_rho_hat = self.rho_hat;
        // An all-zero statistic so far leaves ρ̂ where it was.
        if cfg.adapt && !a.akw.is_zero() {
            let rho = a.nkw.ratio(&a.akw) / self.area;
            self.rho_hat = rho.clamp(cfg.m_rho, cfg.big_m_rho);
        }
    }
}

/// Draws one proposal pattern into `buf` and returns its terms.
pub fn evaluate_sample(
    model: &dyn Model,
    stat: &dyn Statistic,
    cfg: &AisConfig,
    rho: f64,
    rng: &mut impl rand::Rng,
    buf: &mut PointPattern,
) -> SampleTerms {
    resample_poisson_into(buf, rho, rng);
    let area = buf.window().area();
    SampleTerms {
        k: stat.evaluate(buf),
        n_trunc: truncated_count(buf, cfg.m_rho, cfg.big_m_rho, area),
        log_w: log_weight(model, buf, rho),
    }
}

/// One iteration. Samples are generated in parallel from per-sample
/// substreams and absorbed in index order, so the result does not depend on
/// the thread count.
pub fn ais_step(state: &mut AisState, model: &dyn Model, stat: &dyn Statistic, cfg: &AisConfig, seed: u64) {
    let t = state.t + 1;
    let n = cfg.sample_size(t);
    let rho = state.rho_hat;
    let window = model.window().clone();
    let terms: Vec<SampleTerms> = (0..n)
        .into_par_iter()
        .with_min_len(16)
        .map_init(
            || PointPattern::empty(window.clone()),
            |buf, i| {
                let mut rng = substream(seed, StreamTag::AisSample, t, i as u64);
                evaluate_sample(model, stat, cfg, rho, &mut rng, buf)
            },
        )
        .collect();
    for s in terms {
        state.absorb(s);
    }
    state.finish_step(cfg);
}

/// Both stopping conditions, consulted from `min_stop_step` on.
pub fn stopping_check(state: &AisState, cfg: &AisConfig) -> bool {
    if state.t < cfg.min_stop_step.max(1) {
        return false;
    }
    let mu = state.mu_hat;
    if mu == 0.0 || !mu.is_finite() {
        return false;
    }
    let rel_var = state.sigma2_hat / (state.n_total as f64 * mu * mu);
    let rho_change = (state.rho_hat - state.prev_rho_hat).abs() / state.prev_rho_hat;
    rel_var <= cfg.eta1 && rho_change <= cfg.eta2
}

#[derive(Debug, Clone)]
pub struct AisRun {
    pub report: EstimateReport,
    pub trace: Vec<TraceRecord>,
    pub state: AisState,
}

/// Iterates until [`stopping_check`] passes or `max_steps` is reached.
pub fn ais_run(model: &dyn Model, stat: &dyn Statistic, cfg: &AisConfig, seed: u64) -> Result<AisRun, ParamError> {
    let cfg = cfg.resolve(model)?;
    let started = Instant::now();
    let mut state = AisState::new(cfg.rho0.expect("resolved"), model.window().area());
    let mut trace = Vec::new();
    let stop_reason = loop {
        ais_step(&mut state, model, stat, &cfg, seed);
        trace.push(state.trace_record());
        if cfg.stopping && stopping_check(&state, &cfg) {
            break StopReason::Converged;
        }
        if state.t >= cfg.max_steps {
            break StopReason::MaxSteps;
        }
    };
    let wall_seconds = started.elapsed().as_secs_f64();
    let se = state.standard_error();
    let report = EstimateReport {
        engine: EngineKind::Ais,
        mu_hat: state.mu_hat,
        se,
        rho_final: Some(state.rho_hat),
        steps: state.t,
        n_total: state.n_total,
        wall_seconds,
        time_variance: se * se * wall_seconds,
        stop_reason,
    };
    Ok(AisRun { report, trace, state })
}
