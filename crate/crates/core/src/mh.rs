//! Birth-death Metropolis-Hastings for locally stable point processes.
//!
//! A birth of `ξ ~ φ/c*` is proposed with probability `p`, otherwise the death
//! of a uniformly chosen point. The Hastings ratio of a birth is
//!
//! ```text
//! r_b(x, ξ) = λ_f(x, ξ) · (1 − p) / (n(x ∪ ξ) · p · φ(ξ)/c*)
//! ```
//!
//! and a death of `η` uses `r_d(x, η) = 1 / r_b(x \ η, η)`. At `x = ∅` a death
//! proposal is rejected outright, which keeps the proposal mix fixed.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::geometry::PointPattern;
use crate::models::{Model, Statistic};
use crate::poisson::sample_poisson;
use crate::report::{EngineKind, EstimateReport, RunningMoments, StopReason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MhConfig {
    pub p_birth: f64,
    pub burn_in: u64,
    pub thin: u64,
    /// Intensity of the Poisson starting state; `None` means one third of the
    /// mean envelope.
    pub initial_rho: Option<f64>,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self { p_birth: 0.5, burn_in: 3000, thin: 200, initial_rho: None }
    }
}

impl MhConfig {
    pub fn resolve(&self, model: &dyn Model) -> Result<MhConfig, ParamError> {
        let mut cfg = self.clone();
        cfg.initial_rho =
            Some(cfg.initial_rho.unwrap_or_else(|| model.phi_integral() / model.window().area() / 3.0));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.p_birth > 0.0 && self.p_birth < 1.0) {
            return Err(ParamError::new("mh.p_birth", "must lie in (0, 1)"));
        }
        if self.thin == 0 {
            return Err(ParamError::new("mh.thin", "must be positive"));
        }
        if let Some(rho) = self.initial_rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(ParamError::new("mh.initial_rho", "must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// `ln r_b(x, ξ)`; `x` must not contain `ξ`.
pub fn log_birth_ratio(model: &dyn Model, x: &PointPattern, xi: &[f64], p_birth: f64) -> f64 {
    let log_q_birth = model.log_phi(xi) - model.phi_integral().ln();
    let log_q_death = -((x.len() + 1) as f64).ln();
    model.log_papangelou(x, xi) + log_q_death + (1.0 - p_birth).ln() - log_q_birth - p_birth.ln()
}

/// `ln r_d(x, η) = −ln r_b(x \ η, η)` where `rest = x \ η`.
pub fn log_death_ratio(model: &dyn Model, rest: &PointPattern, eta: &[f64], p_birth: f64) -> f64 {
    -log_birth_ratio(model, rest, eta, p_birth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Birth,
    Death,
    Rejected,
}

/// Current pattern together with its cached `ln h`.
#[derive(Debug, Clone)]
pub struct MhChainState {
    x: PointPattern,
    log_h: f64,
}

impl MhChainState {
    pub fn new(model: &dyn Model, x: PointPattern) -> Self {
        let log_h = model.log_h(&x);
        Self { x, log_h }
    }

    /// Poisson(`initial_rho`) starting state.
    pub fn initial<R: Rng + ?Sized>(model: &dyn Model, cfg: &MhConfig, rng: &mut R) -> Self {
        let rho = cfg.initial_rho.unwrap_or_else(|| model.phi_integral() / model.window().area() / 3.0);
        Self::new(model, sample_poisson(model.window(), rho, rng))
    }

    pub fn pattern(&self) -> &PointPattern {
        &self.x
    }

    pub fn log_h(&self) -> f64 {
        self.log_h
    }
}

/// One birth-death transition, in place.
pub fn mh_step<R: Rng>(s: &mut MhChainState, model: &dyn Model, cfg: &MhConfig, rng: &mut R) -> Move {
    let p = cfg.p_birth;
    if rng.random::<f64>() < p {
        let xi = model.sample_phi_proposal(rng);
        let log_ratio = log_birth_ratio(model, &s.x, &xi, p);
        if accept(log_ratio, rng) {
            s.log_h += model.log_papangelou(&s.x, &xi);
            s.x.push(&xi);
            return Move::Birth;
        }
        return Move::Rejected;
    }
    if s.x.is_empty() {
        return Move::Rejected;
    }
    let i = rng.random_range(0..s.x.len());
    let eta = s.x.swap_remove(i);
    let log_ratio = log_death_ratio(model, &s.x, &eta, p);
    if accept(log_ratio, rng) {
        s.log_h -= model.log_papangelou(&s.x, &eta);
        Move::Death
    } else {
        s.x.push(&eta);
        Move::Rejected
    }
}

#[inline]
fn accept<R: Rng>(log_ratio: f64, rng: &mut R) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// A burned-in, thinned chain yielding near-independent states.
pub struct MhSampler<'a, R: Rng> {
    model: &'a dyn Model,
    cfg: MhConfig,
    state: MhChainState,
    rng: R,
    steps: u64,
    burned_in: bool,
}

impl<'a, R: Rng> MhSampler<'a, R> {
    pub fn new(model: &'a dyn Model, cfg: &MhConfig, mut rng: R) -> Result<Self, ParamError> {
        let cfg = cfg.resolve(model)?;
        let state = MhChainState::initial(model, &cfg, &mut rng);
        Ok(Self { model, cfg, state, rng, steps: 0, burned_in: false })
    }

    /// Advances past burn-in (first call) and then `thin` transitions.
    pub fn next_sample(&mut self) -> &MhChainState {
        let n = if self.burned_in { self.cfg.thin } else { self.cfg.burn_in + self.cfg.thin };
        self.burned_in = true;
        for _ in 0..n {
            mh_step(&mut self.state, self.model, &self.cfg, &mut self.rng);
        }
        self.steps += n;
        &self.state
    }

    /// Transitions taken so far, burn-in included.
    pub fn steps(&self) -> u64 {
        self.steps
    }
}

#[derive(Debug, Clone)]
pub struct MhRun {
    pub values: Vec<f64>,
    pub report: EstimateReport,
}

/// `n_samples` thinned states after burn-in; the estimate is their plain
/// mean and the standard error treats them as independent.
pub fn mh_run<R: Rng>(
    model: &dyn Model,
    stat: &dyn Statistic,
    cfg: &MhConfig,
    n_samples: usize,
    rng: R,
) -> Result<MhRun, ParamError> {
    if n_samples < 2 {
        return Err(ParamError::new("n_samples", "need at least two samples"));
    }
    let started = Instant::now();
    let mut sampler = MhSampler::new(model, cfg, rng)?;
    let mut moments = RunningMoments::default();
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let k = stat.evaluate(sampler.next_sample().pattern());
        moments.push(k);
        values.push(k);
    }
    let wall_seconds = started.elapsed().as_secs_f64();
    let se = moments.standard_error();
    let report = EstimateReport {
        engine: EngineKind::Mh,
        mu_hat: moments.mean(),
        se,
        rho_final: None,
        steps: sampler.steps(),
        n_total: n_samples as u64,
        wall_seconds,
        time_variance: se * se * wall_seconds,
        stop_reason: StopReason::MaxSteps,
    };
    Ok(MhRun { values, report })
}
