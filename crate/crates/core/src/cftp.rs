//! Dominated coupling from the past for repulsive, locally stable models.
//!
//! The dominating process `D` is the spatial birth-death process with births
//! at total rate `c*` (locations `~ φ/c*`) and unit-rate deaths; its
//! equilibrium is `Poi(S, φ)`. `D` is reversible, so its past is simulated by
//! running the same dynamics backward from an equilibrium draw at time 0.
//!
//! On `(−T, 0]` a lower process `L` starts empty and an upper process `U`
//! starts at `D(−T)`. At each dominating birth `(ξ, u)`:
//!
//! * `U` accepts `ξ` iff `u ≤ λ_f(L, ξ) / φ(ξ)`,
//! * `L` accepts `ξ` iff `u ≤ λ_f(U, ξ) / φ(ξ)`,
//!
//! both evaluated before insertion. Repulsion gives `λ_f(U, ·) ≤ λ_f(L, ·)`, so
//! `L ⊆ U` throughout and every target path started inside `[L, U]` stays
//! there. Dominating deaths remove the point from both. If `L = U` at time 0
//! the common value is an exact draw from `f`; otherwise `T` doubles and the
//! already simulated suffix is reused verbatim.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CftpError;
use crate::geometry::{Point, PointPattern, Window};
use crate::models::Model;
use crate::poisson::poisson_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CftpConfig {
    /// Give up once the horizon would exceed `2^t_max` initial horizons.
    pub t_max: u32,
    pub initial_horizon: f64,
}

impl Default for CftpConfig {
    fn default() -> Self {
        Self { t_max: 20, initial_horizon: 1.0 }
    }
}

#[derive(Debug, Clone)]
struct DomPoint {
    loc: Point,
    /// Acceptance mark of the birth; drawn when the birth enters the window.
    mark: f64,
    /// `None`: born before the current horizon.
    birth: Option<f64>,
    /// `None`: still alive at time 0.
    death: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Birth { time: f64, id: usize },
    Death { time: f64, id: usize },
}

impl Event {
    pub fn time(&self) -> f64 {
        match *self {
            Event::Birth { time, .. } | Event::Death { time, .. } => time,
        }
    }
}

/// The dominating process on `(−T, 0]`, stored as per-point lifetimes.
#[derive(Debug, Clone)]
pub struct DominatingTrajectory {
    window: Arc<Window>,
    c_star: f64,
    horizon: f64,
    points: Vec<DomPoint>,
    /// Ids alive at `−T`.
    alive_at_start: Vec<usize>,
}

impl DominatingTrajectory {
    /// Equilibrium draw at time 0, extended back to `−horizon`.
    pub fn from_equilibrium<R: Rng>(model: &dyn Model, horizon: f64, rng: &mut R) -> Self {
        let c_star = model.phi_integral();
        let n0 = poisson_count(c_star, rng) as usize;
        let points: Vec<DomPoint> = (0..n0)
            .map(|_| DomPoint { loc: model.sample_phi_proposal(rng), mark: f64::NAN, birth: None, death: None })
            .collect();
        let mut traj = Self {
            window: model.window().clone(),
            c_star,
            horizon: 0.0,
            alive_at_start: (0..n0).collect(),
            points,
        };
        traj.extend_to(model, horizon, rng);
        traj
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Doubles the horizon. Events on the old `(−T, 0]` are untouched.
    pub fn extend_backward<R: Rng>(&mut self, model: &dyn Model, rng: &mut R) {
        let target = 2.0 * self.horizon;
        self.extend_to(model, target, rng);
    }

    /// Runs the reversed dynamics from `−T` down to `−new_horizon`: a reverse
    /// birth is a forward death, a reverse death is a forward birth.
    fn extend_to<R: Rng>(&mut self, model: &dyn Model, new_horizon: f64, rng: &mut R) {
        debug_assert!(new_horizon > self.horizon);
        let mut alive = std::mem::take(&mut self.alive_at_start);
        let mut time = -self.horizon;
        let stop = -new_horizon;
        loop {
            let rate = self.c_star + alive.len() as f64;
            time -= exp_sample(rng) / rate;
            if time <= stop {
                break;
            }
            if rng.random::<f64>() * rate < self.c_star {
                let id = self.points.len();
                self.points.push(DomPoint {
                    loc: model.sample_phi_proposal(rng),
                    mark: f64::NAN,
                    birth: None,
                    death: Some(time),
                });
                alive.push(id);
            } else {
                let k = rng.random_range(0..alive.len());
                let id = alive.swap_remove(k);
                let p = &mut self.points[id];
                p.birth = Some(time);
                p.mark = rng.random();
            }
        }
        self.alive_at_start = alive;
        self.horizon = new_horizon;
    }

    /// All events in `(−T, 0]`, oldest first.
    pub fn events(&self) -> Vec<Event> {
        let mut out = Vec::with_capacity(2 * self.points.len());
        for (id, p) in self.points.iter().enumerate() {
            if let Some(time) = p.birth {
                out.push(Event::Birth { time, id });
            }
            if let Some(time) = p.death {
                out.push(Event::Death { time, id });
            }
        }
        out.sort_by(|a, b| a.time().total_cmp(&b.time()));
        out
    }

    /// `D(−T)`.
    pub fn initial_state(&self) -> PointPattern {
        let mut x = PointPattern::with_capacity(self.window.clone(), self.alive_at_start.len());
        for &id in &self.alive_at_start {
            x.push(&self.points[id].loc);
        }
        x
    }

    /// `D(0)`.
    pub fn state_at_zero(&self) -> PointPattern {
        let mut x = PointPattern::empty(self.window.clone());
        for p in self.points.iter().filter(|p| p.death.is_none()) {
            x.push(&p.loc);
        }
        x
    }

    /// Little-endian encoding of the events in `(since, 0]`.
    pub fn serialize_since(&self, since: f64) -> Vec<u8> {
        let mut out = Vec::new();
        for e in self.events().into_iter().filter(|e| e.time() > since) {
            match e {
                Event::Birth { time, id } => {
                    out.push(b'b');
                    out.extend_from_slice(&time.to_le_bytes());
                    out.extend_from_slice(&(id as u64).to_le_bytes());
                    let p = &self.points[id];
                    for c in p.loc.iter() {
                        out.extend_from_slice(&c.to_le_bytes());
                    }
                    out.extend_from_slice(&p.mark.to_le_bytes());
                }
                Event::Death { time, id } => {
                    out.push(b'd');
                    out.extend_from_slice(&time.to_le_bytes());
                    out.extend_from_slice(&(id as u64).to_le_bytes());
                }
            }
        }
        out
    }
}

fn exp_sample<R: Rng>(rng: &mut R) -> f64 {
    // 1 − U lies in (0, 1].
    -(1.0 - rng.random::<f64>()).ln()
}

/// Lower and upper processes at time 0.
#[derive(Debug, Clone)]
pub struct SandwichState {
    pub lower: PointPattern,
    pub upper: PointPattern,
}

impl SandwichState {
    pub fn coalesced(&self) -> bool {
        self.lower.len() == self.upper.len()
    }
}

struct Tracked {
    pattern: PointPattern,
    ids: Vec<usize>,
    member: Vec<bool>,
}

impl Tracked {
    fn new(window: Arc<Window>, n_ids: usize) -> Self {
        Self { pattern: PointPattern::empty(window), ids: Vec::new(), member: vec![false; n_ids] }
    }

    fn insert(&mut self, id: usize, loc: &[f64]) {
        self.pattern.push(loc);
        self.ids.push(id);
        self.member[id] = true;
    }

    fn remove(&mut self, id: usize) {
        if !self.member[id] {
            return;
        }
        let pos = self.ids.iter().position(|&i| i == id).expect("member id present");
        self.pattern.swap_remove(pos);
        self.ids.swap_remove(pos);
        self.member[id] = false;
    }
}

/// Runs the coupled lower/upper processes forward over the trajectory.
pub fn run_sandwich(model: &dyn Model, traj: &DominatingTrajectory) -> SandwichState {
    sandwich(model, traj, cfg!(debug_assertions)).expect("sandwich invariant")
}

/// [`run_sandwich`] checking `L ⊆ U` and acceptance monotonicity after
/// every event, in any build profile.
pub fn run_sandwich_checked(model: &dyn Model, traj: &DominatingTrajectory) -> Result<SandwichState, String> {
    sandwich(model, traj, true)
}

fn sandwich(model: &dyn Model, traj: &DominatingTrajectory, check: bool) -> Result<SandwichState, String> {
    let n_ids = traj.points.len();
    let log_phi = model.constant_envelope().expect("constant envelope").ln();
    let mut lower = Tracked::new(traj.window.clone(), n_ids);
    let mut upper = Tracked::new(traj.window.clone(), n_ids);
    for &id in &traj.alive_at_start {
        upper.insert(id, &traj.points[id].loc);
    }
    for event in traj.events() {
        match event {
            Event::Birth { id, time } => {
                let p = &traj.points[id];
                let log_u = p.mark.ln();
                let to_upper = log_u <= model.log_papangelou(&lower.pattern, &p.loc) - log_phi;
                let to_lower = log_u <= model.log_papangelou(&upper.pattern, &p.loc) - log_phi;
                if check && to_lower && !to_upper {
                    return Err(format!("lower accepted a birth the upper rejected at t = {time}"));
                }
                if to_upper {
                    upper.insert(id, &p.loc);
                }
                if to_lower {
                    lower.insert(id, &p.loc);
                }
            }
            Event::Death { id, .. } => {
                lower.remove(id);
                upper.remove(id);
            }
        }
        if check {
            if let Some(&i) = lower.ids.iter().find(|&&i| !upper.member[i]) {
                return Err(format!("point {i} is in the lower process only at t = {}", event.time()));
            }
        }
    }
    Ok(SandwichState { lower: lower.pattern, upper: upper.pattern })
}

/// One exact draw and the horizon at which it coalesced.
#[derive(Debug, Clone)]
pub struct CftpDraw {
    pub pattern: PointPattern,
    pub horizon: f64,
    pub doublings: u32,
}

/// Exact draw from `f` by dominated CFTP with horizon doubling.
pub fn cftp_sample<R: Rng>(model: &dyn Model, cfg: &CftpConfig, rng: &mut R) -> Result<CftpDraw, CftpError> {
    if !model.is_repulsive() || model.constant_envelope().is_none() {
        return Err(CftpError::UnsupportedModel);
    }
    let max_horizon = cfg.initial_horizon * 2f64.powi(cfg.t_max as i32);
    let mut traj = DominatingTrajectory::from_equilibrium(model, cfg.initial_horizon, rng);
    let mut doublings = 0;
    loop {
        let sandwich = run_sandwich(model, &traj);
        if sandwich.coalesced() {
            return Ok(CftpDraw { pattern: sandwich.lower, horizon: traj.horizon(), doublings });
        }
        if traj.horizon() >= max_horizon {
            return Err(CftpError::HorizonExhausted { t_max: cfg.t_max, horizon: traj.horizon() });
        }
        traj.extend_backward(model, rng);
        doublings += 1;
    }
}
