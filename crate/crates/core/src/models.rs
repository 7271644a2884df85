//! Unnormalized densities, Papangelou conditional intensities and stability
//! envelopes for the Strauss families, plus the statistics whose expectations
//! the engines estimate.
//!
//! Every density is relative to the unit-rate Poisson process on the window
//! and is handled in log space: `β^n γ^D` leaves double range quickly.

use std::fmt::Debug;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::geometry::{close_pair_count, neighbor_count, uniform_point, Point, PointPattern, Window};

/// A locally stable finite point process `f = h / c_f` on a window.
///
/// Implementations must satisfy `log_h(∅) = 0`,
/// `log_papangelou(x, ξ) = log_h(x ∪ ξ) − log_h(x)` and
/// `log_papangelou(x, ξ) ≤ log_phi(ξ)`.
pub trait Model: Send + Sync + Debug {
    fn window(&self) -> &Arc<Window>;

    /// `ln h(x)`.
    fn log_h(&self, x: &PointPattern) -> f64;

    /// `ln λ_f(x, ξ)` for `ξ ∉ x`.
    fn log_papangelou(&self, x: &PointPattern, xi: &[f64]) -> f64;

    /// `ln φ(ξ)`.
    fn log_phi(&self, xi: &[f64]) -> f64;

    fn phi(&self, xi: &[f64]) -> f64 {
        self.log_phi(xi).exp()
    }

    /// `c* = ∫_S φ`.
    fn phi_integral(&self) -> f64;

    /// A draw with density `φ(ξ) / c*`.
    fn sample_phi_proposal(&self, rng: &mut dyn RngCore) -> Point;

    fn interaction_range(&self) -> f64;

    /// `Some(φ)` when the envelope is constant on the window.
    fn constant_envelope(&self) -> Option<f64> {
        None
    }

    /// True when `λ_f(x, ξ)` is non-increasing in `x`.
    fn is_repulsive(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StraussParams {
    pub beta: f64,
    pub gamma: f64,
    pub r: f64,
}

impl StraussParams {
    pub fn new(beta: f64, gamma: f64, r: f64) -> Result<Self, ParamError> {
        let p = Self { beta, gamma, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(ParamError::new("beta", format!("must be positive and finite, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ParamError::new("gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(ParamError::new("r", format!("must be positive and finite, got {}", self.r)));
        }
        Ok(())
    }
}

/// Strauss process, `h(x) = β^{n(x)} γ^{D(x)}` with `D` the number of
/// `r`-close pairs.
#[derive(Debug, Clone)]
pub struct Strauss {
    params: StraussParams,
    ln_beta: f64,
    ln_gamma: f64,
    window: Arc<Window>,
}

impl Strauss {
    pub fn new(params: StraussParams, window: Arc<Window>) -> Result<Self, ParamError> {
        params.validate()?;
        Ok(Self { params, ln_beta: params.beta.ln(), ln_gamma: params.gamma.ln(), window })
    }

    pub fn params(&self) -> &StraussParams {
        &self.params
    }

    fn log_h_pairs(&self, x: &PointPattern) -> f64 {
        let mut v = x.len() as f64 * self.ln_beta;
        if self.params.gamma != 1.0 {
            v += close_pair_count(x, self.params.r) as f64 * self.ln_gamma;
        }
        v
    }

    fn log_papangelou_pairs(&self, x: &PointPattern, xi: &[f64]) -> f64 {
        if self.params.gamma == 1.0 {
            return self.ln_beta;
        }
        self.ln_beta + neighbor_count(x, xi, self.params.r) as f64 * self.ln_gamma
    }
}

impl Model for Strauss {
    fn window(&self) -> &Arc<Window> {
        &self.window
    }

    fn log_h(&self, x: &PointPattern) -> f64 {
        self.log_h_pairs(x)
    }

    fn log_papangelou(&self, x: &PointPattern, xi: &[f64]) -> f64 {
        self.log_papangelou_pairs(x, xi)
    }

    fn log_phi(&self, _xi: &[f64]) -> f64 {
        self.ln_beta
    }

    fn phi_integral(&self) -> f64 {
        self.params.beta * self.window.area()
    }

    fn sample_phi_proposal(&self, rng: &mut dyn RngCore) -> Point {
        uniform_point(&self.window, rng)
    }

    fn interaction_range(&self) -> f64 {
        self.params.r
    }

    fn constant_envelope(&self) -> Option<f64> {
        Some(self.params.beta)
    }

    fn is_repulsive(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InhomStraussParams {
    pub beta: f64,
    pub gamma: f64,
    pub r: f64,
    pub alpha: f64,
}

impl InhomStraussParams {
    pub fn new(beta: f64, gamma: f64, r: f64, alpha: f64) -> Result<Self, ParamError> {
        let p = Self { beta, gamma, r, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        StraussParams { beta: self.beta, gamma: self.gamma, r: self.r }.validate()?;
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(ParamError::new("alpha", format!("must be nonnegative and finite, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Strauss process with a vertical trend,
/// `h(x) = β^{n(x)} γ^{D(x)} Π exp(−α ξ₂²)` where `ξ₂` is coordinate 1.
#[derive(Debug, Clone)]
pub struct InhomStrauss {
    base: Strauss,
    alpha: f64,
}

impl InhomStrauss {
    pub fn new(params: InhomStraussParams, window: Arc<Window>) -> Result<Self, ParamError> {
        params.validate()?;
        if window.dim() < 2 {
            return Err(ParamError::new("window", "inhomogeneous Strauss needs at least two dimensions"));
        }
        let base = Strauss::new(StraussParams { beta: params.beta, gamma: params.gamma, r: params.r }, window)?;
        Ok(Self { base, alpha: params.alpha })
    }

    pub fn params(&self) -> InhomStraussParams {
        let p = self.base.params;
        InhomStraussParams { beta: p.beta, gamma: p.gamma, r: p.r, alpha: self.alpha }
    }
}

impl Model for InhomStrauss {
    fn window(&self) -> &Arc<Window> {
        &self.base.window
    }

    fn log_h(&self, x: &PointPattern) -> f64 {
        let trend: f64 = x.iter().map(|p| p[1] * p[1]).sum();
        self.base.log_h_pairs(x) - self.alpha * trend
    }

    fn log_papangelou(&self, x: &PointPattern, xi: &[f64]) -> f64 {
        self.base.log_papangelou_pairs(x, xi) - self.alpha * xi[1] * xi[1]
    }

    fn log_phi(&self, _xi: &[f64]) -> f64 {
        self.base.ln_beta
    }

    fn phi_integral(&self) -> f64 {
        self.base.phi_integral()
    }

    fn sample_phi_proposal(&self, rng: &mut dyn RngCore) -> Point {
        self.base.sample_phi_proposal(rng)
    }

    fn interaction_range(&self) -> f64 {
        self.base.params.r
    }

    fn constant_envelope(&self) -> Option<f64> {
        Some(self.base.params.beta)
    }

    fn is_repulsive(&self) -> bool {
        true
    }
}

/// A functional `K` on finite configurations.
pub trait Statistic: Send + Sync + Debug {
    fn evaluate(&self, x: &PointPattern) -> f64;
}

/// `K(x) = n(x)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointCount;

impl Statistic for PointCount {
    fn evaluate(&self, x: &PointPattern) -> f64 {
        x.len() as f64
    }
}

/// `K(x) = #{ξ ∈ x : |ξ_axis| ≥ band}`.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryCount {
    pub band: f64,
    pub axis: usize,
}

/// Points in the horizontal boundary strips `|ξ₂| ≥ band`.
pub fn k_boundary_count(band: f64) -> BoundaryCount {
    BoundaryCount { band, axis: 1 }
}

impl Statistic for BoundaryCount {
    fn evaluate(&self, x: &PointPattern) -> f64 {
        x.iter().filter(|p| p[self.axis].abs() >= self.band).count() as f64
    }
}

/// `K(x) = λ_f(x, site)`.
#[derive(Debug, Clone)]
pub struct PapangelouAt {
    model: Arc<dyn Model>,
    site: Point,
}

impl PapangelouAt {
    pub fn new(model: Arc<dyn Model>, site: Point) -> Result<Self, ParamError> {
        if !model.window().contains(&site) {
            return Err(ParamError::new("statistic.site", format!("{:?} lies outside the window", site.coords())));
        }
        Ok(Self { model, site })
    }
}

/// `K(x) = λ_f(x, o)`; its expectation is the GNZ intensity.
pub fn k_papangelou_origin(model: Arc<dyn Model>) -> Result<PapangelouAt, ParamError> {
    let dim = model.window().dim();
    PapangelouAt::new(model, Point::origin(dim))
}

impl Statistic for PapangelouAt {
    fn evaluate(&self, x: &PointPattern) -> f64 {
        self.model.log_papangelou(x, &self.site).exp()
    }
}

/// Model description as read from run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Strauss { beta: f64, gamma: f64, r: f64 },
    InhomStrauss { beta: f64, gamma: f64, r: f64, alpha: f64 },
}

impl ModelSpec {
    pub fn build(&self, window: Arc<Window>) -> Result<Arc<dyn Model>, ParamError> {
        Ok(match *self {
            ModelSpec::Strauss { beta, gamma, r } => {
                Arc::new(Strauss::new(StraussParams::new(beta, gamma, r).map_err(prefix_model)?, window)?)
            }
            ModelSpec::InhomStrauss { beta, gamma, r, alpha } => Arc::new(InhomStrauss::new(
                InhomStraussParams::new(beta, gamma, r, alpha).map_err(prefix_model)?,
                window,
            )?),
        })
    }

    pub fn beta(&self) -> f64 {
        match *self {
            ModelSpec::Strauss { beta, .. } | ModelSpec::InhomStrauss { beta, .. } => beta,
        }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            ModelSpec::Strauss { gamma, .. } | ModelSpec::InhomStrauss { gamma, .. } => gamma,
        }
    }
}

fn prefix_model(e: ParamError) -> ParamError {
    ParamError::new(format!("model.{}", e.field), e.message)
}

/// Statistic description as read from run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StatisticSpec {
    PapangelouOrigin,
    BoundaryCount { band: f64 },
    PointCount,
}

impl StatisticSpec {
    pub fn build(&self, model: &Arc<dyn Model>) -> Result<Arc<dyn Statistic>, ParamError> {
        Ok(match *self {
            StatisticSpec::PapangelouOrigin => Arc::new(k_papangelou_origin(model.clone())?),
            StatisticSpec::BoundaryCount { band } => {
                let w = model.window();
                if w.dim() < 2 {
                    return Err(ParamError::new("statistic.band", "boundary count needs a second axis"));
                }
                let reach = w.upper()[1].abs().max(w.lower()[1].abs());
                if !(band.is_finite() && band >= 0.0 && band <= reach) {
                    return Err(ParamError::new("statistic.band", format!("{band} is outside the window's vertical extent")));
                }
                Arc::new(k_boundary_count(band))
            }
            StatisticSpec::PointCount => Arc::new(PointCount),
        })
    }
}
