//! Run configuration: the JSON file format read by the command-line tool.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::harness::{presets, Case, EngineSettings, OracleSpec, WindowSpec};
use crate::models::{Model, ModelSpec, Statistic, StatisticSpec};
use crate::report::EngineKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Strauss,
    InhomStrauss,
}

/// Model parameters with every field optional until resolution, so a missing
/// value is reported by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub r: f64,
    /// Inhomogeneous model only.
    pub alpha: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: ModelKind::Strauss, beta: None, gamma: None, r: 0.1, alpha: 1.0 }
    }
}

impl ModelConfig {
    pub fn resolve(&self) -> Result<ModelSpec, ParamError> {
        let beta = self.beta.ok_or_else(|| ParamError::new("model.beta", "required (--beta)"))?;
        let gamma = self.gamma.ok_or_else(|| ParamError::new("model.gamma", "required (--gamma)"))?;
        Ok(match self.kind {
            ModelKind::Strauss => ModelSpec::Strauss { beta, gamma, r: self.r },
            ModelKind::InhomStrauss => ModelSpec::InhomStrauss { beta, gamma, r: self.r, alpha: self.alpha },
        })
    }

    pub fn from_spec(spec: &ModelSpec) -> Self {
        match *spec {
            ModelSpec::Strauss { beta, gamma, r } => {
                Self { kind: ModelKind::Strauss, beta: Some(beta), gamma: Some(gamma), r, ..Self::default() }
            }
            ModelSpec::InhomStrauss { beta, gamma, r, alpha } => {
                Self { kind: ModelKind::InhomStrauss, beta: Some(beta), gamma: Some(gamma), r, alpha }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Mh,
    Cftp,
    /// Homogeneous Poisson with intensity `sample.rho`.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub source: SampleSource,
    pub replications: usize,
    pub rho: Option<f64>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { source: SampleSource::Cftp, replications: 1, rho: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Used when `cases` is absent; `desk` if neither is given.
    pub preset: Option<String>,
    pub cases: Option<Vec<Case>>,
    /// Restricts every case to these engines.
    pub engines: Option<Vec<EngineKind>>,
}

impl BenchmarkConfig {
    pub fn resolve_cases(&self) -> Result<Vec<Case>, ParamError> {
        let mut cases = match (&self.cases, &self.preset) {
            (Some(c), _) => c.clone(),
            (None, Some(name)) => presets::by_name(name).ok_or_else(|| unknown_preset("benchmark.preset", name))?,
            (None, None) => presets::desk(),
        };
        if let Some(only) = &self.engines {
            for c in &mut cases {
                c.engines.retain(|e| only.contains(e));
            }
        }
        Ok(cases)
    }
}

fn unknown_preset(field: &str, name: &str) -> ParamError {
    ParamError::new(field, format!("unknown preset {name:?}; expected one of {}", presets::NAMES.join(", ")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub statistic: StatisticSpec,
    pub window: WindowSpec,
    pub engine: EngineKind,
    pub target_rel_se: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub settings: EngineSettings,
    pub oracle: OracleSpec,
    pub benchmark: BenchmarkConfig,
    pub sample: SampleConfig,
    pub out: Option<std::path::PathBuf>,
    pub trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            statistic: StatisticSpec::PapangelouOrigin,
            window: WindowSpec::default(),
            engine: EngineKind::Ais,
            target_rel_se: 0.05,
            seed: 0,
            threads: None,
            settings: EngineSettings::default(),
            oracle: OracleSpec::default(),
            benchmark: BenchmarkConfig::default(),
            sample: SampleConfig::default(),
            out: None,
            trace: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ParamError> {
        serde_json::from_str(text).map_err(|e| ParamError::new("config", e.to_string()))
    }

    /// Copies model, statistic and window from a single-case preset.
    pub fn apply_preset(&mut self, name: &str) -> Result<(), ParamError> {
        let cases = presets::by_name(name).ok_or_else(|| unknown_preset("preset", name))?;
        let [case] = cases.as_slice() else {
            return Err(ParamError::new("preset", format!("{name:?} has several cases; use it with `benchmark`")));
        };
        self.model = ModelConfig::from_spec(&case.model);
        self.statistic = case.statistic;
        self.window = case.window.clone();
        Ok(())
    }

    /// Builds the model and statistic, validating everything that sampling
    /// depends on.
    pub fn build(&self) -> Result<(Arc<dyn Model>, Arc<dyn Statistic>), ParamError> {
        let spec = self.model.resolve()?;
        let model = spec.build(self.window.build()?)?;
        let stat = self.statistic.build(&model).map_err(|e| {
            if e.field.starts_with("statistic") { e } else { ParamError::new(format!("statistic.{}", e.field), e.message) }
        })?;
        self.settings.validate()?;
        if !(self.target_rel_se.is_finite() && self.target_rel_se > 0.0) {
            return Err(ParamError::new("target_rel_se", "must be positive"));
        }
        if self.threads == Some(0) {
            return Err(ParamError::new("threads", "must be at least 1"));
        }
        Ok((model, stat))
    }
}
