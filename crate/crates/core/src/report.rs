use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Ais,
    Mh,
    Cftp,
}

impl EngineKind {
    pub const ALL: [EngineKind; 3] = [EngineKind::Mh, EngineKind::Cftp, EngineKind::Ais];

    pub fn label(self) -> &'static str {
        match self {
            EngineKind::Ais => "AIS",
            EngineKind::Mh => "MH",
            EngineKind::Cftp => "CFTP",
        }
    }
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The accuracy target (and, for AIS, the intensity-stability test) was met.
    Converged,
    /// A step or sample cap ended the run first.
    MaxSteps,
}

/// Outcome of one estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub engine: EngineKind,
    pub mu_hat: f64,
    pub se: f64,
    /// Final proposal intensity; AIS only.
    pub rho_final: Option<f64>,
    /// AIS iterations, MH chain transitions, or CFTP draws.
    pub steps: u64,
    /// Samples entering the estimate.
    pub n_total: u64,
    pub wall_seconds: f64,
    /// `se² · wall_seconds`.
    pub time_variance: f64,
    pub stop_reason: StopReason,
}

impl EstimateReport {
    pub fn relative_se(&self) -> f64 {
        self.se / self.mu_hat.abs()
    }

    /// Copy with the timing fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self { wall_seconds: 0.0, time_variance: 0.0, ..self.clone() }
    }
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 { 0.0 } else { self.m2 / (self.n - 1) as f64 }
    }

    /// Sample standard deviation over `sqrt(n)`.
    pub fn standard_error(&self) -> f64 {
        if self.n == 0 { f64::INFINITY } else { (self.variance() / self.n as f64).sqrt() }
    }
}
