use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("degenerate window on axis {axis}: [{lower}, {upper}]")]
    DegenerateWindow { axis: usize, lower: f64, upper: f64 },
    #[error("point {0:?} lies outside the window")]
    OutsideWindow(Vec<f64>),
}

/// Invalid model, statistic or engine parameters.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct ParamError {
    pub field: String,
    pub message: String,
}

impl ParamError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CftpError {
    #[error("no coalescence within horizon 2^{t_max} = {horizon}")]
    HorizonExhausted { t_max: u32, horizon: f64 },
    #[error("dominated CFTP needs a repulsive model with constant envelope")]
    UnsupportedModel,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("series tail bound {bound:e} at n_max = {n_max} exceeds tolerance {tolerance:e}")]
    TailBound { bound: f64, n_max: usize, tolerance: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Cftp(#[from] CftpError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
