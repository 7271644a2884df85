//! Monte Carlo estimation of expectations of statistics of locally stable
//! finite point processes on bounded windows.
//!
//! Three engines share one model interface:
//!
//! * [`ais`]: adaptive importance sampling with homogeneous Poisson proposals
//!   whose intensity is tuned by cross-entropy,
//! * [`mh`]: birth-death Metropolis-Hastings,
//! * [`cftp`]: dominated coupling from the past with doubling.
//!
//! [`harness`] wraps all three behind a common estimator interface and adds a
//! brute-force series oracle for tiny windows, replication studies and the
//! time-variance benchmark. [`config`] is the JSON run configuration read by
//! the `ptproc` binary.

pub mod ais;
pub mod cftp;
pub mod config;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod logsum;
pub mod mh;
pub mod models;
pub mod poisson;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{Point, PointPattern, Window};
pub use models::{Model, ModelSpec, Statistic, StatisticSpec};
pub use report::{EngineKind, EstimateReport, StopReason};
