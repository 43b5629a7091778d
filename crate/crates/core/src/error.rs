use thiserror::Error;

use crate::estimation::SliceTarget;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("telemetry history is empty")]
    EmptyHistory,

    #[error("no telemetry sample reached the minimum throughput and no previous requirement exists")]
    NoUsableSamples,

    #[error("slice has no VNF instance")]
    EmptyStack,

    #[error("target cannot be served by {instances} instance(s): {reason}")]
    InfeasibleTarget { instances: usize, reason: String },

    #[error("candidate has zero capacity for {resource} while carrying {offered_mbps} Mbps")]
    InvalidCandidate { resource: String, offered_mbps: f64 },

    #[error("configuration still violates KPI thresholds after {iterations} inflation step(s)")]
    ValidationDiverged { iterations: usize, last: SliceTarget },

    #[error("unknown forecaster `{0}`")]
    UnknownForecaster(String),

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid scenario: {0}")]
    Validation(String),
}
