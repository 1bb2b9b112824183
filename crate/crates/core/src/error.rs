use thiserror::Error;

use crate::network::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown component `{0}`")]
    UnknownComponent(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("failed to parse {what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("network failed validation: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("hydraulic solver did not converge after {iterations} iterations (worst residual {residual:.3e} m³/s at `{node}`)")]
    HydraulicConvergence {
        iterations: usize,
        residual: f64,
        node: String,
    },

    #[error("power dispatch failed: {0}")]
    PowerDispatch(String),

    #[error("missing context for `{strategy}` ranking: {missing}")]
    MissingContext {
        strategy: &'static str,
        missing: &'static str,
    },

    #[error("prediction horizon too large: {permutations} orderings per step exceeds {limit}; use a heuristic strategy for disruptions of this size")]
    HorizonTooLarge { permutations: u128, limit: u128 },

    #[error("simulation failed at t = {time} s (interval to {until} s): {source}")]
    Simulation {
        time: f64,
        until: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("statistics: {0}")]
    Statistics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
