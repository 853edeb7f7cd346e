//! Multi-period AC optimal power flow with dynamic line ratings.
//!
//! Conductor temperatures are modelled by the closed-form solution of the
//! heat balance ODE ([`thermal`]); the coupled dispatch problem is split per
//! period and per device and solved with a bi-level ADMM ([`admm`]).

pub mod acopf;
pub mod admm;
pub mod fixtures;
pub mod network;
pub mod nlp;
pub mod ratings;
pub mod report;
pub mod thermal;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Network(#[from] network::NetworkError),
    #[error("{context}: {source}")]
    Thermal {
        context: String,
        #[source]
        source: thermal::ThermalError,
    },
    #[error("subproblem failed ({context}) after {iterations} iterations, best KKT residual {residual:.3e}")]
    SubproblemFailure {
        context: String,
        iterations: usize,
        residual: f64,
    },
    #[error("problem too large for a monolithic solve: {variables} variables (limit {limit})")]
    TooLarge { variables: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
