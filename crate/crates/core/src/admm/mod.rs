//! Consensus decomposition of the multi-period problem and the bi-level
//! ADMM that solves it.

pub mod consensus;
pub mod devices;
pub mod monolithic;
pub mod screening;
pub mod solver;

pub use consensus::{Device, SelectionMaps};
pub use devices::{solve_ramp_subproblem, solve_temperature_subproblem, LineDevice, RampDevice};
pub use monolithic::{solve_monolithic, MONOLITHIC_VARIABLE_LIMIT};
pub use screening::{screen_transient_lines, ScreenedLine, Screening};
pub use solver::{ac_caps, solve_admm, Admm, AdmmParams, AdmmRun, ConsensusState};
