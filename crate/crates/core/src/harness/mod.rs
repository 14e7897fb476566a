//! Scenario files, ensemble runs and the acceptance checks.

pub mod build;
pub mod checks;
pub mod convergence;
pub mod runner;
pub mod scenario;

pub use build::{build_operator, build_problem};
pub use runner::{ensemble_run, run_scenario, RunOptions, RunReport};
pub use scenario::{Scenario, BUILTIN_IDS};
