//! Membrane height and cortex linker dynamics on the unit square.

pub mod config;
pub mod discretization;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod output;
pub mod scenario;
pub mod sparse;
pub mod stationary;

pub use config::{parse_config, parse_config_str, ScenarioConfig, ScenarioKind};
pub use dynamics::{simulate, Scheme, Simulation, State, Stepper};
pub use error::{Error, Result};
pub use grid::{build_grid, Grid};
pub use model::{ModelParams, PressureField};
pub use scenario::{pressure_sweep, run_scenario, RunReport, SweepOutcome};
