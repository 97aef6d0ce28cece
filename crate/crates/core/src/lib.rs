//! Steady two-region supersonic reacting nozzle flow, solved by marching
//! along characteristics in mass-flux coordinates, together with a
//! quasi-one-dimensional reduced model and a validation harness.
//!
//! The flow enters a finite nozzle supersonically on both sides of a
//! contact interface. In mass-flux coordinates the free interface becomes
//! the fixed line `eta = 0`, the walls become `eta = -m_minus` and
//! `eta = m_plus`, and the solver advances the flow slope and pressure
//! along the two acoustic characteristic families while the Bernoulli
//! function, entropy, and unburned fuel fraction ride streamlines.

pub mod characteristics;
pub mod config;
pub mod gas;
pub mod geometry;
pub mod lagrangian;
pub mod numerics;
pub mod output;
pub mod quasi1d;
pub mod solver;
pub mod validation;

pub use config::{parse_config, parse_config_str, AreaMode, RunSetup};
pub use gas::{CharState, EulerState, GasConstants};
pub use geometry::{Bump, InflowSide, InflowSpec, Side, WallSpec};
pub use solver::{solve, SolveOutput, SolverConfig};
