//! Exact few-qubit simulator for conditional entropy production and
//! dissipative information in system-memory-reservoir processes.
//!
//! Modules build on each other bottom-up: dense linear algebra, validated
//! states, entropic measures, ensemble thermodynamics, the collisional
//! protocol, two-point-measurement trajectory statistics, the feedback
//! (demon) protocols and a shot-level circuit emulator.

pub mod collision;
pub mod demon;
pub mod densemath;
pub mod emulator;
pub mod infomeasures;
pub mod random;
pub mod states;
pub mod thermo;
pub mod trajectories;
