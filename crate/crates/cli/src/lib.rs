//! Driver for simulated entanglement-assisted process tomography: experiment
//! configuration, the simulate/estimate pipeline, result documents and
//! verification suites.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod verify;
