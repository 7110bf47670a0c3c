//! Driven Jaynes-Cummings bistability toolkit: quantum-jump Monte Carlo
//! trajectories of a lossy cavity coupled to a multi-level transmon,
//! semiclassical Maxwell-Bloch steady states and phase diagrams, and
//! telegraph-signal dwell-time analysis.

pub mod calibrate;
pub mod cli;
pub mod config;
pub mod error;
pub mod hilbert;
pub mod io;
pub mod maxwell_bloch;
pub mod model;
pub mod qjmc;
pub mod steady;
pub mod telegraph;

pub use error::{Error, Result};
