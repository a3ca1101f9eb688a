//! Fixed-step power-system dynamic simulation of grid-following voltage-source
//! converters in two domains: an electromagnetic-transient (EMT) average-value
//! reference and four phasor-mode (PM) approximations.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod frames;
pub mod io;
pub mod machines;
pub mod network;
pub mod plot;
pub mod powerflow;
pub mod scenarios;
pub mod solver;
pub mod vsc;

pub use error::{Result, SimError};
