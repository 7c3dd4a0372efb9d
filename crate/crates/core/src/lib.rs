//! Real-time simulation of LLC resonant converters with a direct-mapped
//! diode state function.
//!
//! The rectifier of an LLC converter has sixteen possible diode states, of
//! which only four are ever self-consistent. Given the Norton history
//! currents seen by the rectifier on its ac and dc sides, the consistent
//! state follows from four sign tests against two slopes. This crate
//! builds that mapping from the circuit, precomputes the per-state update
//! matrices, and steps the converter with it:
//!
//! - [`circuit`] holds the parameter sets and the first-harmonic tank analysis.
//! - [`stamping`] assembles companion models and the MANA system of the converter.
//! - [`precompute`] turns the MANA inverses into update matrices and folded classifiers.
//! - [`dmm`] derives and evaluates the diode mapping function.
//! - [`solvers`] contains the time-stepping engines (iterative BE, forward Euler,
//!   two-stage and single-stage direct-mapped, fixed-point single-stage).
//! - [`fxp`] emulates the fixed-point matrix-vector datapath.
//! - [`scenario`] and [`report`] drive test sequences and compare waveforms.

pub mod circuit;
pub mod dmm;
pub mod error;
pub mod fxp;
pub mod linalg;
pub mod precompute;
pub mod report;
pub mod scenario;
pub mod solvers;
pub mod stamping;

pub use circuit::{LlcParameters, Preset};
pub use error::{Error, Result};
pub use precompute::MatrixBundle;
pub use stamping::SwitchCombination;
