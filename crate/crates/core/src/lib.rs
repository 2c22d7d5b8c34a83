//! Line-level fault localization from execution traces.
//!
//! Traces are condensed into count spectra, control-flow and lexical
//! features per executed line, widened into sliding-window context vectors,
//! and scored with a gradient-boosted tree classifier. Classic spectrum
//! formulas (Ochiai, DStar², Tarantula) and a seeded random ranking serve as
//! baselines.

pub mod ablation;
pub mod corpus;
pub mod error;
pub mod evalrank;
pub mod flowlex;
pub mod gbdt;
pub mod labeling;
pub mod pipeline;
pub mod spectra;
pub mod trace;
pub mod window;

pub use error::{Error, Result};
