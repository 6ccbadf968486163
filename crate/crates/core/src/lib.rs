//! Remaining-useful-life estimation for run-to-failure sensor fleets.
//!
//! The crate covers the whole pipeline: C-MAPSS file parsing, condition-aware
//! preprocessing (regime normalization, random-forest feature selection,
//! exponential smoothing, windowing), a residual-corrected bidirectional LSTM
//! trained with a small reverse-mode autodiff engine, and evaluation/reporting.

pub mod autodiff;
pub mod cli;
pub mod cmapss;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod preprocessing;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
