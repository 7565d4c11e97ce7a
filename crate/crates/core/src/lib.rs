//! Keystroke-dynamics authentication toolkit.
//!
//! The pipeline runs from raw key events to per-user authentication reports:
//! [`ingest`] parses and windows event logs, [`features`] computes the TEMP,
//! NC, CKP and distance-conditioned DEFT feature families using the geometry
//! in [`keyboard`], [`selection`] ranks features with random-forest
//! importance, [`learner`] holds the tree ensembles and SMOTE, and [`eval`]
//! runs stratified cross-validation and biometric metrics. [`synth`] produces
//! synthetic typist cohorts for dataset-free testing.

pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod keyboard;
pub mod learner;
pub mod matrix;
pub mod pipeline;
pub mod seed;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
