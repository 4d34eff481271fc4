//! Dense feedforward networks whose designated internal layers carry physical
//! meaning, trained under penalty-encoded physical constraints, plus the
//! closed-form pipe-hydraulics model used to generate and score every
//! experiment in this crate.
//!
//! The crate is organized around six pieces:
//!
//! - [`autodiff`] — a minimal reverse-mode tape over dense `f64` matrices
//! - [`hydraulics`] — the analytic head-loss model (data generator and oracle)
//! - [`network`] — network construction, constraint registry, penalty loss,
//!   training loop, checkpoints
//! - [`datasets`] — synthetic data generation, noise/bias injection,
//!   min-max normalization, text persistence
//! - [`experiments`] — declarative experiment configurations and the metric
//!   suite used to score them
//! - the `pgnniv` binary — CLI entry point (generate / train / eval /
//!   reproduce)

pub mod autodiff;
pub mod datasets;
pub mod experiments;
pub mod hydraulics;
pub mod network;
