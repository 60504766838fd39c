//! Loopless SARAH (L2S) and related variance-reduced methods for finite-sum
//! problems `F(x) = (1/n) Σ f_i(x)`, with exact IFO accounting.
//!
//! * [`data`]: LIBSVM ingestion, subsampling, synthetic instances.
//! * [`model`]: logistic losses and the counted gradient oracle.
//! * [`sampling`]: reproducible random streams, snapshot coins, importance tables.
//! * [`optim`]: GD, SGD, SVRG, SARAH, SARAH-LI, L2S, L2S-SC, D2S and a step-size planner.
//! * [`diagnostics`]: brute-force and Monte-Carlo checks of the estimator theory.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod optim;
pub mod sampling;

pub use error::{Error, Result};
