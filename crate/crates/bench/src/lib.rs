//! Experiment harness for the `l2s` optimizers: declarative grids, CSV
//! traces against effective passes, SVG plots, diagnostics and a subsample study.

pub mod diag;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod records;
pub mod spec;
pub mod study;

pub use error::{BenchError, Result};
