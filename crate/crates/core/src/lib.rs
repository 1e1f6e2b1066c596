//! Spectral tests and explicit reducing unitaries for Hermitian matrix
//! tuples whose pencil determinant `det(x₁A₁ + ⋯ + x_mA_m − I)` is a
//! perfect `k`-th power.
//!
//! The [`conditions`] module decides whether a tuple is unitarily a direct
//! sum of `k` identical `n×n` tuples by testing the determinant of the tuple
//! and of a finite family of words built from it. When the test passes,
//! [`decomposer::decompose`] returns the unitary and the reduced tuple.

pub mod charpoly;
pub mod cli;
pub mod conditions;
pub mod config;
pub mod decomposer;
pub mod error;
pub mod instances;
pub mod io;
pub mod linalg;
pub mod poly;

pub use charpoly::{kth_power_test, pencil_charpoly, KPowerVerdict};
pub use conditions::{analyze, AnalyzeOptions, ConditionReport, Overall, WordMode, WordSpec};
pub use decomposer::{decompose, DecompositionResult};
pub use error::{PencilError, Result};
pub use linalg::{CMat, HermitianTuple, SpectralData};
