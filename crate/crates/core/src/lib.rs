//! Detection of shifted causal mechanisms across environments.
//!
//! Nodes whose mechanism differs between datasets are found by iterative
//! leaf removal driven by kernel score estimates; the edges that changed are
//! then recovered per shifted node, either structurally (greedy conditional
//! dependence selection) or functionally (basis regression and a Wald test).
//!
//! The numeric core is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod data;
pub mod detect;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod scalar;
pub mod score;
pub mod seed;
pub mod simulate;
pub mod structure;

pub use error::{Error, Result};

pub type Matrix64 = matrix::Matrix<f64>;
pub type EnvironmentData64 = data::EnvironmentData<f64>;
pub type ShiftReport64 = detect::ShiftReport<f64>;
pub type ScoreEstimate64 = score::ScoreEstimate<f64>;

pub type Matrix32 = matrix::Matrix<f32>;
pub type EnvironmentData32 = data::EnvironmentData<f32>;
pub type ShiftReport32 = detect::ShiftReport<f32>;
