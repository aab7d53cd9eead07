//! Garment folding toolkit: a position-based cloth simulator, parametric
//! garments, analytic fold-trajectory planning, contact synthesis from
//! point flow, closed-loop execution, evaluation metrics and dataset IO.

pub mod config;
pub mod contact;
pub mod dataset;
pub mod error;
pub mod executor;
pub mod garment;
pub mod geometry;
pub mod instruction;
pub mod metrics;
pub mod planner;
pub mod sim;

pub use error::{FoldError, Result};
