//! Numerical spectral analysis of quasiperiodic Jacobi block operators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cocycle;
pub mod determinants;
pub mod error;
pub mod family;
pub mod frequency;
pub mod ids;
pub mod linalg;
pub mod logdet;
pub mod lyapunov;
pub mod sampling;
pub mod zeros;

pub use error::{QpError, Result};
pub use family::OperatorFamily;
pub use frequency::Frequency;
pub use logdet::LogDet;
pub use sampling::{Phase, SamplingFunction};
