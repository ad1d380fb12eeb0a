//! Numerical laboratory for the Finsler Ricci flow `∂t log F = −Ric`.

// `!(v > 0.0)` is used on purpose so NaN is rejected; index loops mirror tensor notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod flow;
pub mod format;
pub mod geometry;
pub mod indicatrix;
pub mod jet;
pub mod metric;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
