#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod bubble;
pub mod energy;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod quadrature;
pub mod reduction;
pub mod scenario;
pub mod special;
pub mod surface;

pub use error::{Error, Result};
