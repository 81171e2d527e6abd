//! Tensor plumbing shared by the network modules.

pub mod im2col;
pub mod ops;
pub mod params;

pub use params::{Param, ParamId, ParamStore};
