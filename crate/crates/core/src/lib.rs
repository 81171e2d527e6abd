//! Adaptive 3D video networks.
//!
//! One set of weights executes at any width factor γw and input
//! spatial/temporal factors γs, γt. The crate contains the analytic cost
//! model ([`configspace`]), slimmable 3D building blocks ([`slimnet`]), the
//! two-pathway assembly with adaptive fusion ([`multipath`]), mutual training
//! with spatial-temporal distillation ([`training`]), post-training
//! calibration and budget tables ([`deploy`]) and a synthetic video task
//! ([`data`]).

pub mod checkpoint;
pub mod configspace;
pub mod data;
pub mod deploy;
pub mod error;
pub mod exec;
pub mod fsutil;
pub mod model;
pub mod multipath;
pub mod nn;
pub mod real;
pub mod slimnet;
pub mod training;

pub use configspace::{ArchSpec, ComputeRange, Configuration};
pub use error::{A3dError, Result};
pub use model::Model;
pub use real::Real;
