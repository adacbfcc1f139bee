//! Learning the evolution-operator semigroup of an unknown autonomous system
//! from short bursts of trajectory data with variable time lags.
//!
//! The crate provides the full pipeline: reference solvers and burst dataset
//! generation for built-in ODE systems and modal-space PDE problems, a
//! residual network architecture whose zero-lag action is exactly the
//! identity, semigroup-informed training objectives, a deterministic trainer,
//! and evaluation tools that include machine-checkable forms of the error
//! bound and the partition-variance bound.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod loss;
pub mod modal;
pub mod mlp;
pub mod net;
pub mod optim;
pub mod plot;
pub mod storage;
pub mod systems;
pub mod testing;
pub mod train;

pub use error::{Error, Result};
