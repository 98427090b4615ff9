//! Adaptive-control and online-learning update laws over a shared error model.
//!
//! The crate is `no_std` with `alloc`. Continuous laws are integrated with RK4
//! by [`sim::run`]; discrete laws iterate once per step.

#![no_std]
// `!(x > 0.0)` is used on purpose so NaN parameters are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analysis;
pub mod continuous;
pub mod discrete;
pub mod error;
pub mod error_models;
pub mod linalg;
pub mod losses;
pub mod signals;
pub mod sim;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
