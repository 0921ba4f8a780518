//! Exact polynomial machinery for lifting control Lyapunov functions from a
//! quotient control system to the full system.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exact;
pub mod geometry;
pub mod grid;
pub mod integrability;
pub mod lift;
pub mod numeric;
pub mod ode;
pub mod poly;
pub mod problem;
pub mod synth;
pub mod sysmodel;

pub use error::{Error, Result};
