// Parameter validation uses `!(v > 0.0)` so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Matrix-free trust-region optimization on embedded manifolds for
//! strict saddle problems: exact and inexact (tCG + minimum-eigenvalue
//! oracle) outer loops, per-iteration telemetry, post-hoc verification of
//! the decrease guarantees, and worst-case budget calculators.

pub mod budgets;
pub mod driver;
pub mod error;
pub mod manifold;
pub mod meo;
pub mod model;
pub mod problems;
pub mod subproblem;
pub mod tcg;
pub mod trace;
pub mod verify;

pub use error::{Result, SaddleError};
