//! Truncated Dyson series simulation of time-dependent sparse Hamiltonians.

// `!(x > 0.0)` guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod clockprep;
pub mod dysoncore;
pub mod error;
pub mod hammodel;
pub mod lcu;
pub mod linalg;
pub mod onesparse;
pub mod resources;
pub mod statevec;

pub use error::{Error, Result};
