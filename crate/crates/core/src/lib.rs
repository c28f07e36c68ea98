//! Funding-aware market making for perpetual futures: calibration of the
//! funding process and of the fill curve, a finite-difference HJB solver for
//! the optimal quotes, quoting policies and a minute-replay backtester.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fill_calib;
pub mod funding_calib;
pub mod hjb_solver;
pub mod io;
pub mod optim;
pub mod policies;
pub mod simulator;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
