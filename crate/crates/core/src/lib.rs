//! Production scheduling for small hydropower plants by deterministic
//! dynamic programming.
//!
//! A plant runs in one of a few production modes and pays to change mode.
//! [`dp::solve`] runs backward induction over day, reservoir level and mode
//! for one deterministic flow path. [`strategy`] turns that into the
//! hindsight-optimal schedule (solved on the realized flow) and a
//! receding-horizon schedule that re-solves daily against a mean-reverting
//! flow projection with a short forecast spliced in front. [`bench`] runs
//! both over years and parameter grids and reports the profit ratio.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod dp;
pub mod error;
pub mod flow;
pub mod plant;
pub mod strategy;
pub mod synth;

pub use error::{Error, Result};
