//! Simulation and estimation toolkit for continuum percolation of Wiener
//! sausages in dimension `d ≥ 4`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branching;
pub mod capacity;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod percolation;
pub mod stats;
pub mod stochastic;

pub use error::{Error, Result};
