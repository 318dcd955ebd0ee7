//! Currents-based representation of oriented triangulated surfaces in a
//! vector-valued RKHS with a Gaussian diagonal kernel, three operator-derived
//! bases for the resulting fields, and cumulative-logit (proportional-odds)
//! regression with an optional Gaussian random intercept.
//!
//! The modules follow the data flow of a study:
//!
//! * [`geometry`]: mesh loading and per-triangle current descriptors.
//! * [`rkhs`]: kernel, evaluation grid, raw currents, projection onto the grid
//!   and the H_K / L² inner products.
//! * [`bases`]: kernel-operator, covariance-operator and mixed bases.
//! * [`ordreg`]: ordinal regression engine (fixed and mixed).
//! * [`pipeline`]: feature assembly, leave-one-subject-out CV and reporting.
//! * [`synthcorp`]: synthetic body corpus with a known generative model.

// `!(x >= 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bases;
pub mod exec;
pub mod geometry;
pub mod hashing;
pub mod linalg;
pub mod ordreg;
pub mod pipeline;
pub mod rkhs;
pub mod synthcorp;
pub mod textio;

pub use exec::Execution;
