//! Heat-semigroup harmonic analysis on flat model domains.
//!
//! The crate evaluates closed-form heat kernels on the circle, interval,
//! half-line, periodic channel and rectangle, applies heat flows to sampled
//! fields, and builds diagnostics on top: Littlewood-Paley pieces, heat
//! Besov norms, a small-time parametrix and Onsager-type flux experiments.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod domains;
pub mod error;
pub mod kernels;
pub mod lp_analysis;
pub mod onsager_lab;
pub mod parametrix;
pub mod quadrature;
pub mod spectral;

pub use domains::{Bc, Domain, Field, Grid, Region};
pub use error::{HeatlabError, Result};
pub use kernels::{apply_heat, ClosedFormKernel};
