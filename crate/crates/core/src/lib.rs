//! Numerical toolkit for the wave equation on stationary spacetimes bounded by
//! non-degenerate Killing horizons, specialised to Schwarzschild–de Sitter.

// NaN must fail range checks, and index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod carleman;
pub mod decay;
pub mod model;
pub mod spectra;
pub mod symbol;
