//! Design, evaluation and Monte Carlo simulation of pooled-testing
//! schemes for isolating infected individuals under a fixed test budget.
//!
//! The figure of merit throughout is the expected number of tests per
//! infected individual found (ETI): a scheme using an expected `E[T]`
//! tests and finding an expected `E[K]` infected has `ETI = E[T]/E[K]`,
//! lower being better.
//!
//! - [`model`] — shared parameter and report types.
//! - [`analytic`] — closed-form ETI and rate formulas.
//! - [`optimize`] — exhaustive (r, s) search minimizing ETI.
//! - [`design`] — explicit pooling constructions and the block code.
//! - [`simulate`] — seeded Monte Carlo validation of the formulas.

pub mod analytic;
pub mod design;
pub mod error;
pub mod model;
pub mod optimize;
pub mod simulate;

pub use error::{Error, Result};
