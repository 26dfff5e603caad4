//! Overlap diagnostics for binary-response predictor data.
//!
//! Whether a logistic-regression MLE exists and is unique is a geometric
//! property of the data: the two predictor groups must *overlap*. This crate
//! decides that via an empirical-likelihood test that the origin lies inside
//! the convex hull of the Case-minus-Non-Case displacement set, cross-checks
//! it with independent linear-programming oracles, and provides the
//! machinery around minimal overlap configurations: deflation of data to
//! minimal cores, canonical Type I forms, and construction, search and
//! identification of the Type II catalogs in up to three dimensions.
//!
//! Start with [`dataset::load_dataset`] or a fixture from [`fixtures`], and
//! [`status::classify`] for the four-way overlap verdict. The `examples/`
//! directory has one runnable example per capability; the `hullcheck` binary
//! wraps the same calls for shell pipelines.

pub mod catalog;
pub mod cli;
pub mod dataset;
pub mod elcore;
mod equiv;
mod error;
pub mod fixtures;
pub mod forms;
pub mod minimal;
pub mod render;
mod simplex;
pub mod status;

pub use dataset::{displacements, load_dataset, matrix_rank, shuffle, Dataset, Displacements};
pub use error::{Error, Result};
pub use status::{classify, classify_with, OverlapStatus};
