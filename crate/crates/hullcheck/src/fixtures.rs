//! Embedded reference datasets, also shipped as CSV under `fixtures/`.
//!
//! `W0` is the 16-run, 3-predictor overlap demonstration set; `W1` and `W2`
//! are its Type I / Type II minimal sub-configurations (Case runs 7-8 with
//! Non-Case runs 6-8, and Case runs 1-3 with Non-Case runs 1-3). `A1` is the
//! 5-dimensional nine-run added configuration in list form, and `g` is the
//! pair of 1D doubletons.

use crate::dataset::{load_dataset, Dataset, Format};

pub const W0_CSV: &str = include_str!("../fixtures/w0.csv");
pub const W1_CSV: &str = include_str!("../fixtures/w1.csv");
pub const W2_CSV: &str = include_str!("../fixtures/w2.csv");
pub const A1_CSV: &str = include_str!("../fixtures/a1.csv");
pub const G_CSV: &str = include_str!("../fixtures/g.csv");

fn parse(csv: &str) -> Dataset {
    load_dataset(csv.as_bytes(), Format::Csv).expect("embedded fixture is valid")
}

/// The 16-run overlap demonstration dataset (8 Cases, 8 Non-Cases, d = 3).
pub fn w0() -> Dataset {
    parse(W0_CSV)
}

/// Type I sub-configuration of `W0`: Case rows 7-8 plus Non-Case rows 6-8.
pub fn w1() -> Dataset {
    parse(W1_CSV)
}

/// Type II sub-configuration of `W0`: Case rows 1-3 plus Non-Case rows 1-3.
pub fn w2() -> Dataset {
    parse(W2_CSV)
}

/// Nine-run, d = 5 added configuration from three 1D Type I components.
pub fn a1() -> Dataset {
    parse(A1_CSV)
}

/// Two 1D doubletons: the smallest Type II configuration.
pub fn g() -> Dataset {
    parse(G_CSV)
}
