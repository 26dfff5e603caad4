use thiserror::Error;

/// Errors produced by the hullcheck library.
#[derive(Debug, Error)]
pub enum Error {
    /// A record in the input stream could not be parsed.
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Parsed data violates a dataset invariant.
    #[error("validation error in field `{field}`: {msg}")]
    Validation { field: String, msg: String },

    /// The dataset has no Case/Non-Case pairs (n1 * n0 == 0).
    #[error("no mixed results: dataset needs at least one Case and one Non-Case")]
    NoMixedResults,

    /// A displacement entry is not finite.
    #[error("non-finite value in displacement matrix")]
    NonFinite,

    /// Marginal weights requested from a solution with negligible total weight.
    #[error("degenerate weights: w_tot = {w_tot} is too small to normalize")]
    DegenerateWeights { w_tot: f64 },

    /// Input to a deflation or depth operation has no overlapping core.
    #[error("dataset is not overlapping (status {status})")]
    NotOverlapping { status: String },

    /// Input is not a minimal overlap configuration.
    #[error("dataset is not a minimal overlap configuration")]
    NotMinimal,

    /// Input is not a Type I configuration.
    #[error("dataset is not a Type I configuration")]
    NotTypeI,

    /// Exhaustive subset search would exceed the evaluation budget.
    #[error("removal search over {subsets} subsets exceeds the budget of {budget}")]
    BudgetExceeded { subsets: u128, budget: u128 },

    /// Requested lattice-search basis is not a recognized catalog id.
    #[error("unknown search basis `{0}`")]
    UnknownBasis(String),

    /// Configuration identification is only supported up to three dimensions.
    #[error("dimension {0} unsupported (max 3)")]
    DimensionUnsupported(usize),

    /// Anchor composition did not produce a minimal Type II configuration.
    #[error("composition failed: {0}")]
    CompositionFailed(String),

    /// Requested generator shape is impossible.
    #[error("bad shape: {0}")]
    BadShape(String),

    /// I/O failure while reading or writing data.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
