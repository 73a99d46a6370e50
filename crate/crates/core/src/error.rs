//! The crate-wide error type.
//!
//! Variants are grouped by how callers should react:
//!
//! - input/parse problems ([`Error::Parse`], [`Error::Json`], [`Error::LpParse`]);
//! - precondition violations ([`Error::InvalidReduction`], [`Error::EmptyPool`],
//!   [`Error::IndexOutOfRange`], [`Error::EmptyWindow`], [`Error::InvalidConstraint`],
//!   [`Error::InvalidSeries`], [`Error::InvalidPath`], [`Error::MismatchedTerminals`],
//!   [`Error::NotPathShaped`]);
//! - infeasibility signals ([`Error::Incompatible`], [`Error::InfeasibleModel`]) —
//!   meaningful outcomes, not bugs;
//! - guarded refusals ([`Error::EnumerationCap`], [`Error::OracleGuard`]) — the
//!   request is well-formed but too large for exhaustive treatment;
//! - numeric failure ([`Error::Numeric`]) — a relaxation could not be solved
//!   reliably even after retries;
//! - internal-consistency failures ([`Error::Inconsistent`]) — a decoded
//!   solution contradicts the model; always indicates a bug.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed text input (UCR rows and similar line-oriented formats).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Malformed JSON input.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed model text during re-parsing.
    #[error("model text error at line {line}: {msg}")]
    LpParse { line: usize, msg: String },

    /// Block-averaging reduction with an unusable target length.
    #[error("cannot reduce series of length {len} to length {m}")]
    InvalidReduction { m: usize, len: usize },

    /// Sampling from an empty pool.
    #[error("sample pool is empty")]
    EmptyPool,

    /// A 1-based index left its valid range.
    #[error("{what} = {value} out of range [1, {max}]")]
    IndexOutOfRange {
        what: &'static str,
        value: usize,
        max: usize,
    },

    /// A per-series interval restriction is empty where a nonempty one is required.
    #[error("empty window for series {series}")]
    EmptyWindow { series: usize },

    /// A tolerance parameter is zero, negative, or non-finite.
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),

    /// Constraint parameters violate their invariants (e.g. Itakura slope < 1).
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    /// A series violates its invariants (empty, or non-finite values).
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    /// A vertex sequence is not a warping path.
    #[error("invalid warping path: {0}")]
    InvalidPath(String),

    /// The global constraint admits no warping path between these lengths.
    #[error("constraint incompatible with lengths m = {m}, n = {n}")]
    Incompatible { m: usize, n: usize },

    /// The model (or a requested mean length) has no feasible solution.
    #[error("infeasible model: {0}")]
    InfeasibleModel(String),

    /// Path enumeration refused: the grid exceeds the size cap.
    #[error("refusing to enumerate paths of order {m} x {n}: m + n exceeds cap {cap}")]
    EnumerationCap { m: usize, n: usize, cap: usize },

    /// The oracle refused: the total path-tuple count exceeds the guard.
    #[error("oracle refuses {count} path tuples (guard {guard})")]
    OracleGuard { count: u128, guard: u128 },

    /// Paths handed to the aligned-mean formula end at different columns.
    #[error("warping paths end at different columns: {0:?}")]
    MismatchedTerminals(Vec<usize>),

    /// A vertex assignment handed to the implicit-cut builder is not k warping paths.
    #[error("assignment is not path-shaped: {0}")]
    NotPathShaped(String),

    /// A model construct cannot be rendered in the export text format.
    #[error("cannot export row {row}: {msg}")]
    Export { row: String, msg: String },

    /// A relaxation failed numerically and retries did not help.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A decoded solution contradicts the model; indicates a bug.
    #[error("internal consistency failure: {0}")]
    Inconsistent(String),
}
