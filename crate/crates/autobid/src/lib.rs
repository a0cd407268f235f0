//! Parallel second-price auctions among autobidders with return-on-spend
//! constraints.
//!
//! The crate provides exact (rational-arithmetic) machinery for
//!
//! - clearing parallel second-price auctions with reserve prices,
//! - verifying exact and approximate autobidding equilibria by linear
//!   feasibility, and searching multiplier grids for welfare- or
//!   revenue-optimal equilibria,
//! - compiling label-cover and max-cover constraint satisfaction problems
//!   into autobidding instances through assignment / NAND / NOT / edge
//!   gadgets, and
//! - simulating repeated-auction pacing dynamics with admissibility,
//!   responsiveness, and soundness diagnostics.
//!
//! Everything numeric is a `num::BigRational`; floats appear only in
//! human-readable reports.

pub mod auction;
pub mod cli;
pub mod equilibrium;
pub mod gadgets;
pub mod io;
pub mod learning;
pub mod lp;
pub mod model;
pub mod rational;

pub use model::{AutobiddingInstance, AuctionOutcome, MultiplierProfile};
pub use rational::Q;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("multiplier profile out of range: {0}")]
    ProfileOutOfRange(String),
    #[error("inconsistent embedding maps: {0}")]
    InconsistentMaps(String),
    #[error("grid budget exceeded: {size} profiles > budget {budget}")]
    BudgetExceeded { size: u128, budget: u128 },
    #[error("label out of range: {0}")]
    InvalidLabel(String),
    #[error("ambiguous decode: {0}")]
    AmbiguousDecode(String),
    #[error("missing role: {0}")]
    MissingRole(String),
    #[error("inconsistent trace: {0}")]
    InconsistentTrace(String),
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
