//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("height law has a non-integrable tail (infinite mean)")]
    NonIntegrableTail,
    #[error("invalid height model: {0}")]
    InvalidModel(String),
    #[error("line dips below the ground on the interval (value {0} at x = {1})")]
    NegativeLine(f64, f64),
    #[error("duplicate building base at x = {0}")]
    DuplicateBase(f64),
    #[error("x = {x} lies outside the covered interval [{a}, {b}]")]
    OutsideCovered { x: f64, a: f64, b: f64 },
    #[error("landscape has no random stream and cannot be extended")]
    NotExtendable,
    #[error("lookahead exceeded the maximal width {0}")]
    TruncationBudgetExceeded(f64),
    #[error("blocking building is ill-defined: {0}")]
    IllDefined(&'static str),
    #[error("blockage slope undefined: point and building share the abscissa {0}")]
    SamePosition(f64),
    #[error("scheme mismatch: {0}")]
    SchemeMismatch(&'static str),
    #[error("empty sample")]
    EmptySample,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
