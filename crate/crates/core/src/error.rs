//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}` in input header")]
    MissingColumn(String),
    #[error("irregular time grid for customer `{customer}`: {detail}")]
    IrregularGrid { customer: String, detail: String },
    #[error("non-finite value for customer `{customer}` at slot {slot}")]
    NonFiniteValue { customer: String, slot: usize },
    #[error("time grid mismatch: {0}")]
    GridMismatch(String),
    #[error("fleet is empty")]
    EmptyFleet,
    #[error("customer group is empty")]
    EmptyGroup,
    #[error("series is empty")]
    EmptySeries,
    #[error(
        "target interval {target_s}s is not a positive multiple of source interval {source_s}s"
    )]
    NonMultipleInterval { source_s: u32, target_s: u32 },
    #[error("strictness k must be >= 0, got {0}")]
    NegativeK(f64),
    #[error("sequence length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate total: factor sum {sum:e} is ~0 at scale {scale:e}; shares are undefined")]
    DegenerateTotal { sum: f64, scale: f64 },
    #[error("degenerate shares: {0}")]
    DegenerateShares(String),
    #[error("customer sets differ: {0}")]
    CustomerSetMismatch(String),
    #[error("battery charge and discharge windows overlap")]
    WindowOverlap,
    #[error("overlay sign violation for home `{home}`: {detail}")]
    OverlaySignViolation { home: String, detail: String },
    #[error("aggregation groups overlap on home `{0}`")]
    OverlappingGroups(String),
    #[error("unknown home `{0}`")]
    UnknownHome(String),
    #[error("invalid DER fractions: ev {ev} + pv {pv} must stay within [0, 1]")]
    InvalidFractions { ev: f64, pv: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
