//! Error types shared across the crate.

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid static configuration (sizes, counts, ratios).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid runtime input (shape mismatch, empty data).
    #[error("input error: {0}")]
    Input(String),

    /// A numeric operation could not be carried out (singular system,
    /// near-zero divisor).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The selected measurement columns are linearly dependent.
    #[error("rank-deficient support")]
    RankDeficient,
}

pub type Result<T> = std::result::Result<T, Error>;
