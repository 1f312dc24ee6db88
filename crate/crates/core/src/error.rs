use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coordinate {value} on axis {axis} lies outside [0, 1]")]
    OutOfDomain { axis: usize, value: f64 },

    #[error("label must be -1 or +1, got {0}")]
    InvalidLabel(i64),

    #[error("hyperplane normal must be nonzero")]
    ZeroNormal,

    #[error("dataset is empty")]
    EmptyData,

    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("level {level} exceeds the supported maximum {max}")]
    LevelTooDeep { level: u32, max: u32 },

    #[error("enumeration would produce {predicted} trees, above the limit {limit}")]
    EnumerationLimit { predicted: u128, limit: u128 },

    #[error("decoration supports d <= 3, got d = {0}")]
    DecorationDimension(usize),

    #[error("grid with {cells} cells exceeds the cap {cap}")]
    GridTooLarge { cells: u128, cap: u128 },

    #[error("budget {requested} exceeds the table maximum {max}")]
    BudgetOutOfRange { requested: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("excess risk has no closed form for this classifier: {0}")]
    UnsupportedExact(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
