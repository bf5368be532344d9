use thiserror::Error;

#[derive(Debug, Error)]
pub enum DealerError {
    #[error("invalid owner {id}: {reason}")]
    InvalidOwner { id: u32, reason: String },

    #[error("invalid label {label} for owner {id}")]
    InvalidLabel { id: u32, label: f64 },

    #[error("invalid tiers: {0}")]
    InvalidTiers(String),

    #[error("invalid survey point: {0}")]
    InvalidSurveyPoint(String),

    #[error("too many owners for exact enumeration: {0} > {1}")]
    TooManyOwners(usize, usize),

    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error("dimension mismatch: weights {weights} vs features {features}")]
    DimensionMismatch { weights: usize, features: usize },

    #[error("objective diverged to a non-finite value")]
    NonFinite,

    #[error("invalid privacy parameters: {0}")]
    InvalidPrivacyParams(String),

    #[error("all Shapley values are zero")]
    AllZeroShapley,

    #[error("too many items for brute force: {0} > {1}")]
    TooManyItems(usize, usize),

    #[error("budget table too large: {0} cells exceed limit {1}")]
    BudgetTooLargeForTable(u64, u64),

    #[error("guess enumeration too large: {0} subsets exceed limit {1}")]
    EnumerationTooLarge(u64, u64),

    #[error("solution space is empty")]
    EmptySolutionSpace,

    #[error("survey is empty")]
    EmptySurvey,

    #[error("search space too large: {0} combinations exceed limit {1}")]
    SearchSpaceTooLarge(u128, u128),

    #[error("total price across tiers is zero")]
    ZeroTotalPrice,

    #[error("unknown strategy '{kind}': '{name}' (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("parse error at row {row}, column {column}: {reason}")]
    ParseError {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DealerError>;
