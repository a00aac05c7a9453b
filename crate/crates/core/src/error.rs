use thiserror::Error;

/// Errors raised by the library. Variant names are stable: the CLI surfaces
/// them verbatim so a failing experiment can be traced to its module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("BelowMonotoneThreshold: x = {x} is below the monotonicity threshold {threshold}")]
    BelowMonotoneThreshold { x: f64, threshold: f64 },

    #[error("NotNormalizable: {0}")]
    NotNormalizable(String),

    #[error("HorizonExceeded: index {index} beyond horizon {horizon}")]
    HorizonExceeded { index: usize, horizon: usize },

    #[error("TailDominates: horizon correction {correction:e} exceeds tolerance relative to {value:e}")]
    TailDominates { value: f64, correction: f64 },

    #[error("InvalidTruncation: m = {m} below support minimum {support_min}")]
    InvalidTruncation { m: usize, support_min: usize },

    #[error("ZeroDenominator: P(tau_k = n) vanishes for k = {k}, n = {n}")]
    ZeroDenominator { k: usize, n: usize },

    #[error("RegimeUnknown: {0}")]
    RegimeUnknown(String),

    #[error("TargetOutOfRange: target mean {target} outside ({lo}, {hi})")]
    TargetOutOfRange { target: f64, lo: f64, hi: f64 },

    #[error("NonMonotoneBracket: tilted mean not monotone on [{lo}, {hi}]")]
    NonMonotoneBracket { lo: f64, hi: f64 },

    #[error("ExcessOverflow: {fraction} of paths left the horizon unresolved")]
    ExcessOverflow { fraction: f64 },

    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),

    #[error("InvalidPmf: {0}")]
    InvalidPmf(String),

    #[error("Periodic: support has gcd {0}")]
    Periodic(usize),

    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),

    #[error("Config: {0}")]
    Config(String),

    #[error("Io: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable name, used by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            Error::BelowMonotoneThreshold { .. } => "BelowMonotoneThreshold",
            Error::NotNormalizable(_) => "NotNormalizable",
            Error::HorizonExceeded { .. } => "HorizonExceeded",
            Error::TailDominates { .. } => "TailDominates",
            Error::InvalidTruncation { .. } => "InvalidTruncation",
            Error::ZeroDenominator { .. } => "ZeroDenominator",
            Error::RegimeUnknown(_) => "RegimeUnknown",
            Error::TargetOutOfRange { .. } => "TargetOutOfRange",
            Error::NonMonotoneBracket { .. } => "NonMonotoneBracket",
            Error::ExcessOverflow { .. } => "ExcessOverflow",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidPmf(_) => "InvalidPmf",
            Error::Periodic(_) => "Periodic",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
