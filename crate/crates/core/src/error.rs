use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("symbol {symbol} out of range for alphabet of size {m}")]
    SymbolOutOfRange { symbol: usize, m: usize },

    #[error("enumeration of {requested} items exceeds budget {budget}")]
    BudgetExceeded { requested: u128, budget: u64 },

    #[error("system is not expanding on the sample: alpha = {alpha} (need alpha > 0)")]
    NonExpanding { alpha: f64 },

    #[error("pressure trace is not decreasing in t: {0}")]
    NonMonotone(String),

    #[error("greedy Bowen-ball cover failed: {0}")]
    CoverFail(String),

    #[error("window [{start}, {end}] does not cover index {index}")]
    WindowExhausted { start: i64, end: i64, index: i64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// The diagnostic an abort corresponds to, if any.
    pub fn diagnostic(&self) -> Option<Diagnostic> {
        match self {
            Error::NonExpanding { .. } => Some(Diagnostic::WarnNonexpanding),
            Error::NonMonotone(_) => Some(Diagnostic::Nonmonotone),
            _ => None,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// Non-fatal conditions attached to estimates. A run carrying any of these
/// still produces numbers, but the CLI exits with status 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Diagnostic {
    /// Cloud resolution too coarse for the smallest Bowen balls.
    Unresolved,
    /// Slopes at the two smallest scales disagree.
    Nonmonotone,
    /// A spanning/separated sandwich inequality failed as computed.
    SandwichViolated,
    /// A Bowen ball received no sample mass.
    ZeroMass,
    /// Some generator has log-factor <= 0 on the cloud.
    WarnNonexpanding,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Diagnostic::Unresolved => "UNRESOLVED",
            Diagnostic::Nonmonotone => "NONMONOTONE",
            Diagnostic::SandwichViolated => "SANDWICH_VIOLATED",
            Diagnostic::ZeroMass => "ZERO_MASS",
            Diagnostic::WarnNonexpanding => "WARN_NONEXPANDING",
        };
        f.write_str(s)
    }
}
