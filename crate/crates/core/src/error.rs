use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("empty truncation: the truncation set has zero Gaussian mass")]
    EmptyTruncation,

    #[error("unsupported selection: selection probability vanishes at the queried parameter")]
    UnsupportedSelection,

    #[error("datum inconsistent with selection event")]
    InconsistentDatum,

    #[error("divergent MLE: likelihood keeps increasing along coordinate {coordinate} towards {}", if *.positive { "+inf" } else { "-inf" })]
    DivergentMle { coordinate: usize, positive: bool },

    #[error("unbounded CI endpoint ({which})")]
    UnboundedEndpoint { which: &'static str },

    #[error("event empty along target direction")]
    EmptyAlongTarget,

    #[error("observation infeasible for the selection event (max violation {violation:e})")]
    Infeasible { violation: f64 },

    #[error("rank-deficient design: numerical rank {rank} < {cols}")]
    RankDeficient { rank: usize, cols: usize },

    #[error("no variables selected")]
    NoSelection,

    #[error("selection probability vanishes")]
    SelectionVanishes,

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
