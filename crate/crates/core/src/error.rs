use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("matching is not injective: firm {firm} assigned twice")]
    NotInjective { firm: usize },

    #[error("market {n_agents}x{n_firms} exceeds the brute-force limit of {limit}x{limit}")]
    SizeLimit {
        n_agents: usize,
        n_firms: usize,
        limit: usize,
    },

    #[error("internal consistency violation: {0}")]
    Consistency(String),

    #[error("no market without the requested structure after {attempts} attempts")]
    ResampleLimit { attempts: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
