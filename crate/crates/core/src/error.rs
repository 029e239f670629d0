use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterate became NaN or infinite; the whole batch is discarded.
    #[error("non-finite state in trajectory {trajectory} at step {step} (t = {t})")]
    NonFiniteState {
        trajectory: usize,
        step: usize,
        t: f64,
    },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("parse error at line {line}{}: {msg}", key.as_ref().map(|k| format!(" (key `{k}`)")).unwrap_or_default())]
    Parse {
        line: usize,
        key: Option<String>,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
