use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, dimension mismatches, malformed config files.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("Green kernel is singular at coincident points")]
    Singularity,

    #[error("node {0} not found")]
    NotFound(usize),

    #[error("expected offspring {0:.3e} per generation exceeds the explosion guard")]
    Explosion(f64),

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
