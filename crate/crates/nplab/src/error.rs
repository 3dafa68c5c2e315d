use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("mesh: {0}")]
    Mesh(String),
    #[error("assembly fault: {0}")]
    Assembly(String),
    #[error("single-layer Gram matrix is not positive on the mean-zero subspace: {0}")]
    NotPositive(String),
    #[error("linear algebra: {0}")]
    LinAlg(String),
    #[error("spectral: {0}")]
    Spectral(String),
    #[error("config: {0}")]
    Config(String),
    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
