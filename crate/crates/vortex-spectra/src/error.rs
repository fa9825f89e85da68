use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("integration failed at r = {r}: {msg}")]
    Integration { r: f64, msg: String },
    #[error("outer radius {r_max} insufficient (indicator {indicator:e}); try r_max >= {suggested}")]
    OuterRadius {
        r_max: f64,
        indicator: f64,
        suggested: f64,
    },
    #[error("connection inconsistent: w_residual = {0:e}")]
    Connection(f64),
    #[error("outside validity window: {0}")]
    Window(String),
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("under-resolved: {0}")]
    Resolution(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
