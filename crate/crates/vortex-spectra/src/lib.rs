pub mod cli;
pub mod connection;
pub mod error;
pub mod kernels;
pub mod langer;
pub mod oracle;
pub mod profiles;
pub mod propagator;
pub mod quad;
pub mod specfun;
pub mod spectral;

pub use error::{Error, Result};
