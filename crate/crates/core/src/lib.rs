pub mod cli;
pub mod config;
pub mod ellipsoid;
pub mod error;
pub mod lyapunov;
pub mod ode;
pub mod riccati;
pub mod scenario;
pub mod signal;
pub mod simulate;
pub mod synthesis;

pub use error::{Error, Result};
