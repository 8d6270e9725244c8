pub mod divergence;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod processes;
pub mod quadrature;
pub mod rng;
pub mod schedules;
pub mod stats;
pub mod targets;

pub use error::{Error, Result};
