pub mod acquisitions;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod objectives;
pub mod posterior;
pub mod runner;
pub mod strategies;
pub mod theory;

pub use error::{Error, Result};
