pub mod boxes;
pub mod dataset;
pub mod error;
pub mod imageio;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub mod cli;
pub mod dehaze;
pub mod detect;
pub mod diagnostics;
pub mod metrics;
pub mod pipeline;
pub mod scatter;
