pub mod bench;
pub mod blocking;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod model;
pub mod samplers;

pub use error::{Error, Result};
