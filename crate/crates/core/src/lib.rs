pub mod averaging;
pub mod control;
pub mod error;
pub mod jet;
pub mod model;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};
