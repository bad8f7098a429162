pub mod cli;
pub mod error;
pub mod fluid;
pub mod index;
pub mod model;
pub mod oracle;
pub mod relaxed;
pub mod sim;

pub use error::{Error, Result};
