pub mod autograd;
pub mod cli;
pub mod container;
pub mod data;
pub mod distill;
mod error;
pub mod model;
pub mod replace;
pub mod surgery;

pub use error::{Error, Result};
