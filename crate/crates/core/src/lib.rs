pub mod bench;
pub mod config;
pub mod engine;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod noise;
mod points;
pub mod seed;
pub mod spectral;
pub mod zoo;

pub use error::{Error, Result};
