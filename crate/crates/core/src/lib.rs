pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod gn;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod resample;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
