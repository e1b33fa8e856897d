pub mod cell;
pub mod config;
pub mod convex;
pub mod effective;
pub mod eps;
pub mod experiments;
pub mod error;
pub mod fem;
pub mod mechanics;
pub mod media;
pub mod path;
pub mod report;
pub mod tensor;

pub use error::{Error, Result};
