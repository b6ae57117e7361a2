pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod evalkit;
pub mod landmarks;
pub mod losses;
pub mod networks;
pub mod nn;
pub mod optim;
pub mod real;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::{compose, ImageTensor};
