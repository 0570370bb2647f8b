pub mod analysis;
pub mod chunking;
pub mod cli;
pub mod data;
pub mod error;
pub mod layers;
pub mod model;
pub mod objective;
pub mod params;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{ModelConfig, SeparationModel, SeparationResult, Variant};
pub use tensor::{Scalar, Tensor, TensorError};
