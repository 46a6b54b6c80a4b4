pub mod arch;
pub mod autograd;
pub mod blocks;
pub mod cli;
pub mod data;
pub mod error;
pub mod fdcheck;
pub mod graph;
pub mod kernels;
pub mod seeding;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
