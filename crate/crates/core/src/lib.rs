pub mod cli;
pub mod consensus;
pub mod data;
pub mod error;
pub mod eval;
pub mod lecomh;
pub mod nnet;
pub mod pretrain;
pub mod rng;

pub use error::{Error, Result};
