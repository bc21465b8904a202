pub mod classes;
pub mod cli;
pub mod discretize;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod potentials;
pub mod special;
pub mod sum;
pub mod verify;

pub use error::{Error, Result};
