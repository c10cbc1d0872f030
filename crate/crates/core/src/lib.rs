//! Jaynes-Cummings gate simulation under a random-walk dipole field.

mod error;
mod sum;

pub mod dynamics;
pub mod ensemble;
pub mod field;
pub mod fit;
pub mod perturbation;
pub mod rotation;
pub mod state;

pub use error::{Error, Result};
pub use sum::NeumaierSum;
