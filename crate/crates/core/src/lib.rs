//! Numerical tools for front asymptotics of Fisher-KPP type equations.

pub mod analysis;
pub mod barriers;
pub mod error;
pub mod frames;
pub mod model;
pub mod solver;
pub mod wave;

pub use error::{Error, Result};
