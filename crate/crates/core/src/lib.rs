//! Complete verification of piecewise-linear neural networks by branch and bound.

pub mod bab;
pub mod bounds;
pub mod datagen;
pub mod error;
pub mod lp;
pub mod mipexport;
pub mod network;
pub mod oracle;

pub use error::{Error, Result};
