pub mod dyadic_measure;
pub mod error;
pub mod exact;

pub use error::{Error, Result};
pub mod models;
pub mod fit;
pub mod spectra;
pub mod separation;
pub mod addcomb;
pub mod geometry;
pub mod cli;
