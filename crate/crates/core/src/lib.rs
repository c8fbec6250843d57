//! Synthetic MNIST-style numeral datasets from single exemplar glyphs.
//!
//! The pipeline runs exemplar PGMs through [`exemplar`] normalization,
//! [`synthesis`] (seeded elastic deformation and corruption) and
//! [`dataset`] assembly into IDX files ([`idx`]). [`morpho`] profiles the
//! result and [`lenet`] trains and evaluates a LeNet-5 baseline on it.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod exemplar;
pub mod idx;
pub mod image;
pub mod lenet;
pub mod manifest;
pub mod morpho;
pub mod pgm;
pub mod rng;
pub mod synthesis;

pub use error::{Error, Result};
