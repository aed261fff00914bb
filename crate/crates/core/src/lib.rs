//! Reduced-order surrogates for history-dependent microstructural fields:
//! loading-path generation, a material-point ensemble producing plastic
//! strain and stress fields, PCA compression and recurrent regressors.

pub mod data;
pub mod error;
pub mod micro;
pub mod nn;
pub mod pathgen;
pub mod pca;
pub mod rng;
pub mod surrogate;
pub mod tensor;

pub use error::{Error, Result};
