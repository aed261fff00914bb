//! Material-point ensemble that generates the state-variable fields.

mod ensemble;
mod material;

pub use ensemble::*;
pub use material::*;
