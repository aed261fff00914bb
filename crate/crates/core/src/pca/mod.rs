//! Principal component analysis of state-variable snapshots.

mod eigen;
mod model;

pub use eigen::symmetric_eigen;
pub use model::*;
