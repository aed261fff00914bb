//! Sequence datasets: records, normalization, length handling, batching and
//! the binary record format.

mod batch;
pub mod io;
mod norm;
mod record;

pub use batch::*;
pub use norm::*;
pub use record::*;
