//! Feed-forward layers, the GRU cell and the recurrent regressor built from
//! them, with backpropagation through time and an adaptive-moment optimizer.

mod dense;
mod gru;
mod model;
mod optim;

pub use dense::{leaky_relu, Activation, Dense, FeedForwardNet, LEAKY_SLOPE};
pub use gru::{gru_step, sigmoid, GruCell, GATE_C, GATE_R, GATE_U};
pub use model::*;
pub use optim::*;
