//! Dense feed-forward classifier trained from scratch.
//!
//! Hidden layers use ReLU (derivative 0 at 0), the output layer softmax.
//! All arithmetic is `f64`.

mod adam;
mod model;
mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use model::{Model, ModelMeta};
pub use network::{cross_entropy, softmax_in_place, Gradients, Layer, Network, NetworkTopology, Workspace, PROB_FLOOR};
