//! Build-order prediction for a real-time strategy game: a catalog of
//! builds, per-game event logs, a forward model that turns logs into
//! state/action pairs, a fixed-length state encoding, a small feed-forward
//! network trained by imitation, and decision policies on top of it.
//!
//! Only `alloc` is required. File IO, the command line and the network
//! service live in the `buildnet` crate.

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod catalog;
pub mod encoder;
pub mod error;
pub mod event_log;
pub mod forward_model;
pub mod nn;
pub mod norms;
pub mod policy;
pub mod sim;
pub mod synth;
pub mod training;

pub use catalog::{BuildCatalog, BuildId, BuildKind, EnemyTypeId};
pub use encoder::{encode, EncoderContext, FeatureGroupMask, StateVector, STATE_DIM};
pub use event_log::{EventKind, EventLog, GameEvent};
pub use forward_model::{extract_pairs, MacroState, StateActionPair};
pub use nn::{Model, Network, NetworkTopology};
pub use norms::NormalizationTable;
pub use policy::{DecisionPolicy, ExclusionSet, SelectionMode};
