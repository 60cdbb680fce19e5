//! Simulation and analysis library for auxiliary-node-assisted pairwise key
//! establishment in mobile heterogeneous sensor networks.
//!
//! A small fraction of deployed nodes ("auxiliaries") are trusted with a
//! special key that lets them derive any regular node's master key on the
//! fly and act as local key-distribution centers. Two adjacent regular nodes
//! run a four-message handshake through such an auxiliary; a regular node
//! adjacent to an auxiliary gets a key in two messages. No regular node
//! carries more than its own master key before deployment, and auxiliaries
//! keep no per-node material between handshakes.
//!
//! The crate is split along those lines:
//!
//! * [`crypto`] — the symmetric toolkit (PRF, MAC, cipher, key masking) and
//!   deterministic RNG streams;
//! * [`protocol`] — node state machines and the wire codec for both
//!   establishment cases;
//! * [`netsim`] — field geometry, deployment, adjacency, auxiliary
//!   discovery, and the mobility model;
//! * [`engine`] — the per-trial simulation driver tying the above together;
//! * [`analysis`] — closed-form connectivity formulas, empirical estimators,
//!   capture/resilience accounting, and figure sweeps.

pub mod analysis;
pub mod crypto;
pub mod engine;
pub mod netsim;
pub mod protocol;

pub use crypto::{KeyMaterial, NodeId};
pub use engine::{RoundReport, SimConfig, Simulation};
pub use netsim::{AuxPlacement, Boundary};
