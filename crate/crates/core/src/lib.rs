//! Metric learning with the Triplet Online Instance Matching (TOIM) loss.
//!
//! The crate pairs a live embedding network with two feature memories: a
//! [`memory::PooledTable`] holding one exponentially averaged feature per
//! (identity, camera) slot, and a [`memory::UpdateTable`] naming the slots
//! written most recently. Each training batch takes `N` anchors of distinct
//! identities, mines the farthest same-identity slot and the nearest
//! different-identity slot from those memories, and minimizes
//! `sum softplus(d(a, p) - d(a, n))`.
//!
//! Softmax cross-entropy, OIM, batch-hard triplet, and center losses are
//! included as baselines, together with a synthetic multi-camera data
//! generator and the usual re-identification metrics (two CMC protocols and
//! mAP).

pub mod distance;
pub mod error;
pub mod losses;
pub mod memory;
pub mod mining;

pub use distance::{
    euclidean_distance, pairwise_distances, stable_softplus, DistanceMatrix, Embedding,
};
pub use error::{Error, Result};
pub use memory::{PooledTable, SlotKey, UpdateTable};
pub mod eval;
pub mod experiment;
pub mod model;
pub mod synthdata;
