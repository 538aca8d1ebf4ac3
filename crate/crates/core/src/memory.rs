//! Feature memories: the per-identity, per-camera [`PooledTable`] refreshed
//! by exponential moving average, and the [`UpdateTable`] recency queue of
//! slots written in recent batches.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distance::check_dims;
use crate::error::{invalid, Error, Result};

/// Address of one pooled-table slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotKey {
    pub identity: usize,
    pub camera: usize,
}

impl SlotKey {
    pub fn new(identity: usize, camera: usize) -> Self {
        Self { identity, camera }
    }
}

/// `M x C` grid of `D`-dimensional feature slots.
///
/// Slots start as zero vectors flagged uninitialized. The first write to a
/// slot stores the feature verbatim; later writes blend with
/// `v <- gamma * v + (1 - gamma) * f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledTable {
    identities: usize,
    cameras: usize,
    dim: usize,
    /// Row-major `[identity][camera][dim]`.
    data: Vec<f64>,
    initialized: Vec<bool>,
}

impl PooledTable {
    pub fn new(identities: usize, cameras: usize, dim: usize) -> Result<Self> {
        if identities == 0 {
            return Err(invalid("identities", "must be at least 1"));
        }
        if cameras == 0 {
            return Err(invalid("cameras", "must be at least 1"));
        }
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        let slots = identities * cameras;
        Ok(Self {
            identities,
            cameras,
            dim,
            data: vec![0.0; slots * dim],
            initialized: vec![false; slots],
        })
    }

    pub fn identities(&self) -> usize {
        self.identities
    }

    pub fn cameras(&self) -> usize {
        self.cameras
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slot_count(&self) -> usize {
        self.initialized.len()
    }

    pub fn initialized_count(&self) -> usize {
        self.initialized.iter().filter(|&&b| b).count()
    }

    fn index(&self, key: SlotKey) -> Result<usize> {
        if key.identity >= self.identities || key.camera >= self.cameras {
            return Err(Error::SlotOutOfRange {
                identity: key.identity,
                camera: key.camera,
                identities: self.identities,
                cameras: self.cameras,
            });
        }
        Ok(key.identity * self.cameras + key.camera)
    }

    /// Stored vector and its initialized flag.
    pub fn lookup(&self, key: SlotKey) -> Result<(&[f64], bool)> {
        let i = self.index(key)?;
        Ok((
            &self.data[i * self.dim..(i + 1) * self.dim],
            self.initialized[i],
        ))
    }

    pub fn is_initialized(&self, key: SlotKey) -> Result<bool> {
        Ok(self.initialized[self.index(key)?])
    }

    /// Writes `feature` into the slot at `key` with update rate `gamma`.
    pub fn update(&mut self, key: SlotKey, feature: &[f64], gamma: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(invalid("gamma", format!("{gamma} is outside [0, 1]")));
        }
        check_dims(self.dim, feature.len())?;
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pooled-table feature"));
        }
        let i = self.index(key)?;
        let slot = &mut self.data[i * self.dim..(i + 1) * self.dim];
        if self.initialized[i] {
            let keep = 1.0 - gamma;
            for (v, f) in slot.iter_mut().zip(feature) {
                *v = gamma * *v + keep * f;
            }
        } else {
            slot.copy_from_slice(feature);
            self.initialized[i] = true;
        }
        Ok(())
    }

    /// Overwrites a slot without blending and marks it initialized.
    pub fn set(&mut self, key: SlotKey, feature: &[f64]) -> Result<()> {
        check_dims(self.dim, feature.len())?;
        let i = self.index(key)?;
        self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(feature);
        self.initialized[i] = true;
        Ok(())
    }

    /// Initialized slots of one identity, in camera order.
    pub fn identity_slots(&self, identity: usize) -> impl Iterator<Item = (SlotKey, &[f64])> + '_ {
        (0..self.cameras).filter_map(move |camera| {
            let key = SlotKey::new(identity, camera);
            match self.lookup(key) {
                Ok((v, true)) => Some((key, v)),
                _ => None,
            }
        })
    }

    /// Every initialized slot, ordered by (identity, camera).
    pub fn initialized_slots(&self) -> impl Iterator<Item = (SlotKey, &[f64])> + '_ {
        (0..self.identities).flat_map(move |id| self.identity_slots(id))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let table: Self = serde_json::from_slice(&fs::read(path)?)?;
        table.validate()?;
        Ok(table)
    }

    /// Checks the shape invariants of a deserialized table.
    pub fn validate(&self) -> Result<()> {
        let slots = self.identities * self.cameras;
        if self.identities == 0 || self.cameras == 0 || self.dim == 0 {
            return Err(Error::Parse("pooled table has a zero-sized axis".into()));
        }
        if self.initialized.len() != slots || self.data.len() != slots * self.dim {
            return Err(Error::Parse(format!(
                "pooled table holds {} flags and {} values, expected {slots} and {}",
                self.initialized.len(),
                self.data.len(),
                slots * self.dim
            )));
        }
        Ok(())
    }
}

/// Bounded recency queue of distinct slot keys, newest last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateTable {
    capacity: usize,
    entries: VecDeque<SlotKey>,
}

impl UpdateTable {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("update table length", "must be at least 1"));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity + 1),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends `key` as the newest entry. A key already queued moves to the
    /// newest position; overflow evicts the oldest entry.
    pub fn push(&mut self, key: SlotKey) {
        if let Some(pos) = self.entries.iter().position(|k| *k == key) {
            self.entries.remove(pos);
        }
        self.entries.push_back(key);
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &SlotKey> + ExactSizeIterator {
        self.entries.iter()
    }

    pub fn to_vec(&self) -> Vec<SlotKey> {
        self.entries.iter().copied().collect()
    }
}
