//! Embedding network, optimizer, and the training loop that ties mining,
//! losses, and feature-table updates together.

mod adadelta;
mod checkpoint;
mod mlp;
mod train;

pub use adadelta::AdaDelta;
pub use checkpoint::Checkpoint;
pub use mlp::{ForwardCache, Linear, Mlp};
pub use train::{select_pk_batch, Trainer};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::losses::LossHyper;
use crate::mining::NegativeStrategy;

/// Which objective drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Toim,
    Triplet,
    Oim,
    Softmax,
    /// Softmax identity loss + TOIM + weighted center loss.
    Combined,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        Self::Toim,
        Self::Triplet,
        Self::Oim,
        Self::Softmax,
        Self::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Toim => "toim",
            Self::Triplet => "triplet",
            Self::Oim => "oim",
            Self::Softmax => "softmax",
            Self::Combined => "combined",
        }
    }

    fn uses_head(self) -> bool {
        matches!(self, Self::Softmax | Self::Combined)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid("loss", format!("unknown loss `{s}`")))
    }
}

/// Training hyperparameters. Defaults: update rate 0.4, 15 anchors per
/// batch, update-table length 20, 512-dimensional features, 13 epochs,
/// AdaDelta with learning rate 0.001.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub anchors_per_batch: usize,
    pub update_table_len: usize,
    pub dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub negative_strategy: NegativeStrategy,
    pub normalize_embeddings: bool,
    pub seed: u64,
    pub margin: f64,
    pub temperature: f64,
    pub beta: f64,
    /// Identities per batch-hard triplet batch.
    pub triplet_p: usize,
    /// Samples per identity in a batch-hard triplet batch.
    pub triplet_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let hyper = LossHyper::default();
        Self {
            gamma: hyper.gamma,
            anchors_per_batch: 15,
            update_table_len: 20,
            dim: 512,
            hidden_dim: 128,
            epochs: 13,
            lr: 0.001,
            negative_strategy: NegativeStrategy::UpdateTable,
            normalize_embeddings: false,
            seed: 0,
            margin: hyper.margin,
            temperature: hyper.temperature,
            beta: hyper.beta,
            triplet_p: 5,
            triplet_k: 3,
        }
    }
}

impl TrainConfig {
    pub fn hyper(&self) -> LossHyper {
        LossHyper {
            margin: self.margin,
            temperature: self.temperature,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper().validate()?;
        for (name, v) in [
            ("anchors_per_batch", self.anchors_per_batch),
            ("update_table_len", self.update_table_len),
            ("dim", self.dim),
            ("hidden_dim", self.hidden_dim),
            ("triplet_p", self.triplet_p),
            ("triplet_k", self.triplet_k),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if self.triplet_p < 2 {
            return Err(invalid(
                "triplet_p",
                "batch-hard triplet needs at least 2 identities",
            ));
        }
        if self.triplet_k < 2 {
            return Err(invalid(
                "triplet_k",
                "batch-hard triplet needs at least 2 samples per identity",
            ));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(invalid(
                "lr",
                format!("{} must be a positive finite number", self.lr),
            ));
        }
        Ok(())
    }
}
