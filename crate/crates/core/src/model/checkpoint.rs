use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::memory::{PooledTable, UpdateTable};

use super::{AdaDelta, Linear, LossKind, Mlp, TrainConfig};

/// Complete training state, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub loss: LossKind,
    pub epochs_completed: usize,
    pub net: Mlp,
    pub net_optimizer: AdaDelta,
    pub head: Option<Linear>,
    pub head_optimizer: Option<AdaDelta>,
    pub pooled_table: PooledTable,
    pub update_table: UpdateTable,
    pub lut: Option<PooledTable>,
    pub centers: Option<PooledTable>,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt: Self = serde_json::from_slice(&fs::read(path)?)?;
        ckpt.pooled_table.validate()?;
        Ok(ckpt)
    }
}
