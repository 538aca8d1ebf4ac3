//! Ranking evaluation for query/gallery retrieval.
//!
//! Two CMC protocols are provided. [`cmc_cuhk03`] repeatedly samples one
//! cross-camera gallery instance per identity and averages the resulting
//! single-shot curves. [`cmc_market`] ranks the whole gallery after removing
//! entries that share both identity and camera with the query, so the
//! nearest remaining positive decides the hit. [`mean_ap`] uses the same
//! exclusion rule. Ties in distance are broken by ascending gallery index.

mod pca;
mod ranking;

pub use pca::{pca_project, PcaProjection};
pub use ranking::{cmc_cuhk03, cmc_market, mean_ap};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::distance::check_dims;
use crate::error::{invalid, Error, Result};

/// Feature vectors with aligned identity and camera labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub features: Vec<Vec<f64>>,
    pub identities: Vec<usize>,
    pub cameras: Vec<usize>,
}

impl LabeledSet {
    pub fn new(
        features: Vec<Vec<f64>>,
        identities: Vec<usize>,
        cameras: Vec<usize>,
    ) -> Result<Self> {
        let set = Self {
            features,
            identities,
            cameras,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn push(&mut self, feature: Vec<f64>, identity: usize, camera: usize) {
        self.features.push(feature);
        self.identities.push(identity);
        self.cameras.push(camera);
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Feature length, or 0 for an empty set.
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.features.len(), self.identities.len())?;
        check_dims(self.features.len(), self.cameras.len())?;
        let dim = self.dim();
        for f in &self.features {
            check_dims(dim, f.len())?;
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("labeled set"));
            }
        }
        Ok(())
    }

    /// Same labels, new features (e.g. embeddings of these observations).
    pub fn with_features(&self, features: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(features, self.identities.clone(), self.cameras.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub max_rank: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_rank: 20,
            repetitions: 100,
            seed: 0,
        }
    }
}

/// Both CMC curves (index `k` holds rank `k + 1`) plus mAP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cmc_cuhk03: Vec<f64>,
    pub cmc_market: Vec<f64>,
    pub map: f64,
    pub repetitions: usize,
    pub rank1_cuhk03: f64,
    pub rank1_market: f64,
}

impl EvalReport {
    /// `rank,cuhk03,market` rows.
    pub fn cmc_csv(&self) -> String {
        let mut out = String::from("rank,cuhk03,market\n");
        for (k, (a, b)) in self.cmc_cuhk03.iter().zip(&self.cmc_market).enumerate() {
            let _ = writeln!(out, "{},{a},{b}", k + 1);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Runs both CMC protocols and mAP on embedded query/gallery sets.
pub fn evaluate(query: &LabeledSet, gallery: &LabeledSet, cfg: &EvalConfig) -> Result<EvalReport> {
    if cfg.max_rank == 0 {
        return Err(invalid("max_rank", "must be at least 1"));
    }
    let cmc_c = cmc_cuhk03(query, gallery, cfg.max_rank, cfg.repetitions, cfg.seed)?;
    let cmc_m = cmc_market(query, gallery, cfg.max_rank)?;
    let map = mean_ap(query, gallery)?;
    Ok(EvalReport {
        rank1_cuhk03: cmc_c[0],
        rank1_market: cmc_m[0],
        cmc_cuhk03: cmc_c,
        cmc_market: cmc_m,
        map,
        repetitions: cfg.repetitions,
    })
}
