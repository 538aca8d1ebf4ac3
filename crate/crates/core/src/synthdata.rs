//! Deterministic synthetic multi-camera identity data.
//!
//! Each identity has a prototype in a latent space; each camera adds a fixed
//! latent offset; each sample adds isotropic noise. A fixed random linear map
//! lifts latent points to observation space:
//!
//! ```text
//! x = A (prototype_id + bias_cam + noise)
//! ```
//!
//! Training identities and evaluation identities are drawn from disjoint
//! pools that share the same cameras and the same map `A`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::eval::LabeledSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Training identities.
    pub num_identities: usize,
    /// Evaluation identities, disjoint from the training pool.
    pub num_eval_identities: usize,
    pub num_cameras: usize,
    pub samples_per_id_per_cam: usize,
    pub latent_dim: usize,
    pub observation_dim: usize,
    pub camera_bias_scale: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_identities: 50,
            num_eval_identities: 50,
            num_cameras: 5,
            samples_per_id_per_cam: 20,
            latent_dim: 16,
            observation_dim: 32,
            camera_bias_scale: 1.0,
            noise_scale: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_identities", self.num_identities),
            ("num_eval_identities", self.num_eval_identities),
            ("num_cameras", self.num_cameras),
            ("samples_per_id_per_cam", self.samples_per_id_per_cam),
            ("latent_dim", self.latent_dim),
            ("observation_dim", self.observation_dim),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if self.observation_dim < self.latent_dim {
            return Err(invalid(
                "observation_dim",
                format!(
                    "{} is smaller than latent_dim {}",
                    self.observation_dim, self.latent_dim
                ),
            ));
        }
        for (name, v) in [
            ("camera_bias_scale", self.camera_bias_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(name, format!("{v} must be a finite value >= 0")));
            }
        }
        Ok(())
    }
}

/// Train / query / gallery partitions of observation vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: LabeledSet,
    pub query: LabeledSet,
    pub gallery: LabeledSet,
}

impl SynthDataset {
    pub fn observation_dim(&self) -> usize {
        [&self.train, &self.query, &self.gallery]
            .iter()
            .find(|s| !s.is_empty())
            .map_or(0, |s| s.dim())
    }

    /// Training identities are `0..num_train_identities()`.
    pub fn num_train_identities(&self) -> usize {
        self.train.identities.iter().max().map_or(0, |m| m + 1)
    }

    pub fn num_cameras(&self) -> usize {
        [&self.train, &self.query, &self.gallery]
            .iter()
            .flat_map(|s| s.cameras.iter())
            .max()
            .map_or(0, |m| m + 1)
    }

    /// Writes one row per sample: `id,cam,split,f0,f1,...`.
    pub fn to_csv(&self) -> String {
        let dim = self.observation_dim();
        let mut out = String::from("id,cam,split");
        for k in 0..dim {
            let _ = write!(out, ",f{k}");
        }
        out.push('\n');
        for (name, set) in [
            ("train", &self.train),
            ("query", &self.query),
            ("gallery", &self.gallery),
        ] {
            write_rows(&mut out, name, set);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dataset file".into()))?;
        let columns: Vec<&str> = header.split(',').collect();
        if columns.len() < 4 || columns[..3] != ["id", "cam", "split"] {
            return Err(Error::Parse(format!("unexpected header `{header}`")));
        }
        let dim = columns.len() - 3;
        let mut sets: BTreeMap<&str, LabeledSet> = BTreeMap::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 3 {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    n + 2,
                    fields.len(),
                    dim + 3
                )));
            }
            let parse_usize = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", n + 2)))
            };
            let id = parse_usize(fields[0])?;
            let cam = parse_usize(fields[1])?;
            let split = match fields[2].trim() {
                s @ ("train" | "query" | "gallery") => s,
                other => {
                    return Err(Error::Parse(format!(
                        "row {}: unknown split `{other}`",
                        n + 2
                    )))
                }
            };
            let features = fields[3..]
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {}: {e}", n + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            let set = sets.entry(split).or_default();
            set.features.push(features);
            set.identities.push(id);
            set.cameras.push(cam);
        }
        let mut take = |name| sets.remove(name).unwrap_or_default();
        Ok(Self {
            train: take("train"),
            query: take("query"),
            gallery: take("gallery"),
        })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

fn write_rows(out: &mut String, split: &str, set: &LabeledSet) {
    for ((f, id), cam) in set.features.iter().zip(&set.identities).zip(&set.cameras) {
        let _ = write!(out, "{id},{cam},{split}");
        for v in f {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// Generates the full dataset. Evaluation identities are labeled
/// `num_identities..num_identities + num_eval_identities`.
pub fn gen_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (latent, obs) = (cfg.latent_dim, cfg.observation_dim);
    let map = normal_vec(&mut rng, obs * latent, 1.0 / (latent as f64).sqrt());
    let biases: Vec<Vec<f64>> = (0..cfg.num_cameras)
        .map(|_| normal_vec(&mut rng, latent, cfg.camera_bias_scale))
        .collect();
    let total_ids = cfg.num_identities + cfg.num_eval_identities;
    let prototypes: Vec<Vec<f64>> = (0..total_ids)
        .map(|_| normal_vec(&mut rng, latent, 1.0))
        .collect();

    let mut train = LabeledSet::default();
    let mut eval = LabeledSet::default();
    let mut z = vec![0.0; latent];
    for (id, proto) in prototypes.iter().enumerate() {
        let target = if id < cfg.num_identities {
            &mut train
        } else {
            &mut eval
        };
        for (cam, bias) in biases.iter().enumerate() {
            for _ in 0..cfg.samples_per_id_per_cam {
                let noise = normal_vec(&mut rng, latent, cfg.noise_scale);
                for k in 0..latent {
                    z[k] = proto[k] + bias[k] + noise[k];
                }
                let x: Vec<f64> = map
                    .chunks_exact(latent)
                    .map(|row| crate::distance::dot(row, &z))
                    .collect();
                target.features.push(x);
                target.identities.push(id);
                target.cameras.push(cam);
            }
        }
    }
    let (query, gallery) = split_query_gallery(&eval, cfg.seed.wrapping_add(1))?;
    Ok(SynthDataset {
        train,
        query,
        gallery,
    })
}

/// Takes one sample per identity as the query and leaves the rest as
/// gallery. Every identity must appear under at least two cameras, so each
/// query keeps a cross-camera positive in the gallery.
pub fn split_query_gallery(samples: &LabeledSet, seed: u64) -> Result<(LabeledSet, LabeledSet)> {
    samples.validate()?;
    let mut by_identity: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &id) in samples.identities.iter().enumerate() {
        by_identity.entry(id).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_query = vec![false; samples.len()];
    for (&id, members) in &by_identity {
        let first_cam = samples.cameras[members[0]];
        if members.iter().all(|&i| samples.cameras[i] == first_cam) {
            return Err(Error::SingleCamera(id));
        }
        let &pick = members.choose(&mut rng).expect("non-empty group");
        is_query[pick] = true;
    }
    let mut query = LabeledSet::default();
    let mut gallery = LabeledSet::default();
    for (i, q) in is_query.into_iter().enumerate() {
        let target = if q { &mut query } else { &mut gallery };
        target.push(
            samples.features[i].clone(),
            samples.identities[i],
            samples.cameras[i],
        );
    }
    Ok((query, gallery))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_identities_collapse() {
        let cfg = SynthConfig {
            num_identities: 3,
            num_eval_identities: 2,
            num_cameras: 3,
            samples_per_id_per_cam: 2,
            noise_scale: 0.0,
            camera_bias_scale: 0.0,
            ..SynthConfig::default()
        };
        let data = gen_dataset(&cfg).unwrap();
        for id in 0..3 {
            let rows: Vec<&Vec<f64>> = data
                .train
                .features
                .iter()
                .zip(&data.train.identities)
                .filter(|(_, &i)| i == id)
                .map(|(f, _)| f)
                .collect();
            assert!(rows.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn seeded_generation_repeats() {
        let cfg = SynthConfig {
            seed: 11,
            ..SynthConfig::default()
        };
        assert_eq!(gen_dataset(&cfg).unwrap(), gen_dataset(&cfg).unwrap());
    }

    #[test]
    fn observation_dim_must_cover_latent() {
        let cfg = SynthConfig {
            latent_dim: 8,
            observation_dim: 4,
            ..SynthConfig::default()
        };
        assert!(gen_dataset(&cfg).is_err());
    }

    #[test]
    fn forced_split() {
        let mut set = LabeledSet::default();
        for id in 0..2 {
            for cam in 0..2 {
                set.push(vec![id as f64, cam as f64], id, cam);
            }
        }
        let (q, g) = split_query_gallery(&set, 0).unwrap();
        assert_eq!((q.len(), g.len()), (2, 2));
    }

    #[test]
    fn single_camera_identity_rejected() {
        let mut set = LabeledSet::default();
        set.push(vec![0.0], 0, 0);
        set.push(vec![1.0], 0, 1);
        set.push(vec![2.0], 7, 1);
        set.push(vec![3.0], 7, 1);
        assert!(matches!(
            split_query_gallery(&set, 0),
            Err(Error::SingleCamera(7))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let cfg = SynthConfig {
            num_identities: 4,
            num_eval_identities: 3,
            num_cameras: 2,
            samples_per_id_per_cam: 2,
            latent_dim: 3,
            observation_dim: 5,
            ..SynthConfig::default()
        };
        let data = gen_dataset(&cfg).unwrap();
        assert_eq!(SynthDataset::from_csv(&data.to_csv()).unwrap(), data);
    }
}
