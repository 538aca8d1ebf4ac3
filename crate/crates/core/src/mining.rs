//! Hard-sample mining against the feature memories.
//!
//! A TOIM batch is built from `N` anchors of distinct identities. Each
//! anchor is paired with the farthest same-identity slot in the pooled
//! table and the nearest different-identity slot, searched either among the
//! slots named by the update table or across the whole pooled table.
//!
//! Ties are broken deterministically:
//! * positive: lowest camera index;
//! * update-table negative: most recently pushed entry;
//! * pooled-table negative: lowest `(identity, camera)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::debug;
use rand::seq::{index, IndexedRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::{check_dims, distance_unchecked, Embedding};
use crate::error::{invalid, Error, Result};
use crate::losses::TripletRecord;
use crate::memory::{PooledTable, SlotKey, UpdateTable};

/// Where hard negatives are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NegativeStrategy {
    UpdateTable,
    PooledTable,
}

impl fmt::Display for NegativeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UpdateTable => "ut",
            Self::PooledTable => "pt",
        })
    }
}

impl FromStr for NegativeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ut" | "updatetable" | "update-table" => Ok(Self::UpdateTable),
            "pt" | "pooledtable" | "pooled-table" => Ok(Self::PooledTable),
            other => Err(invalid(
                "negative strategy",
                format!("unknown value `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub anchors_per_batch: usize,
    pub negative_strategy: NegativeStrategy,
    pub rng_seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            anchors_per_batch: 15,
            negative_strategy: NegativeStrategy::UpdateTable,
            rng_seed: 0,
        }
    }
}

/// A chosen table slot and its distance to the anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pick {
    pub key: SlotKey,
    pub distance: f64,
}

/// Picks `n` sample indices with pairwise-distinct identities: identities
/// uniformly without replacement, then one sample uniformly within each.
pub fn select_anchors(keys: &[SlotKey], n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(invalid("anchors per batch", "must be at least 1"));
    }
    let mut by_identity: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        by_identity.entry(k.identity).or_default().push(i);
    }
    if by_identity.len() < n {
        return Err(Error::NotEnoughIdentities {
            needed: n,
            available: by_identity.len(),
        });
    }
    let groups: Vec<&Vec<usize>> = by_identity.values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = index::sample(&mut rng, groups.len(), n);
    Ok(chosen
        .iter()
        .map(|g| {
            *groups[g]
                .choose(&mut rng)
                .expect("identity groups are non-empty")
        })
        .collect())
}

/// Farthest initialized slot of `identity`.
pub fn select_positive(anchor: &[f64], identity: usize, pt: &PooledTable) -> Result<Pick> {
    check_dims(pt.dim(), anchor.len())?;
    let mut best: Option<Pick> = None;
    for (key, v) in pt.identity_slots(identity) {
        let d = distance_unchecked(anchor, v);
        if best.is_none_or(|b| d > b.distance) {
            best = Some(Pick { key, distance: d });
        }
    }
    best.ok_or(Error::NoPositive(identity))
}

/// Nearest different-identity slot across the whole pooled table.
pub fn select_negative_pt(anchor: &[f64], identity: usize, pt: &PooledTable) -> Result<Pick> {
    check_dims(pt.dim(), anchor.len())?;
    let mut best: Option<Pick> = None;
    for (key, v) in pt.initialized_slots() {
        if key.identity == identity {
            continue;
        }
        let d = distance_unchecked(anchor, v);
        if best.is_none_or(|b| d < b.distance) {
            best = Some(Pick { key, distance: d });
        }
    }
    best.ok_or(Error::NoNegative(identity))
}

/// Outcome of an update-table negative search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativePick {
    pub pick: Pick,
    /// True when the update table had no eligible entry and the pooled
    /// table was searched instead.
    pub fell_back: bool,
}

/// Nearest different-identity slot among those named by the update table.
/// Falls back to [`select_negative_pt`] when no entry is eligible.
pub fn select_negative_ut(
    anchor: &[f64],
    identity: usize,
    ut: &UpdateTable,
    pt: &PooledTable,
) -> Result<NegativePick> {
    check_dims(pt.dim(), anchor.len())?;
    let mut best: Option<Pick> = None;
    for &key in ut.iter().rev() {
        if key.identity == identity {
            continue;
        }
        let (v, initialized) = pt.lookup(key)?;
        if !initialized {
            continue;
        }
        let d = distance_unchecked(anchor, v);
        if best.is_none_or(|b| d < b.distance) {
            best = Some(Pick { key, distance: d });
        }
    }
    match best {
        Some(pick) => Ok(NegativePick {
            pick,
            fell_back: false,
        }),
        None => {
            debug!("update table has no negative for identity {identity}; searching pooled table");
            Ok(NegativePick {
                pick: select_negative_pt(anchor, identity, pt)?,
                fell_back: true,
            })
        }
    }
}

/// Triplets mined for a set of anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct MinedBatch {
    pub records: Vec<TripletRecord>,
    /// `anchors[i]` is the index (into the mining input) of `records[i]`'s anchor.
    pub anchors: Vec<usize>,
    /// Anchors whose negative came from the pooled-table fallback.
    pub fallbacks: usize,
    /// Anchors dropped for lack of a positive or negative.
    pub skipped: usize,
}

/// Mines one triplet per anchor. Anchors without an initialized positive or
/// any eligible negative are skipped; an empty result is an error.
pub fn build_triplets(
    anchors: &[(Embedding, SlotKey)],
    pt: &PooledTable,
    ut: &UpdateTable,
    strategy: NegativeStrategy,
) -> Result<MinedBatch> {
    let mut batch = MinedBatch {
        records: Vec::with_capacity(anchors.len()),
        anchors: Vec::with_capacity(anchors.len()),
        fallbacks: 0,
        skipped: 0,
    };
    for (i, (feature, key)) in anchors.iter().enumerate() {
        let positive = match select_positive(feature, key.identity, pt) {
            Ok(p) => p,
            Err(Error::NoPositive(_)) => {
                batch.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let negative = match strategy {
            NegativeStrategy::UpdateTable => select_negative_ut(feature, key.identity, ut, pt),
            NegativeStrategy::PooledTable => {
                select_negative_pt(feature, key.identity, pt).map(|pick| NegativePick {
                    pick,
                    fell_back: false,
                })
            }
        };
        let negative = match negative {
            Ok(n) => n,
            Err(Error::NoNegative(_)) => {
                batch.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        batch.fallbacks += usize::from(negative.fell_back);
        let record = TripletRecord {
            anchor: feature.clone(),
            positive: Embedding::new(pt.lookup(positive.key)?.0.to_vec())?,
            negative: Embedding::new(pt.lookup(negative.pick.key)?.0.to_vec())?,
            anchor_key: *key,
            positive_key: positive.key,
            negative_key: negative.pick.key,
        };
        record.validate()?;
        batch.records.push(record);
        batch.anchors.push(i);
    }
    if batch.records.is_empty() {
        return Err(Error::NoTriplets);
    }
    Ok(batch)
}

/// Anchor selection followed by triplet mining.
pub fn build_batch(
    samples: &[(Embedding, SlotKey)],
    pt: &PooledTable,
    ut: &UpdateTable,
    cfg: &MiningConfig,
) -> Result<MinedBatch> {
    let keys: Vec<SlotKey> = samples.iter().map(|(_, k)| *k).collect();
    let chosen = select_anchors(&keys, cfg.anchors_per_batch, cfg.rng_seed)?;
    let anchors: Vec<(Embedding, SlotKey)> = chosen.iter().map(|&i| samples[i].clone()).collect();
    let mut batch = build_triplets(&anchors, pt, ut, cfg.negative_strategy)?;
    for a in &mut batch.anchors {
        *a = chosen[*a];
    }
    Ok(batch)
}
