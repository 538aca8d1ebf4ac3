use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distance::{check_dims, distance_unchecked};
use crate::error::{invalid, Error, Result};

use super::LabeledSet;

fn check_pair(query: &LabeledSet, gallery: &LabeledSet) -> Result<()> {
    query.validate()?;
    gallery.validate()?;
    if query.is_empty() {
        return Err(Error::Empty("query set"));
    }
    if gallery.is_empty() {
        return Err(Error::Empty("gallery set"));
    }
    check_dims(query.dim(), gallery.dim())
}

fn distances_to(query: &[f64], gallery: &LabeledSet) -> Vec<f64> {
    gallery
        .features
        .iter()
        .map(|g| distance_unchecked(query, g))
        .collect()
}

/// Gallery indices that survive the same-identity-same-camera exclusion,
/// sorted by distance then index.
fn ranked_gallery(query: &LabeledSet, q: usize, gallery: &LabeledSet) -> Vec<(usize, f64)> {
    let (qid, qcam) = (query.identities[q], query.cameras[q]);
    let dist = distances_to(&query.features[q], gallery);
    let mut ranked: Vec<(usize, f64)> = dist
        .into_iter()
        .enumerate()
        .filter(|&(j, _)| !(gallery.identities[j] == qid && gallery.cameras[j] == qcam))
        .collect();
    // Stable sort keeps ascending index order among equal distances.
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    ranked
}

fn cmc_from_ranks(first_hits: &[usize], max_rank: usize) -> Vec<f64> {
    let n = first_hits.len() as f64;
    (1..=max_rank)
        .map(|k| first_hits.iter().filter(|&&r| r <= k).count() as f64 / n)
        .collect()
}

/// Market-1501-style CMC. Entry `k - 1` is the fraction of queries whose
/// nearest remaining positive sits at rank `<= k`.
pub fn cmc_market(query: &LabeledSet, gallery: &LabeledSet, max_rank: usize) -> Result<Vec<f64>> {
    if max_rank == 0 {
        return Err(invalid("max_rank", "must be at least 1"));
    }
    check_pair(query, gallery)?;
    let mut first_hits = Vec::with_capacity(query.len());
    for q in 0..query.len() {
        let ranked = ranked_gallery(query, q, gallery);
        let hit = ranked
            .iter()
            .position(|&(j, _)| gallery.identities[j] == query.identities[q])
            .ok_or(Error::NoQueryPositive { query: q })?;
        first_hits.push(hit + 1);
    }
    Ok(cmc_from_ranks(&first_hits, max_rank))
}

/// Mean over queries of average precision, with the Market exclusion rule.
pub fn mean_ap(query: &LabeledSet, gallery: &LabeledSet) -> Result<f64> {
    check_pair(query, gallery)?;
    let mut total = 0.0;
    for q in 0..query.len() {
        let qid = query.identities[q];
        let ranked = ranked_gallery(query, q, gallery);
        let mut hits = 0usize;
        let mut precision_sum = 0.0;
        for (pos, &(j, _)) in ranked.iter().enumerate() {
            if gallery.identities[j] == qid {
                hits += 1;
                precision_sum += hits as f64 / (pos + 1) as f64;
            }
        }
        if hits == 0 {
            return Err(Error::NoQueryPositive { query: q });
        }
        total += precision_sum / hits as f64;
    }
    Ok(total / query.len() as f64)
}

/// CUHK03-style single-gallery-shot CMC averaged over `repetitions` draws.
///
/// For each query only gallery entries from other cameras are eligible. Each
/// repetition draws one eligible instance per gallery identity and records
/// the rank of the query's identity among the drawn instances.
pub fn cmc_cuhk03(
    query: &LabeledSet,
    gallery: &LabeledSet,
    max_rank: usize,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if max_rank == 0 {
        return Err(invalid("max_rank", "must be at least 1"));
    }
    if repetitions == 0 {
        return Err(invalid("repetitions", "must be at least 1"));
    }
    check_pair(query, gallery)?;

    struct Prepared {
        distances: Vec<f64>,
        groups: Vec<Vec<usize>>,
        target: usize,
    }
    let mut prepared = Vec::with_capacity(query.len());
    for q in 0..query.len() {
        let (qid, qcam) = (query.identities[q], query.cameras[q]);
        let mut by_identity: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for j in 0..gallery.len() {
            if gallery.cameras[j] != qcam {
                by_identity
                    .entry(gallery.identities[j])
                    .or_default()
                    .push(j);
            }
        }
        let target =
            by_identity
                .keys()
                .position(|&id| id == qid)
                .ok_or(Error::QueryIdentityMissing {
                    query: q,
                    identity: qid,
                })?;
        prepared.push(Prepared {
            distances: distances_to(&query.features[q], gallery),
            groups: by_identity.into_values().collect(),
            target,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; max_rank];
    let mut drawn = Vec::new();
    for _ in 0..repetitions {
        for p in &prepared {
            drawn.clear();
            drawn.extend(
                p.groups
                    .iter()
                    .map(|g| *g.choose(&mut rng).expect("non-empty group")),
            );
            let t = drawn[p.target];
            let dt = p.distances[t];
            let rank = 1 + drawn
                .iter()
                .filter(|&&j| j != t && (p.distances[j] < dt || (p.distances[j] == dt && j < t)))
                .count();
            if rank <= max_rank {
                counts[rank - 1] += 1;
            }
        }
    }
    let total = (repetitions * query.len()) as f64;
    let mut acc = 0usize;
    Ok(counts
        .into_iter()
        .map(|c| {
            acc += c;
            acc as f64 / total
        })
        .collect())
}
