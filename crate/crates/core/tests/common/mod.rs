//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's ranking, mining, or loss code.
#![allow(dead_code)]

pub mod gradcheck;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toim::eval::LabeledSet;
use toim::{PooledTable, SlotKey, UpdateTable};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Central differences of `f` at `x` with step `h`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, or the absolute norm when both are tiny.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Per-anchor TOIM term written as the original log-ratio.
pub fn toim_term_log_ratio(d_ap: f64, d_an: f64) -> f64 {
    // -log(e^{d_an} / (e^{d_an} + e^{d_ap})), shifted by the larger exponent.
    let m = d_an.max(d_ap);
    let log_den = m + ((d_an - m).exp() + (d_ap - m).exp()).ln();
    -(d_an - log_den)
}

/// OIM value for a free feature vector.
pub fn oim_value(feature: &[f64], rows: &[Vec<f64>], label: usize, temperature: f64) -> f64 {
    let scores: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(feature).map(|(a, b)| a * b).sum::<f64>() / temperature)
        .collect();
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    lse - scores[label]
}

/// Rank (1-based) of each gallery item among the items a query keeps,
/// counting strictly closer items plus equally close items with a lower
/// index. `None` marks excluded items.
fn market_ranks(query: &LabeledSet, q: usize, gallery: &LabeledSet) -> Vec<Option<usize>> {
    let keep = |j: usize| {
        !(gallery.identities[j] == query.identities[q] && gallery.cameras[j] == query.cameras[q])
    };
    let d: Vec<f64> = gallery
        .features
        .iter()
        .map(|g| dist(&query.features[q], g))
        .collect();
    (0..gallery.len())
        .map(|j| {
            keep(j).then(|| {
                1 + (0..gallery.len())
                    .filter(|&i| i != j && keep(i) && (d[i] < d[j] || (d[i] == d[j] && i < j)))
                    .count()
            })
        })
        .collect()
}

pub fn brute_cmc_market(query: &LabeledSet, gallery: &LabeledSet, max_rank: usize) -> Vec<f64> {
    let best: Vec<usize> = (0..query.len())
        .map(|q| {
            market_ranks(query, q, gallery)
                .into_iter()
                .enumerate()
                .filter_map(|(j, r)| r.filter(|_| gallery.identities[j] == query.identities[q]))
                .min()
                .expect("query has a positive")
        })
        .collect();
    (1..=max_rank)
        .map(|k| best.iter().filter(|&&r| r <= k).count() as f64 / query.len() as f64)
        .collect()
}

pub fn brute_mean_ap(query: &LabeledSet, gallery: &LabeledSet) -> f64 {
    let mut total = 0.0;
    for q in 0..query.len() {
        let ranks = market_ranks(query, q, gallery);
        let mut pos: Vec<usize> = ranks
            .iter()
            .enumerate()
            .filter_map(|(j, r)| r.filter(|_| gallery.identities[j] == query.identities[q]))
            .collect();
        // Summing in rank order makes the floating-point result comparable bit for bit.
        pos.sort_unstable();
        let ap = pos
            .iter()
            .map(|&r| pos.iter().filter(|&&s| s <= r).count() as f64 / r as f64)
            .sum::<f64>()
            / pos.len() as f64;
        total += ap;
    }
    total / query.len() as f64
}

/// Exact single-gallery-shot CMC: the average over every way to pick one
/// other-camera instance per gallery identity.
pub fn exhaustive_cmc_cuhk03(
    query: &LabeledSet,
    gallery: &LabeledSet,
    max_rank: usize,
) -> Vec<f64> {
    let mut curve = vec![0.0; max_rank];
    for q in 0..query.len() {
        let mut ids: Vec<usize> = gallery.identities.clone();
        ids.sort_unstable();
        ids.dedup();
        let groups: Vec<Vec<usize>> = ids
            .iter()
            .map(|&id| {
                (0..gallery.len())
                    .filter(|&j| {
                        gallery.identities[j] == id && gallery.cameras[j] != query.cameras[q]
                    })
                    .collect::<Vec<_>>()
            })
            .filter(|g| !g.is_empty())
            .collect();
        let d: Vec<f64> = gallery
            .features
            .iter()
            .map(|g| dist(&query.features[q], g))
            .collect();
        let total: usize = groups.iter().map(Vec::len).product();
        let mut counts = vec![0usize; max_rank];
        for mut code in 0..total {
            let pick: Vec<usize> = groups
                .iter()
                .map(|g| {
                    let j = g[code % g.len()];
                    code /= g.len();
                    j
                })
                .collect();
            let t = *pick
                .iter()
                .find(|&&j| gallery.identities[j] == query.identities[q])
                .unwrap();
            let rank = 1 + pick
                .iter()
                .filter(|&&j| j != t && (d[j] < d[t] || (d[j] == d[t] && j < t)))
                .count();
            if rank <= max_rank {
                counts[rank - 1] += 1;
            }
        }
        let mut acc = 0;
        for (c, n) in curve.iter_mut().zip(counts) {
            acc += n;
            *c += acc as f64 / total as f64;
        }
    }
    curve.iter().map(|c| c / query.len() as f64).collect()
}

/// Random query/gallery pair where every query keeps a positive under the
/// same-identity-same-camera exclusion. Coordinates come from a small grid
/// so distance ties occur.
pub fn random_retrieval_instance(rng: &mut ChaCha8Rng) -> (LabeledSet, LabeledSet) {
    let ids = rng.random_range(2..=5);
    let cams = rng.random_range(2..=3);
    let nq = rng.random_range(1..=10);
    let ng = rng.random_range(2..=20).max(ids);
    let dim = rng.random_range(1..=3);
    let point = |rng: &mut ChaCha8Rng| {
        (0..dim)
            .map(|_| f64::from(rng.random_range(-2i32..=2)))
            .collect::<Vec<_>>()
    };
    let mut gallery = LabeledSet::default();
    for j in 0..ng {
        let id = if j < ids { j } else { rng.random_range(0..ids) };
        gallery.push(point(rng), id, rng.random_range(0..cams));
    }
    let mut query = LabeledSet::default();
    while query.len() < nq {
        let id = rng.random_range(0..ids);
        let cam = rng.random_range(0..cams);
        let has_positive =
            (0..gallery.len()).any(|j| gallery.identities[j] == id && gallery.cameras[j] != cam);
        if has_positive {
            query.push(point(rng), id, cam);
        }
    }
    (query, gallery)
}

/// Table contents for mining scans: `slots[id][cam]` is `Some(feature)`
/// when initialized.
pub type Slots = Vec<Vec<Option<Vec<f64>>>>;

/// Farthest initialized slot of `identity`; lowest camera on ties.
pub fn scan_positive(
    anchor: &[f64],
    identity: usize,
    slots: &Slots,
) -> Option<((usize, usize), f64)> {
    let mut cands: Vec<(usize, f64)> = slots[identity]
        .iter()
        .enumerate()
        .filter_map(|(c, v)| v.as_ref().map(|v| (c, dist(anchor, v))))
        .collect();
    let max = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    cands.retain(|c| c.1 == max);
    cands.first().map(|&(c, d)| ((identity, c), d))
}

/// Nearest initialized slot of another identity; lowest (identity, camera)
/// on ties.
pub fn scan_negative_pt(
    anchor: &[f64],
    identity: usize,
    slots: &Slots,
) -> Option<((usize, usize), f64)> {
    let mut all = Vec::new();
    for (i, row) in slots.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if let (true, Some(v)) = (i != identity, v) {
                all.push(((i, c), dist(anchor, v)));
            }
        }
    }
    let min = all.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    all.into_iter().find(|c| c.1 == min)
}

/// Nearest eligible update-table entry, most recent on ties. `recent` is
/// ordered oldest to newest.
pub fn scan_negative_ut(
    anchor: &[f64],
    identity: usize,
    recent: &[(usize, usize)],
    slots: &Slots,
) -> Option<((usize, usize), f64)> {
    let eligible: Vec<((usize, usize), f64)> = recent
        .iter()
        .filter(|(i, _)| *i != identity)
        .filter_map(|&(i, c)| slots[i][c].as_ref().map(|v| ((i, c), dist(anchor, v))))
        .collect();
    let min = eligible.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    eligible.into_iter().rev().find(|c| c.1 == min)
}

/// Five identities with three instances each spread over three cameras.
pub fn cuhk03_fixture() -> (LabeledSet, LabeledSet) {
    let mut rng = rng(22);
    let mut gallery = LabeledSet::default();
    let mut query = LabeledSet::default();
    for id in 0..5 {
        let center = random_vec(&mut rng, 3, 1.0);
        for cam in 0..3 {
            let f: Vec<f64> = center
                .iter()
                .map(|c| c + rng.random_range(-0.8..0.8))
                .collect();
            gallery.push(f, id, cam);
        }
        let q: Vec<f64> = center
            .iter()
            .map(|c| c + rng.random_range(-0.8..0.8))
            .collect();
        query.push(q, id, id % 3);
    }
    (query, gallery)
}

/// Random table with at most 50 slots. Coordinates sit on a coarse grid so
/// equal distances are common.
pub fn random_table(
    rng: &mut ChaCha8Rng,
) -> (PooledTable, Slots, UpdateTable, Vec<(usize, usize)>) {
    let ids = rng.random_range(2..=10);
    let cams = rng.random_range(1..=(50 / ids).min(5));
    let dim = rng.random_range(1..=3);
    let mut pt = PooledTable::new(ids, cams, dim).unwrap();
    let mut slots: Slots = vec![vec![None; cams]; ids];
    for (i, row) in slots.iter_mut().enumerate() {
        for (c, slot) in row.iter_mut().enumerate() {
            if rng.random_bool(0.7) {
                let v: Vec<f64> = (0..dim)
                    .map(|_| f64::from(rng.random_range(-2i32..=2)))
                    .collect();
                pt.set(SlotKey::new(i, c), &v).unwrap();
                *slot = Some(v);
            }
        }
    }
    let cap = rng.random_range(1..=20);
    let mut ut = UpdateTable::new(cap).unwrap();
    // Mirror of the update table: move-to-newest, evict oldest.
    let mut recent: Vec<(usize, usize)> = Vec::new();
    for _ in 0..rng.random_range(0..30) {
        let k = (rng.random_range(0..ids), rng.random_range(0..cams));
        ut.push(SlotKey::new(k.0, k.1));
        recent.retain(|&r| r != k);
        recent.push(k);
        if recent.len() > cap {
            recent.remove(0);
        }
    }
    (pt, slots, ut, recent)
}
