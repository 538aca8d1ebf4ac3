//! Finite-difference gradient checks. Each check returns the largest
//! relative error seen over its configurations.

use super::{dist, numeric_gradient, oim_value, random_vec, relative_error, rng};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use toim::losses::{
    center_loss, oim_loss, softmax_ce_loss, toim_loss, triplet_loss_batchhard, TripletRecord,
};
use toim::model::{Linear, Mlp};
use toim::{Embedding, PooledTable, SlotKey};

pub const H: f64 = 1e-5;

fn emb(v: Vec<f64>) -> Embedding {
    Embedding::new(v).unwrap()
}

fn random_records(rng: &mut ChaCha8Rng) -> Vec<TripletRecord> {
    let dim = rng.random_range(2..=8);
    let count = rng.random_range(1..=4);
    let mut out = Vec::new();
    while out.len() < count {
        let a = random_vec(rng, dim, 2.0);
        let p = random_vec(rng, dim, 2.0);
        let n = random_vec(rng, dim, 2.0);
        if dist(&a, &p) < 0.1 || dist(&a, &n) < 0.1 {
            continue;
        }
        out.push(TripletRecord {
            anchor: emb(a),
            positive: emb(p),
            negative: emb(n),
            anchor_key: SlotKey::new(0, 0),
            positive_key: SlotKey::new(0, 1),
            negative_key: SlotKey::new(1, 0),
        });
    }
    out
}

fn with_anchors(records: &[TripletRecord], flat: &[f64]) -> Vec<TripletRecord> {
    let dim = records[0].anchor.dim();
    records
        .iter()
        .zip(flat.chunks_exact(dim))
        .map(|(r, a)| TripletRecord {
            anchor: emb(a.to_vec()),
            ..r.clone()
        })
        .collect()
}

pub fn toim_anchor(seed: u64, configs: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let records = random_records(&mut rng);
        let flat: Vec<f64> = records.iter().flat_map(|r| r.anchor.to_vec()).collect();
        let analytic: Vec<f64> = toim_loss(&records).unwrap().gradients.concat();
        let numeric = numeric_gradient(&flat, H, |x| {
            toim_loss(&with_anchors(&records, x)).unwrap().value
        });
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// A batch whose hardest pairs and hinge signs are stable under a step of
/// `H`: every identity has two or more samples, all distances are at least
/// 0.1, and every argmax/argmin and hinge has a clear gap.
fn stable_triplet_batch(rng: &mut ChaCha8Rng, margin: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    loop {
        let dim = rng.random_range(2..=5);
        let ids = rng.random_range(2..=3);
        let per = rng.random_range(2..=3);
        let labels: Vec<usize> = (0..ids).flat_map(|i| std::iter::repeat_n(i, per)).collect();
        let feats: Vec<Vec<f64>> = labels.iter().map(|_| random_vec(rng, dim, 1.0)).collect();
        let n = feats.len();
        let d = |i: usize, j: usize| dist(&feats[i], &feats[j]);
        let mut ok = true;
        for i in 0..n {
            let mut pos: Vec<f64> = (0..n)
                .filter(|&j| j != i && labels[j] == labels[i])
                .map(|j| d(i, j))
                .collect();
            let mut neg: Vec<f64> = (0..n)
                .filter(|&j| labels[j] != labels[i])
                .map(|j| d(i, j))
                .collect();
            if pos.iter().chain(&neg).any(|&x| x < 0.1) {
                ok = false;
                break;
            }
            pos.sort_by(|a, b| b.total_cmp(a));
            neg.sort_by(f64::total_cmp);
            let gap_p = pos.get(1).map_or(1.0, |s| pos[0] - s);
            let gap_n = neg.get(1).map_or(1.0, |s| s - neg[0]);
            let hinge = margin + pos[0] - neg[0];
            if gap_p < 1e-3 || gap_n < 1e-3 || hinge.abs() < 1e-3 {
                ok = false;
                break;
            }
        }
        if ok {
            return (feats, labels);
        }
    }
}

/// Also returns how many configurations had a positive loss.
pub fn triplet_batch_hard(seed: u64, configs: usize) -> (f64, usize) {
    let mut rng = rng(seed);
    let mut active = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let margin = rng.random_range(0.1..1.5);
        let (feats, labels) = stable_triplet_batch(&mut rng, margin);
        let dim = feats[0].len();
        let embs: Vec<Embedding> = feats.iter().cloned().map(emb).collect();
        let out = triplet_loss_batchhard(&embs, &labels, margin).unwrap();
        active += usize::from(out.value > 0.0);
        let flat = feats.concat();
        let numeric = numeric_gradient(&flat, H, |x| {
            let e: Vec<Embedding> = x.chunks_exact(dim).map(|c| emb(c.to_vec())).collect();
            triplet_loss_batchhard(&e, &labels, margin).unwrap().value
        });
        worst = worst.max(relative_error(&out.gradients.concat(), &numeric));
    }
    (worst, active)
}

pub fn softmax_ce(seed: u64, configs: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let batch = rng.random_range(1..=5);
        let classes = rng.random_range(2..=7);
        let logits: Vec<Vec<f64>> = (0..batch)
            .map(|_| random_vec(&mut rng, classes, 4.0))
            .collect();
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
        let out = softmax_ce_loss(&logits, &labels).unwrap();
        let numeric = numeric_gradient(&logits.concat(), H, |x| {
            let rows: Vec<Vec<f64>> = x.chunks_exact(classes).map(<[f64]>::to_vec).collect();
            softmax_ce_loss(&rows, &labels).unwrap().value
        });
        worst = worst.max(relative_error(&out.gradients.concat(), &numeric));
    }
    worst
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

pub fn oim(seed: u64, configs: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let ids = rng.random_range(2..=6);
        let dim = rng.random_range(2..=6);
        let temperature = rng.random_range(0.1..1.0);
        let mut lut = PooledTable::new(ids, 1, dim).unwrap();
        let mut rows = vec![vec![0.0; dim]; ids];
        for (id, row) in rows.iter_mut().enumerate() {
            // Leave roughly one row in five unwritten; it scores zero.
            if rng.random_bool(0.8) {
                *row = unit(random_vec(&mut rng, dim, 1.0));
                lut.set(SlotKey::new(id, 0), row).unwrap();
            }
        }
        let label = rng.random_range(0..ids);
        let feature = unit(random_vec(&mut rng, dim, 1.0));
        let out = oim_loss(&feature, label, &lut, None, temperature).unwrap();
        let value = oim_value(&feature, &rows, label, temperature);
        worst = worst.max((out.value - value).abs() / value.max(1.0));
        let numeric = numeric_gradient(&feature, H, |x| oim_value(x, &rows, label, temperature));
        worst = worst.max(relative_error(&out.gradients[0], &numeric));
    }
    worst
}

pub fn center(seed: u64, configs: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let dim = rng.random_range(1..=6);
        let ids = rng.random_range(1..=4);
        let batch = rng.random_range(1..=6);
        let centers: Vec<Embedding> = (0..ids)
            .map(|_| emb(random_vec(&mut rng, dim, 2.0)))
            .collect();
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..ids)).collect();
        let feats: Vec<Vec<f64>> = (0..batch).map(|_| random_vec(&mut rng, dim, 2.0)).collect();
        let embs: Vec<Embedding> = feats.iter().cloned().map(emb).collect();
        let out = center_loss(&embs, &labels, &centers).unwrap();
        let numeric = numeric_gradient(&feats.concat(), H, |x| {
            let e: Vec<Embedding> = x.chunks_exact(dim).map(|c| emb(c.to_vec())).collect();
            center_loss(&e, &labels, &centers).unwrap().value
        });
        worst = worst.max(relative_error(&out.gradients.concat(), &numeric));
    }
    worst
}

/// Smallest hidden pre-activation magnitude, computed from the raw weights.
fn min_preactivation(net: &Mlp, inputs: &[Vec<f64>]) -> f64 {
    let (w1, b1) = (net.w1(), net.b1());
    inputs
        .iter()
        .flat_map(|x| {
            w1.chunks_exact(net.input_dim())
                .zip(b1)
                .map(move |(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).abs())
        })
        .fold(f64::INFINITY, f64::min)
}

fn toim_through_net(net: &Mlp, inputs: &[Vec<f64>], targets: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let records: Vec<TripletRecord> = inputs
        .iter()
        .zip(targets)
        .map(|(x, (p, n))| TripletRecord {
            anchor: net.embed(x).unwrap(),
            positive: emb(p.clone()),
            negative: emb(n.clone()),
            anchor_key: SlotKey::new(0, 0),
            positive_key: SlotKey::new(0, 1),
            negative_key: SlotKey::new(1, 0),
        })
        .collect();
    toim_loss(&records).unwrap().value
}

/// TOIM through a 4-8-4 MLP, differentiated with respect to every parameter.
pub fn toim_through_mlp(normalize: bool, seed: u64, configs: usize) -> f64 {
    let mut rng = rng(seed);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < configs {
        let net = Mlp::init(4, 8, 4, &mut rng)
            .unwrap()
            .with_normalized_output(normalize);
        let batch = rng.random_range(1..=3);
        let inputs: Vec<Vec<f64>> = (0..batch).map(|_| random_vec(&mut rng, 4, 1.5)).collect();
        if min_preactivation(&net, &inputs) < 1e-3 {
            continue;
        }
        let target_scale = if normalize { 0.8 } else { 1.5 };
        let targets: Vec<(Vec<f64>, Vec<f64>)> = (0..batch)
            .map(|_| {
                (
                    random_vec(&mut rng, 4, target_scale),
                    random_vec(&mut rng, 4, target_scale),
                )
            })
            .collect();
        let anchors: Vec<Embedding> = inputs.iter().map(|x| net.embed(x).unwrap()).collect();
        if anchors
            .iter()
            .zip(&targets)
            .any(|(a, (p, n))| dist(a, p) < 0.1 || dist(a, n) < 0.1)
        {
            continue;
        }

        let records: Vec<TripletRecord> = anchors
            .iter()
            .zip(&targets)
            .map(|(a, (p, n))| TripletRecord {
                anchor: a.clone(),
                positive: emb(p.clone()),
                negative: emb(n.clone()),
                anchor_key: SlotKey::new(0, 0),
                positive_key: SlotKey::new(0, 1),
                negative_key: SlotKey::new(1, 0),
            })
            .collect();
        let out = toim_loss(&records).unwrap();
        let mut analytic = vec![0.0; net.param_count()];
        for (x, g) in inputs.iter().zip(&out.gradients) {
            let (_, cache) = net.forward(x).unwrap();
            net.backward_into(&cache, g, &mut analytic).unwrap();
        }
        let base = net.params().to_vec();
        let mut probe = net.clone();
        let numeric = numeric_gradient(&base, H, |theta| {
            probe.params_mut().copy_from_slice(theta);
            toim_through_net(&probe, &inputs, &targets)
        });
        worst = worst.max(relative_error(&analytic, &numeric));
        checked += 1;
    }
    worst
}

/// Softmax through the linear head, for both parameters and input.
pub fn linear_head(seed: u64, configs: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let (input, classes) = (rng.random_range(2..=6), rng.random_range(2..=5));
        let head = Linear::init(input, classes, &mut rng).unwrap();
        let x = random_vec(&mut rng, input, 2.0);
        let label = rng.random_range(0..classes);
        let logits = head.forward(&x).unwrap();
        let ce = softmax_ce_loss(&[logits], &[label]).unwrap();
        let mut param_grad = vec![0.0; head.params().len()];
        let input_grad = head
            .backward_into(&x, &ce.gradients[0], &mut param_grad)
            .unwrap();

        let mut probe = head.clone();
        let base = head.params().to_vec();
        let numeric = numeric_gradient(&base, H, |theta| {
            probe.params_mut().copy_from_slice(theta);
            softmax_ce_loss(&[probe.forward(&x).unwrap()], &[label])
                .unwrap()
                .value
        });
        worst = worst.max(relative_error(&param_grad, &numeric));
        let numeric_x = numeric_gradient(&x, H, |v| {
            softmax_ce_loss(&[head.forward(v).unwrap()], &[label])
                .unwrap()
                .value
        });
        worst = worst.max(relative_error(&input_grad, &numeric_x));
    }
    worst
}
