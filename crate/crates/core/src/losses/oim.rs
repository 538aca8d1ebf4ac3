use std::collections::VecDeque;

use crate::distance::{check_dims, dot, norm};
use crate::error::{invalid, Error, Result};
use crate::memory::{PooledTable, SlotKey};

use super::softmax::log_softmax;
use super::LossOutput;

const NORM_TOLERANCE: f64 = 1e-6;

/// Fixed-capacity queue of unlabeled features; the oldest entry is dropped
/// on overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureQueue {
    capacity: usize,
    items: VecDeque<Vec<f64>>,
}

impl FeatureQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, feature: Vec<f64>) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(feature);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.items.iter().map(Vec::as_slice)
    }
}

fn check_unit(v: &[f64]) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized(n));
    }
    Ok(())
}

/// Online instance matching loss for one feature.
///
/// Scores are `v_j . x / temperature` against every lookup-table row
/// (camera 0 of each identity; uninitialized rows score zero) followed by
/// every queued unlabeled feature. The value is the negative log-softmax of
/// the true class; the gradient is with respect to `feature`.
pub fn oim_loss(
    feature: &[f64],
    label: usize,
    lut: &PooledTable,
    queue: Option<&FeatureQueue>,
    temperature: f64,
) -> Result<LossOutput> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(invalid("temperature", format!("{temperature} must be > 0")));
    }
    if lut.cameras() != 1 {
        return Err(invalid(
            "lut",
            "lookup table must have exactly one camera column",
        ));
    }
    check_dims(lut.dim(), feature.len())?;
    check_unit(feature)?;
    if label >= lut.identities() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: lut.identities(),
        });
    }

    let mut rows: Vec<&[f64]> =
        Vec::with_capacity(lut.identities() + queue.map_or(0, FeatureQueue::len));
    for id in 0..lut.identities() {
        let (v, initialized) = lut.lookup(SlotKey::new(id, 0))?;
        if initialized {
            check_unit(v)?;
        }
        rows.push(v);
    }
    if let Some(q) = queue {
        for u in q.iter() {
            check_dims(lut.dim(), u.len())?;
            check_unit(u)?;
            rows.push(u);
        }
    }

    let scores: Vec<f64> = rows.iter().map(|r| dot(r, feature) / temperature).collect();
    let log_p = log_softmax(&scores);
    let value = -log_p[label];
    let mut grad = vec![0.0; feature.len()];
    for (k, (row, lp)) in rows.iter().zip(&log_p).enumerate() {
        let weight = lp.exp() - f64::from(u8::from(k == label));
        for (g, r) in grad.iter_mut().zip(row.iter()) {
            *g += weight * r / temperature;
        }
    }
    LossOutput::checked(value, vec![grad])
}

/// Mean OIM loss over a batch; gradients are scaled by `1 / batch`.
pub fn oim_loss_batch(
    features: &[Vec<f64>],
    labels: &[usize],
    lut: &PooledTable,
    queue: Option<&FeatureQueue>,
    temperature: f64,
) -> Result<LossOutput> {
    if features.is_empty() {
        return Err(Error::Empty("oim batch"));
    }
    check_dims(features.len(), labels.len())?;
    let scale = 1.0 / features.len() as f64;
    let mut value = 0.0;
    let mut gradients = Vec::with_capacity(features.len());
    for (f, &label) in features.iter().zip(labels) {
        let out = oim_loss(f, label, lut, queue, temperature)?;
        value += out.value * scale;
        let mut g = out.gradients.into_iter().next().unwrap_or_default();
        g.iter_mut().for_each(|x| *x *= scale);
        gradients.push(g);
    }
    LossOutput::checked(value, gradients)
}
