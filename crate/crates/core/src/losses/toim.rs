use crate::distance::{check_dims, distance_unchecked, sigmoid, stable_softplus, Embedding};
use crate::error::{Error, Result};
use crate::memory::SlotKey;

use super::{LossOutput, DISTANCE_EPS};

/// One mined triplet: a live anchor feature plus positive and negative
/// features read from the pooled table.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletRecord {
    pub anchor: Embedding,
    pub positive: Embedding,
    pub negative: Embedding,
    pub anchor_key: SlotKey,
    pub positive_key: SlotKey,
    pub negative_key: SlotKey,
}

impl TripletRecord {
    pub fn validate(&self) -> Result<()> {
        let dim = self.anchor.dim();
        check_dims(dim, self.positive.dim())?;
        check_dims(dim, self.negative.dim())?;
        if self.positive_key.identity != self.anchor_key.identity {
            return Err(Error::InvalidTriplet(format!(
                "positive identity {} differs from anchor identity {}",
                self.positive_key.identity, self.anchor_key.identity
            )));
        }
        if self.negative_key.identity == self.anchor_key.identity {
            return Err(Error::InvalidTriplet(format!(
                "negative shares anchor identity {}",
                self.anchor_key.identity
            )));
        }
        Ok(())
    }
}

/// Triplet online instance matching loss.
///
/// Per anchor the term is `-ln(e^{d_an} / (e^{d_an} + e^{d_ap}))`, which is
/// evaluated as `softplus(d_ap - d_an)`; the batch value is the sum over
/// anchors. Gradients are returned for anchors only.
pub fn toim_loss(batch: &[TripletRecord]) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(Error::Empty("triplet batch"));
    }
    let mut value = 0.0;
    let mut gradients = Vec::with_capacity(batch.len());
    for record in batch {
        record.validate()?;
        let (a, p, n) = (&record.anchor, &record.positive, &record.negative);
        let d_ap = distance_unchecked(a, p);
        let d_an = distance_unchecked(a, n);
        value += stable_softplus(d_ap - d_an);

        let weight = sigmoid(d_ap - d_an);
        let inv_ap = 1.0 / d_ap.max(DISTANCE_EPS);
        let inv_an = 1.0 / d_an.max(DISTANCE_EPS);
        let grad = a
            .iter()
            .zip(p.iter())
            .zip(n.iter())
            .map(|((a, p), n)| weight * ((a - p) * inv_ap - (a - n) * inv_an))
            .collect();
        gradients.push(grad);
    }
    LossOutput::checked(value, gradients)
}
