use crate::distance::{check_dims, Embedding};
use crate::error::{Error, Result};

use super::LossOutput;

/// Center loss `1/2 * sum_i ||f_i - c_{y_i}||^2`, where `centers[y]` is the
/// center of identity `y`.
pub fn center_loss(
    features: &[Embedding],
    labels: &[usize],
    centers: &[Embedding],
) -> Result<LossOutput> {
    if features.is_empty() {
        return Err(Error::Empty("center-loss batch"));
    }
    check_dims(features.len(), labels.len())?;
    let mut value = 0.0;
    let mut gradients = Vec::with_capacity(features.len());
    for (f, &y) in features.iter().zip(labels) {
        let c = centers.get(y).ok_or(Error::MissingCenter(y))?;
        check_dims(c.dim(), f.dim())?;
        let diff: Vec<f64> = f.iter().zip(c.iter()).map(|(a, b)| a - b).collect();
        value += 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
        gradients.push(diff);
    }
    LossOutput::checked(value, gradients)
}
