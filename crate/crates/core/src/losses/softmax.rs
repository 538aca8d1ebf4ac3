use crate::distance::check_dims;
use crate::error::{Error, Result};

use super::LossOutput;

/// Log-softmax of one logit row, shifted by the row maximum.
pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|z| z - log_sum).collect()
}

/// Mean cross-entropy of `labels` under row-wise softmax of `logits`.
/// The gradient for each row is `(softmax - one_hot) / batch`.
pub fn softmax_ce_loss(logits: &[Vec<f64>], labels: &[usize]) -> Result<LossOutput> {
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    check_dims(logits.len(), labels.len())?;
    let classes = logits[0].len();
    if classes == 0 {
        return Err(Error::Empty("logit row"));
    }
    let scale = 1.0 / logits.len() as f64;
    let mut value = 0.0;
    let mut gradients = Vec::with_capacity(logits.len());
    for (row, &label) in logits.iter().zip(labels) {
        check_dims(classes, row.len())?;
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if row.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        let log_p = log_softmax(row);
        value -= log_p[label] * scale;
        let grad = log_p
            .iter()
            .enumerate()
            .map(|(k, lp)| (lp.exp() - f64::from(u8::from(k == label))) * scale)
            .collect();
        gradients.push(grad);
    }
    LossOutput::checked(value, gradients)
}
