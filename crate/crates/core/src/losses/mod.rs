//! Loss functions with analytic gradients.
//!
//! Every loss returns a [`LossOutput`]: the scalar value plus one gradient
//! vector per live input (anchor, sample, or logit row). Table entries used
//! as positives or negatives are buffers and never receive gradients.

mod center;
mod oim;
mod softmax;
mod toim;
mod triplet;

pub use center::center_loss;
pub use oim::{oim_loss, oim_loss_batch, FeatureQueue};
pub use softmax::softmax_ce_loss;
pub use toim::{toim_loss, TripletRecord};
pub use triplet::{batch_hard_hardest, triplet_loss_batchhard};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Lower clamp applied to distances that appear in gradient denominators.
pub const DISTANCE_EPS: f64 = 1e-12;

/// Scalar loss and its gradient with respect to each live input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub gradients: Vec<Vec<f64>>,
}

impl LossOutput {
    pub fn zero(count: usize, dim: usize) -> Self {
        Self {
            value: 0.0,
            gradients: vec![vec![0.0; dim]; count],
        }
    }

    pub(crate) fn checked(value: f64, gradients: Vec<Vec<f64>>) -> Result<Self> {
        if !value.is_finite() || gradients.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("loss output"));
        }
        Ok(Self { value, gradients })
    }
}

/// Loss hyperparameters that are not part of the training schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossHyper {
    /// Hinge margin of the batch-hard triplet baseline.
    pub margin: f64,
    /// OIM softmax temperature.
    pub temperature: f64,
    /// Weight of the center term in the combined loss.
    pub beta: f64,
    /// Table update rate.
    pub gamma: f64,
}

impl Default for LossHyper {
    fn default() -> Self {
        Self {
            margin: 0.3,
            temperature: 0.1,
            beta: 0.0005,
            gamma: 0.4,
        }
    }
}

impl LossHyper {
    pub fn validate(&self) -> Result<()> {
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(invalid("margin", format!("{} must be >= 0", self.margin)));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(invalid(
                "temperature",
                format!("{} must be > 0", self.temperature),
            ));
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(invalid("beta", format!("{} must be >= 0", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid(
                "gamma",
                format!("{} is outside [0, 1]", self.gamma),
            ));
        }
        Ok(())
    }
}

/// `ce + toim + beta * center`, with gradients combined the same way.
///
/// All three outputs must carry gradients for the same anchors.
pub fn combined_loss(
    ce: &LossOutput,
    toim: &LossOutput,
    center: &LossOutput,
    beta: f64,
) -> Result<LossOutput> {
    if beta.is_nan() || beta < 0.0 {
        return Err(invalid("beta", format!("{beta} must be >= 0")));
    }
    let shape = |o: &LossOutput| o.gradients.iter().map(Vec::len).collect::<Vec<_>>();
    let reference = shape(ce);
    for other in [toim, center] {
        let s = shape(other);
        if s != reference {
            return Err(Error::DimensionMismatch {
                expected: reference.iter().sum(),
                found: s.iter().sum(),
            });
        }
    }
    let gradients = ce
        .gradients
        .iter()
        .zip(&toim.gradients)
        .zip(&center.gradients)
        .map(|((g_ce, g_t), g_c)| {
            g_ce.iter()
                .zip(g_t)
                .zip(g_c)
                .map(|((a, b), c)| a + b + beta * c)
                .collect()
        })
        .collect();
    LossOutput::checked(ce.value + toim.value + beta * center.value, gradients)
}
