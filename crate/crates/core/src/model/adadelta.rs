use serde::{Deserialize, Serialize};

use crate::distance::check_dims;
use crate::error::{invalid, Error, Result};

/// AdaDelta with a learning-rate multiplier on the update.
///
/// ```text
/// E[g^2]  <- rho * E[g^2] + (1 - rho) * g^2
/// dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
/// E[dx^2] <- rho * E[dx^2] + (1 - rho) * dx^2
/// x       <- x + lr * dx
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaDelta {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
    sq_grad: Vec<f64>,
    sq_delta: Vec<f64>,
}

impl AdaDelta {
    pub const DEFAULT_RHO: f64 = 0.9;
    pub const DEFAULT_EPS: f64 = 1e-6;

    pub fn new(len: usize, lr: f64) -> Result<Self> {
        Self::with_constants(len, lr, Self::DEFAULT_RHO, Self::DEFAULT_EPS)
    }

    pub fn with_constants(len: usize, lr: f64, rho: f64, eps: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid("rho", format!("{rho} is outside (0, 1)")));
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(invalid("eps", format!("{eps} must be > 0")));
        }
        if !lr.is_finite() || lr <= 0.0 {
            return Err(invalid(
                "lr",
                format!("{lr} must be a positive finite number"),
            ));
        }
        Ok(Self {
            rho,
            eps,
            lr,
            sq_grad: vec![0.0; len],
            sq_delta: vec![0.0; len],
        })
    }

    pub fn len(&self) -> usize {
        self.sq_grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sq_grad.is_empty()
    }

    /// Running mean of squared gradients.
    pub fn sq_grad(&self) -> &[f64] {
        &self.sq_grad
    }

    /// Running mean of squared (unscaled) updates.
    pub fn sq_delta(&self) -> &[f64] {
        &self.sq_delta
    }

    /// Applies one update to `params`. Nothing changes if `grads` contains a
    /// non-finite entry.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_dims(self.len(), params.len())?;
        check_dims(self.len(), grads.len())?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        let (rho, eps) = (self.rho, self.eps);
        for (((x, &g), eg), ed) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.sq_grad)
            .zip(&mut self.sq_delta)
        {
            *eg = rho * *eg + (1.0 - rho) * g * g;
            let dx = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * g;
            *ed = rho * *ed + (1.0 - rho) * dx * dx;
            *x += self.lr * dx;
        }
        Ok(())
    }
}
