use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::{check_dims, dot, Embedding};
use crate::error::{invalid, Error, Result};

/// Two-layer perceptron `x -> relu(W1 x + b1) -> W2 h + b2`, optionally
/// followed by L2 normalization of the output.
///
/// All parameters live in one flat vector laid out as `[W1 | b1 | W2 | b2]`
/// with row-major weights, so optimizers can treat them as a single slice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    normalize: bool,
    params: Vec<f64>,
    #[serde(skip)]
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        // `version` only tracks cache freshness.
        (
            self.input_dim,
            self.hidden_dim,
            self.output_dim,
            self.normalize,
        ) == (
            other.input_dim,
            other.hidden_dim,
            other.output_dim,
            other.normalize,
        ) && self.params == other.params
    }
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
    raw_output: Vec<f64>,
    raw_norm: f64,
    version: u64,
}

impl Mlp {
    /// Zero-initialized network.
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Result<Self> {
        for (name, v) in [
            ("input_dim", input_dim),
            ("hidden_dim", hidden_dim),
            ("output_dim", output_dim),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        let len = hidden_dim * input_dim + hidden_dim + output_dim * hidden_dim + output_dim;
        Ok(Self {
            input_dim,
            hidden_dim,
            output_dim,
            normalize: false,
            params: vec![0.0; len],
            version: 0,
        })
    }

    /// He-uniform first layer, Glorot-uniform second layer, zero biases.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut net = Self::zeros(input_dim, hidden_dim, output_dim)?;
        let a1 = (6.0 / input_dim as f64).sqrt();
        let a2 = (6.0 / (hidden_dim + output_dim) as f64).sqrt();
        let (w1, w2) = (net.w1_range(), net.w2_range());
        for w in &mut net.params[w1] {
            *w = rng.random_range(-a1..a1);
        }
        for w in &mut net.params[w2] {
            *w = rng.random_range(-a2..a2);
        }
        Ok(net)
    }

    /// Builds a network from explicit weights (`w1`: hidden x input,
    /// `w2`: output x hidden, row-major).
    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        w1: &[f64],
        b1: &[f64],
        w2: &[f64],
        b2: &[f64],
    ) -> Result<Self> {
        let mut net = Self::zeros(input_dim, hidden_dim, output_dim)?;
        check_dims(hidden_dim * input_dim, w1.len())?;
        check_dims(hidden_dim, b1.len())?;
        check_dims(output_dim * hidden_dim, w2.len())?;
        check_dims(output_dim, b2.len())?;
        net.params = [w1, b1, w2, b2].concat();
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("mlp parameters"));
        }
        Ok(net)
    }

    pub fn with_normalized_output(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    pub fn normalizes_output(&self) -> bool {
        self.normalize
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden_dim * self.input_dim
    }

    fn b1_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden_dim * self.input_dim;
        s..s + self.hidden_dim
    }

    fn w2_range(&self) -> std::ops::Range<usize> {
        let s = self.b1_range().end;
        s..s + self.output_dim * self.hidden_dim
    }

    fn b2_range(&self) -> std::ops::Range<usize> {
        let s = self.w2_range().end;
        s..s + self.output_dim
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[self.w1_range()]
    }

    pub fn b1(&self) -> &[f64] {
        &self.params[self.b1_range()]
    }

    pub fn w2(&self) -> &[f64] {
        &self.params[self.w2_range()]
    }

    pub fn b2(&self) -> &[f64] {
        &self.params[self.b2_range()]
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Embedding, ForwardCache)> {
        check_dims(self.input_dim, input.len())?;
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mlp input"));
        }
        let (w1, b1, w2, b2) = (self.w1(), self.b1(), self.w2(), self.b2());
        let pre_hidden: Vec<f64> = w1
            .chunks_exact(self.input_dim)
            .zip(b1)
            .map(|(row, b)| dot(row, input) + b)
            .collect();
        let hidden: Vec<f64> = pre_hidden.iter().map(|z| z.max(0.0)).collect();
        let raw_output: Vec<f64> = w2
            .chunks_exact(self.hidden_dim)
            .zip(b2)
            .map(|(row, b)| dot(row, &hidden) + b)
            .collect();
        let raw_norm = crate::distance::norm(&raw_output);
        let output = if self.normalize && raw_norm > 0.0 {
            raw_output.iter().map(|v| v / raw_norm).collect()
        } else {
            raw_output.clone()
        };
        let cache = ForwardCache {
            input: input.to_vec(),
            pre_hidden,
            hidden,
            raw_output,
            raw_norm,
            version: self.version,
        };
        Ok((Embedding::new(output)?, cache))
    }

    /// Output only.
    pub fn embed(&self, input: &[f64]) -> Result<Embedding> {
        self.forward(input).map(|(e, _)| e)
    }

    /// Gradient of `output . grad_output` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, grad_output, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Mlp::backward`] but adds into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        grads: &mut [f64],
    ) -> Result<()> {
        if cache.version != self.version || cache.input.len() != self.input_dim {
            return Err(Error::StaleCache);
        }
        check_dims(self.output_dim, grad_output.len())?;
        check_dims(self.params.len(), grads.len())?;

        let grad_raw: Vec<f64> = if self.normalize && cache.raw_norm > 0.0 {
            let n = cache.raw_norm;
            let y_dot_g = cache
                .raw_output
                .iter()
                .zip(grad_output)
                .map(|(r, g)| r * g)
                .sum::<f64>()
                / n;
            cache
                .raw_output
                .iter()
                .zip(grad_output)
                .map(|(r, g)| (g - (r / n) * y_dot_g) / n)
                .collect()
        } else {
            grad_output.to_vec()
        };

        let (w1r, b1r, w2r, b2r) = (
            self.w1_range(),
            self.b1_range(),
            self.w2_range(),
            self.b2_range(),
        );
        let w2 = self.w2();
        let mut grad_hidden = vec![0.0; self.hidden_dim];
        {
            let gw2 = &mut grads[w2r];
            for (o, &g) in grad_raw.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = o * self.hidden_dim;
                for h in 0..self.hidden_dim {
                    gw2[row + h] += g * cache.hidden[h];
                    grad_hidden[h] += g * w2[row + h];
                }
            }
        }
        for (gb, g) in grads[b2r].iter_mut().zip(&grad_raw) {
            *gb += g;
        }
        let grad_pre: Vec<f64> = grad_hidden
            .iter()
            .zip(&cache.pre_hidden)
            .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
            .collect();
        {
            let gw1 = &mut grads[w1r];
            for (h, &g) in grad_pre.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = h * self.input_dim;
                for (i, x) in cache.input.iter().enumerate() {
                    gw1[row + i] += g * x;
                }
            }
        }
        for (gb, g) in grads[b1r].iter_mut().zip(&grad_pre) {
            *gb += g;
        }
        Ok(())
    }
}

/// Affine classifier head `W x + b` used by the softmax-based losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    input_dim: usize,
    output_dim: usize,
    /// `[W (output x input, row-major) | b]`.
    params: Vec<f64>,
}

impl Linear {
    pub fn init(input_dim: usize, output_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(invalid("linear layer", "dimensions must be at least 1"));
        }
        let a = (6.0 / (input_dim + output_dim) as f64).sqrt();
        let mut params = vec![0.0; output_dim * input_dim + output_dim];
        for w in &mut params[..output_dim * input_dim] {
            *w = rng.random_range(-a..a);
        }
        Ok(Self {
            input_dim,
            output_dim,
            params,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.input_dim, input.len())?;
        let (w, b) = self.params.split_at(self.output_dim * self.input_dim);
        Ok(w.chunks_exact(self.input_dim)
            .zip(b)
            .map(|(row, b)| dot(row, input) + b)
            .collect())
    }

    /// Adds parameter gradients into `grads` and returns the input gradient.
    pub fn backward_into(
        &self,
        input: &[f64],
        grad_output: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        check_dims(self.input_dim, input.len())?;
        check_dims(self.output_dim, grad_output.len())?;
        check_dims(self.params.len(), grads.len())?;
        let split = self.output_dim * self.input_dim;
        let w = &self.params[..split];
        let mut grad_input = vec![0.0; self.input_dim];
        let (gw, gb) = grads.split_at_mut(split);
        for (o, &g) in grad_output.iter().enumerate() {
            let row = o * self.input_dim;
            for i in 0..self.input_dim {
                gw[row + i] += g * input[i];
                grad_input[i] += g * w[row + i];
            }
            gb[o] += g;
        }
        Ok(grad_input)
    }
}
