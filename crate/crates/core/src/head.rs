//! Pooled-linear classifier head: global average pool, affine map to class
//! logits, softmax. Parameters are stored as `f32`; all arithmetic is `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusedFeature;
use crate::losses::{max_relative_error, LossKind};
use crate::numerics::{global_average_pool, softmax, Rng};

pub const DEFAULT_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    n_classes: usize,
    dim: usize,
    /// Row-major `n_classes × dim`.
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl HeadParams {
    pub fn new(n_classes: usize, dim: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if n_classes == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "head needs n_classes >= 1 and dim >= 1, got {n_classes}×{dim}"
            )));
        }
        if weight.len() != n_classes * dim || bias.len() != n_classes {
            return Err(Error::Shape(format!(
                "head {n_classes}×{dim} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("head parameters are not finite".into()));
        }
        Ok(HeadParams {
            n_classes,
            dim,
            weight,
            bias,
        })
    }

    pub fn zeros(n_classes: usize, dim: usize) -> Result<Self> {
        Self::new(
            n_classes,
            dim,
            vec![0.0; n_classes * dim],
            vec![0.0; n_classes],
        )
    }

    /// Weights from N(0, std²), zero bias.
    pub fn init(n_classes: usize, dim: usize, std: f64, rng: &mut Rng) -> Result<Self> {
        let weight = (0..n_classes * dim)
            .map(|_| (std * rng.standard_normal()) as f32)
            .collect();
        Self::new(n_classes, dim, weight, vec![0.0; n_classes])
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn logits(&self, pooled: &[f32]) -> Result<Vec<f64>> {
        if pooled.len() != self.dim {
            return Err(Error::Shape(format!(
                "pooled feature has length {}, head expects {}",
                pooled.len(),
                self.dim
            )));
        }
        Ok(self
            .weight
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(row, &b)| {
                row.iter()
                    .zip(pooled)
                    .map(|(&w, &x)| w as f64 * x as f64)
                    .sum::<f64>()
                    + b as f64
            })
            .collect())
    }

    pub fn forward_pooled(&self, pooled: &[f32]) -> Result<HeadOutput> {
        let logits = self.logits(pooled)?;
        let probs = softmax(&logits)
            .map_err(|e| Error::Numeric(format!("head produced invalid logits: {e}")))?;
        Ok(HeadOutput {
            logits,
            probs,
            pooled: pooled.to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub pooled: Vec<f32>,
}

impl HeadOutput {
    /// Predicted class; ties go to the lowest index.
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn head_forward(fused: &FusedFeature, params: &HeadParams) -> Result<HeadOutput> {
    let pooled = global_average_pool(&fused.tensor)?;
    params.forward_pooled(&pooled)
}

/// Gradients with respect to the head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadGrads {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        HeadGrads {
            weight: vec![0.0; n_classes * dim],
            bias: vec![0.0; n_classes],
        }
    }

    /// `self += scale · outer(grad_logits, pooled)` and `bias += scale · grad_logits`.
    pub fn accumulate(&mut self, pooled: &[f32], grad_logits: &[f64], scale: f64) -> Result<()> {
        let dim = pooled.len();
        if grad_logits.len() != self.bias.len() || dim * self.bias.len() != self.weight.len() {
            return Err(Error::Shape(format!(
                "gradient accumulation: {} logits × {dim} features vs {} weights",
                grad_logits.len(),
                self.weight.len()
            )));
        }
        for (k, &g) in grad_logits.iter().enumerate() {
            let g = g * scale;
            self.bias[k] += g;
            for (w, &x) in self.weight[k * dim..(k + 1) * dim].iter_mut().zip(pooled) {
                *w += g * x as f64;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

pub fn head_backward(pooled: &[f32], grad_logits: &[f64]) -> Result<HeadGrads> {
    if pooled.is_empty() || grad_logits.is_empty() {
        return Err(Error::Shape("empty pooled feature or gradient".into()));
    }
    let mut grads = HeadGrads::zeros(grad_logits.len(), pooled.len());
    grads.accumulate(pooled, grad_logits, 1.0)?;
    Ok(grads)
}

/// Loss and parameter gradients for one pooled sample.
pub fn sample_loss_and_grads(
    params: &HeadParams,
    pooled: &[f32],
    target: usize,
    kind: &LossKind,
    epoch: u32,
) -> Result<(f64, HeadGrads)> {
    let out = params.forward_pooled(pooled)?;
    let loss = kind.evaluate(&out.probs, target, epoch)?;
    let grads = head_backward(pooled, &loss.grad_logits)?;
    Ok((loss.value, grads))
}

/// Weights then biases, row-major, widened to `f64`.
pub fn flatten_params(params: &HeadParams) -> Vec<f64> {
    params
        .weight
        .iter()
        .chain(&params.bias)
        .map(|&v| v as f64)
        .collect()
}

pub fn flatten_grads(grads: &HeadGrads) -> Vec<f64> {
    grads.weight.iter().chain(&grads.bias).copied().collect()
}

/// Loss of a head whose parameters are given flattened as in
/// [`flatten_params`]. Evaluated directly, without the backward pass.
pub fn head_loss_at(
    theta: &[f64],
    n_classes: usize,
    pooled: &[f32],
    target: usize,
    kind: &LossKind,
    epoch: u32,
) -> Result<f64> {
    let d = pooled.len();
    if theta.len() != n_classes * (d + 1) {
        return Err(Error::Shape(format!(
            "{} parameters for a {n_classes}x{d} head",
            theta.len()
        )));
    }
    let logits: Vec<f64> = (0..n_classes)
        .map(|k| {
            let row = &theta[k * d..(k + 1) * d];
            theta[n_classes * d + k]
                + row
                    .iter()
                    .zip(pooled)
                    .map(|(w, &x)| w * x as f64)
                    .sum::<f64>()
        })
        .collect();
    Ok(kind.evaluate(&softmax(&logits)?, target, epoch)?.value)
}

/// Max relative error between backpropagated parameter gradients and central
/// differences of [`head_loss_at`].
pub fn head_finite_diff_check(
    params: &HeadParams,
    pooled: &[f32],
    target: usize,
    kind: &LossKind,
    epoch: u32,
    h: f64,
) -> Result<f64> {
    let (_, grads) = sample_loss_and_grads(params, pooled, target, kind, epoch)?;
    max_relative_error(&flatten_grads(&grads), &flatten_params(params), h, |t| {
        head_loss_at(t, params.n_classes, pooled, target, kind, epoch)
    })
}

/// Plain SGD update `params ← params − lr · grads`. Rejects the update and
/// leaves `params` untouched when the gradients or the result are not finite.
pub fn sgd_step(params: &mut HeadParams, grads: &HeadGrads, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "learning rate must be > 0, got {lr}"
        )));
    }
    if grads.weight.len() != params.weight.len() || grads.bias.len() != params.bias.len() {
        return Err(Error::Shape("gradient shape does not match head".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric(
            "non-finite gradient, update rejected".into(),
        ));
    }
    let step = |p: &[f32], g: &[f64]| -> Vec<f32> {
        p.iter()
            .zip(g)
            .map(|(&p, &g)| (p as f64 - lr * g) as f32)
            .collect()
    };
    let weight = step(&params.weight, &grads.weight);
    let bias = step(&params.bias, &grads.bias);
    if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("update overflowed, rejected".into()));
    }
    params.weight = weight;
    params.bias = bias;
    Ok(())
}

/// Optimizer schedule: step decay by `decay_factor` at each listed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr0: f64,
    pub decay_epochs: Vec<u32>,
    pub decay_factor: f64,
    pub epochs: u32,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            lr0: 0.1,
            decay_epochs: vec![30, 50],
            decay_factor: 0.1,
            epochs: 100,
            batch_size: 32,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lr must be > 0, got {}",
                self.lr0
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::InvalidInput(format!(
                "decay factor must be in (0, 1), got {}",
                self.decay_factor
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "decay epochs must be strictly increasing, got {:?}",
                self.decay_epochs
            )));
        }
        if let Some(&last) = self.decay_epochs.last() {
            if last >= self.epochs {
                return Err(Error::InvalidInput(format!(
                    "decay epoch {last} is not below the epoch count {}",
                    self.epochs
                )));
            }
        }
        Ok(())
    }
}

pub fn lr_at(epoch: u32, config: &SgdConfig) -> Result<f64> {
    config.validate()?;
    if epoch >= config.epochs {
        return Err(Error::InvalidInput(format!(
            "epoch {epoch} outside [0, {})",
            config.epochs
        )));
    }
    let passed = config.decay_epochs.iter().filter(|&&d| d <= epoch).count();
    Ok(config.lr0 * config.decay_factor.powi(passed as i32))
}
