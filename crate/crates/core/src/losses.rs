//! Per-sample classification losses over softmax probabilities, with analytic
//! gradients with respect to the logits.
//!
//! Every loss here is a function of the target-class probability `p_t` only,
//! so its logit gradient is `p_t · dL/dp_t · (onehot − p)`. Each loss reports
//! the scalar `p_t · dL/dp_t` and the softmax Jacobian is applied once.
//!
//! Probabilities are clamped to `[EPS, 1 − EPS]` before any logarithm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::softmax;

pub const EPS: f64 = 1e-7;

/// Hyperparameters of the cyclical focal loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaslConfig {
    /// Cyclical factor.
    pub beta: f64,
    /// Exponent of the easy-sample modulating factor `(1 + p)^gamma`.
    pub gamma: f64,
    /// Exponent on `(1 − p)` in the hard-sample term.
    pub lambda1: f64,
    /// Exponent on `p` in the hard-sample term.
    pub lambda2: f64,
    pub total_epochs: u32,
}

impl Default for CaslConfig {
    fn default() -> Self {
        CaslConfig {
            beta: 4.0,
            gamma: 0.0,
            lambda1: 0.0,
            lambda2: 4.0,
            total_epochs: 100,
        }
    }
}

impl CaslConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.total_epochs == 0 {
            return Err(Error::InvalidInput("total_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    CrossEntropy,
    Focal { gamma: f64 },
    Asymmetric { lambda1: f64, lambda2: f64 },
    Cyclical(CaslConfig),
}

impl LossKind {
    pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;
    pub const DEFAULT_ASL_LAMBDA1: f64 = 1.0;
    pub const DEFAULT_ASL_LAMBDA2: f64 = 4.0;

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "ce",
            LossKind::Focal { .. } => "fl",
            LossKind::Asymmetric { .. } => "asl",
            LossKind::Cyclical(_) => "casl",
        }
    }

    pub fn casl(&self) -> Option<&CaslConfig> {
        match self {
            LossKind::Cyclical(c) => Some(c),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::CrossEntropy => Ok(()),
            LossKind::Focal { gamma } => non_negative("focal gamma", gamma),
            LossKind::Asymmetric { lambda1, lambda2 } => {
                non_negative("asl lambda1", lambda1)?;
                non_negative("asl lambda2", lambda2)
            }
            LossKind::Cyclical(c) => c.validate(),
        }
    }

    /// Loss value and logit gradient for one sample. `epoch` only matters for
    /// the cyclical loss.
    pub fn evaluate(&self, probs: &[f64], target: usize, epoch: u32) -> Result<LossValue> {
        match *self {
            LossKind::CrossEntropy => cross_entropy(probs, target),
            LossKind::Focal { gamma } => focal_loss(probs, target, gamma),
            LossKind::Asymmetric { lambda1, lambda2 } => {
                asymmetric_loss(probs, target, lambda1, lambda2)
            }
            LossKind::Cyclical(ref cfg) => casl_loss(probs, target, epoch, cfg),
        }
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be finite and >= 0, got {v}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad_logits: Vec<f64>,
}

/// Value of a `p_t`-only loss and `p_t · dL/dp_t`.
#[derive(Debug, Clone, Copy)]
struct ScalarLoss {
    value: f64,
    p_dlogp: f64,
}

impl ScalarLoss {
    fn mix(a: ScalarLoss, wa: f64, b: ScalarLoss, wb: f64) -> ScalarLoss {
        ScalarLoss {
            value: wa * a.value + wb * b.value,
            p_dlogp: wa * a.p_dlogp + wb * b.p_dlogp,
        }
    }
}

fn target_probability(probs: &[f64], target: usize) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidInput("empty probability vector".into()));
    }
    if target >= probs.len() {
        return Err(Error::InvalidInput(format!(
            "target {target} out of range for {} classes",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidInput(
            "probabilities must be finite and non-negative".into(),
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-5 {
        return Err(Error::InvalidInput(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(probs[target])
}

fn clamp_probability(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(p.clamp(EPS, 1.0 - EPS))
}

/// `−w(p)·ln p` where `w = base^exponent`, `base = 1 + sign·p`.
fn weighted_log_p(p: f64, sign: f64, exponent: f64) -> ScalarLoss {
    let base = 1.0 + sign * p;
    let w = base.powf(exponent);
    let dw = if exponent == 0.0 {
        0.0
    } else {
        exponent * sign * base.powf(exponent - 1.0)
    };
    let ln_p = p.ln();
    ScalarLoss {
        value: -w * ln_p,
        p_dlogp: -p * dw * ln_p - w,
    }
}

/// `−p^exponent · ln(1 − p)`.
fn confidence_penalty(p: f64, exponent: f64) -> ScalarLoss {
    let v = p.powf(exponent);
    let ln_q = (1.0 - p).ln();
    ScalarLoss {
        value: -v * ln_q,
        p_dlogp: -exponent * v * ln_q + p * v / (1.0 - p),
    }
}

fn easy_term(p: f64, gamma: f64) -> ScalarLoss {
    weighted_log_p(p, 1.0, gamma)
}

fn hard_term(p: f64, lambda1: f64, lambda2: f64) -> ScalarLoss {
    let a = weighted_log_p(p, -1.0, lambda1);
    let b = confidence_penalty(p, lambda2);
    ScalarLoss::mix(a, 1.0, b, 1.0)
}

fn finish(probs: &[f64], target: usize, s: ScalarLoss) -> LossValue {
    // d p_t / d z_j = p_t (δ_tj − p_j), so dL/dz_j = (p_t dL/dp_t)(δ_tj − p_j).
    let grad_logits = probs
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let delta = if j == target { 1.0 } else { 0.0 };
            s.p_dlogp * (delta - pj)
        })
        .collect();
    LossValue {
        value: s.value,
        grad_logits,
    }
}

pub fn cross_entropy(probs: &[f64], target: usize) -> Result<LossValue> {
    let p = clamp_probability(target_probability(probs, target)?)?;
    Ok(finish(
        probs,
        target,
        ScalarLoss {
            value: -p.ln(),
            p_dlogp: -1.0,
        },
    ))
}

/// Cyclical weight between the easy and hard terms at a 0-based epoch.
pub fn casl_alpha(epoch: u32, config: &CaslConfig) -> Result<f64> {
    config.validate()?;
    if epoch > config.total_epochs {
        return Err(Error::InvalidInput(format!(
            "epoch {epoch} outside [0, {}]",
            config.total_epochs
        )));
    }
    let ratio = config.beta * epoch as f64 / config.total_epochs as f64;
    let alpha = if ratio <= 1.0 {
        1.0 - ratio
    } else {
        (ratio - 1.0) / (config.beta - 1.0)
    };
    Ok(alpha.clamp(0.0, 1.0))
}

/// Easy-sample term `−(1 + p)^γ · ln p`.
pub fn casl_le(p: f64, gamma: f64) -> Result<f64> {
    non_negative("gamma", gamma)?;
    Ok(easy_term(clamp_probability(p)?, gamma).value)
}

/// Hard-sample term `−(1 − p)^λ1 · ln p − p^λ2 · ln(1 − p)`.
pub fn casl_lh(p: f64, lambda1: f64, lambda2: f64) -> Result<f64> {
    non_negative("lambda1", lambda1)?;
    non_negative("lambda2", lambda2)?;
    Ok(hard_term(clamp_probability(p)?, lambda1, lambda2).value)
}

pub fn casl_loss(
    probs: &[f64],
    target: usize,
    epoch: u32,
    config: &CaslConfig,
) -> Result<LossValue> {
    let alpha = casl_alpha(epoch, config)?;
    let p = clamp_probability(target_probability(probs, target)?)?;
    let s = ScalarLoss::mix(
        easy_term(p, config.gamma),
        alpha,
        hard_term(p, config.lambda1, config.lambda2),
        1.0 - alpha,
    );
    Ok(finish(probs, target, s))
}

pub fn focal_loss(probs: &[f64], target: usize, gamma: f64) -> Result<LossValue> {
    non_negative("focal gamma", gamma)?;
    let p = clamp_probability(target_probability(probs, target)?)?;
    Ok(finish(probs, target, weighted_log_p(p, -1.0, gamma)))
}

/// Epoch-independent asymmetric baseline with the same functional form as the
/// hard-sample term.
pub fn asymmetric_loss(
    probs: &[f64],
    target: usize,
    lambda1: f64,
    lambda2: f64,
) -> Result<LossValue> {
    non_negative("asl lambda1", lambda1)?;
    non_negative("asl lambda2", lambda2)?;
    let p = clamp_probability(target_probability(probs, target)?)?;
    Ok(finish(probs, target, hard_term(p, lambda1, lambda2)))
}

/// Loss value computed straight from logits (softmax first).
pub fn loss_from_logits(
    kind: &LossKind,
    logits: &[f64],
    target: usize,
    epoch: u32,
) -> Result<LossValue> {
    let probs = softmax(logits)?;
    kind.evaluate(&probs, target, epoch)
}

pub fn loss_grad_wrt_logits(
    kind: &LossKind,
    logits: &[f64],
    target: usize,
    epoch: u32,
) -> Result<Vec<f64>> {
    Ok(loss_from_logits(kind, logits, target, epoch)?.grad_logits)
}

/// Max over coordinates of `|analytic − central| / max(1, |central|)`, where
/// `central` is the central difference of `f` at `x` with step `h`.
pub fn max_relative_error(
    analytic: &[f64],
    x: &[f64],
    h: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("step h must be > 0, got {h}")));
    }
    if analytic.len() != x.len() {
        return Err(Error::Shape(format!(
            "gradient length {} vs point length {}",
            analytic.len(),
            x.len()
        )));
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe)?;
        probe[j] = x[j] - h;
        let down = f(&probe)?;
        probe[j] = x[j];
        let central = (up - down) / (2.0 * h);
        let err = (analytic[j] - central).abs() / central.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Compares the analytic logit gradient of `kind` against central differences.
pub fn finite_diff_check(
    kind: &LossKind,
    logits: &[f64],
    target: usize,
    epoch: u32,
    h: f64,
) -> Result<f64> {
    let analytic = loss_grad_wrt_logits(kind, logits, target, epoch)?;
    max_relative_error(&analytic, logits, h, |z| {
        Ok(loss_from_logits(kind, z, target, epoch)?.value)
    })
}
