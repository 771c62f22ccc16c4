//! Subset-specific losses and their logit-space gradients.
//!
//! Clean samples train with cross-entropy, boundary samples with generalized
//! cross-entropy (smoothness `q`), noisy samples with the symmetric KL
//! divergence between the two branches' predictions. The composite objective
//! is `l_c + lambda_b * l_b + lambda_n * l_n`.
//!
//! Gradients are taken with respect to pre-softmax logits; the trainer
//! composes them with the network backward pass. Probabilities are floored
//! at `clamp` before logarithms so one-hot inputs stay finite.

use crate::error::{Error, Result};
use crate::prob::{softmax, ProbDist, PROB_FLOOR};

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    /// GCE smoothness in (0, 1]. At `q = 1` GCE is mean absolute error; as
    /// `q → 0` it approaches cross-entropy.
    pub q: f64,
    /// Weight of the boundary-subset loss.
    pub lambda_b: f64,
    /// Weight of the noisy-subset consistency loss.
    pub lambda_n: f64,
    /// Probability floor applied before logarithms.
    pub clamp: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            q: 0.7,
            lambda_b: 1.0,
            lambda_n: 0.1,
            clamp: PROB_FLOOR,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::Config(format!("q = {} outside (0, 1]", self.q)));
        }
        if self.lambda_b < 0.0 || self.lambda_n < 0.0 {
            return Err(Error::Config(format!(
                "loss weights must be non-negative (lambda_b = {}, lambda_n = {})",
                self.lambda_b, self.lambda_n
            )));
        }
        if !(self.clamp > 0.0 && self.clamp <= 1e-6) {
            return Err(Error::Config(format!(
                "clamp = {} outside (0, 1e-6]",
                self.clamp
            )));
        }
        Ok(())
    }
}

/// The three per-subset losses and their weighted total, with the subset
/// sizes they were averaged over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_clean: f64,
    pub l_boundary: f64,
    pub l_noisy: f64,
    pub l_total: f64,
    pub n_clean: usize,
    pub n_boundary: usize,
    pub n_noisy: usize,
}

/// Mean cross-entropy `-ln(max(p[label], clamp))` over a batch. Empty
/// batches contribute exactly 0.
pub fn cross_entropy_batch(probs: &[ProbDist], labels: &[usize], clamp: f64) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Domain(format!(
            "{} distributions vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (p, &label) in probs.iter().zip(labels.iter()) {
        sum += -p.get(label)?.max(clamp).ln();
    }
    Ok(sum / probs.len() as f64)
}

/// Mean generalized cross-entropy `(1 - p[label]^q) / q` over a batch.
pub fn gce_batch(probs: &[ProbDist], labels: &[usize], q: f64, clamp: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("q = {q} outside (0, 1]")));
    }
    if probs.len() != labels.len() {
        return Err(Error::Domain(format!(
            "{} distributions vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (p, &label) in probs.iter().zip(labels.iter()) {
        sum += (1.0 - p.get(label)?.max(clamp).powf(q)) / q;
    }
    Ok(sum / probs.len() as f64)
}

fn floored(p: &ProbDist, clamp: f64) -> Vec<f64> {
    let raised: Vec<f64> = p.values().iter().map(|&v| v.max(clamp)).collect();
    let sum: f64 = raised.iter().sum();
    raised.into_iter().map(|v| v / sum).collect()
}

/// Symmetric KL divergence `KL(p1 || p2) + KL(p2 || p1)`, entries floored at
/// `clamp` and renormalized before the logs. Zero iff the floored
/// distributions coincide.
pub fn sym_kl(p1: &ProbDist, p2: &ProbDist, clamp: f64) -> Result<f64> {
    if p1.len() != p2.len() {
        return Err(Error::Domain(format!(
            "dimension mismatch {} vs {}",
            p1.len(),
            p2.len()
        )));
    }
    let a = floored(p1, clamp);
    let b = floored(p2, clamp);
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        total += (x - y) * (x.ln() - y.ln());
    }
    Ok(total.max(0.0))
}

/// Composite objective `l_c + lambda_b * l_b + lambda_n * l_n`.
pub fn total_loss(
    l_clean: f64,
    l_boundary: f64,
    l_noisy: f64,
    sizes: (usize, usize, usize),
    params: &LossParams,
) -> LossBreakdown {
    LossBreakdown {
        l_clean,
        l_boundary,
        l_noisy,
        l_total: l_clean + params.lambda_b * l_boundary + params.lambda_n * l_noisy,
        n_clean: sizes.0,
        n_boundary: sizes.1,
        n_noisy: sizes.2,
    }
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 logits, got {}",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite logits".into()));
    }
    Ok(())
}

/// Gradient of `-ln(max(softmax(z)[label], clamp))` with respect to `z`:
/// `softmax(z) - onehot(label)` while the clamp is inactive, zero otherwise.
pub fn ce_grad_logits(logits: &[f64], label: usize, clamp: f64) -> Result<Vec<f64>> {
    check_logits(logits)?;
    if label >= logits.len() {
        return Err(Error::Domain(format!(
            "label {label} out of range 0..{}",
            logits.len()
        )));
    }
    let p = softmax(logits)?;
    if p.values()[label] <= clamp {
        return Ok(vec![0.0; logits.len()]);
    }
    let mut grad = p.values().to_vec();
    grad[label] -= 1.0;
    Ok(grad)
}

/// Gradient of `(1 - max(softmax(z)[label], clamp)^q) / q` with respect to
/// `z`: the cross-entropy gradient scaled by `p[label]^q`.
pub fn gce_grad_logits(logits: &[f64], label: usize, q: f64, clamp: f64) -> Result<Vec<f64>> {
    check_logits(logits)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("q = {q} outside (0, 1]")));
    }
    if label >= logits.len() {
        return Err(Error::Domain(format!(
            "label {label} out of range 0..{}",
            logits.len()
        )));
    }
    let p = softmax(logits)?;
    let py = p.values()[label];
    if py <= clamp {
        return Ok(vec![0.0; logits.len()]);
    }
    let scale = py.powf(q);
    let grad = p
        .values()
        .iter()
        .enumerate()
        .map(|(k, &pk)| scale * (pk - if k == label { 1.0 } else { 0.0 }))
        .collect();
    Ok(grad)
}

/// Gradients of the symmetric KL between `softmax(z1)` and `softmax(z2)`
/// with respect to both logit vectors.
///
/// With `g_i = ln(p_i/q_i) + 1 - q_i/p_i`, the first-branch gradient is
/// `p ⊙ (g - <g, p>)`; the second branch is symmetric. Exact while the
/// probability floor is inactive (always the case for bounded logits).
pub fn symkl_grad_logits(
    logits1: &[f64],
    logits2: &[f64],
    clamp: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_logits(logits1)?;
    check_logits(logits2)?;
    if logits1.len() != logits2.len() {
        return Err(Error::Domain(format!(
            "dimension mismatch {} vs {}",
            logits1.len(),
            logits2.len()
        )));
    }
    let p = floored(&softmax(logits1)?, clamp);
    let q = floored(&softmax(logits2)?, clamp);
    let branch = |own: &[f64], other: &[f64]| -> Vec<f64> {
        let g: Vec<f64> = own
            .iter()
            .zip(other.iter())
            .map(|(&a, &b)| (a / b).ln() + 1.0 - b / a)
            .collect();
        let dot: f64 = g.iter().zip(own.iter()).map(|(gi, pi)| gi * pi).sum();
        own.iter().zip(g.iter()).map(|(&pi, &gi)| pi * (gi - dot)).collect()
    };
    Ok((branch(&p, &q), branch(&q, &p)))
}
