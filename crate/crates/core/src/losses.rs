//! Soft-target losses and their gradients with respect to logits.

use crate::error::{Error, Result};
use crate::numerics::{log_softmax_slice, softmax_slice};
use crate::soft_labels::SoftLabelMap;

/// `ln(1e-12)`: floor applied to log-probabilities.
const LOG_FLOOR: f64 = -27.631_021_115_928_547;

/// A scalar loss and its gradient with respect to whatever the loss was
/// taken over (logits or model parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn check_distribution(target: &[f64]) -> Result<()> {
    if target.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::invalid("target entries must be finite and non-negative"));
    }
    let total: f64 = target.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("target sums to {total}, not 1")));
    }
    Ok(())
}

/// `−Σ tᵢ·log softmax(z)ᵢ`, gradient `softmax(z) − t`.
pub fn soft_ce(logits: &[f64], target: &[f64]) -> Result<LossValue> {
    if logits.len() != target.len() {
        return Err(Error::shape(format!(
            "{} logits for a {}-class target",
            logits.len(),
            target.len()
        )));
    }
    check_distribution(target)?;
    Ok(soft_ce_unchecked(logits, target))
}

pub(crate) fn soft_ce_unchecked(logits: &[f64], target: &[f64]) -> LossValue {
    let log_p = log_softmax_slice(logits);
    let loss = -target
        .iter()
        .zip(&log_p)
        .map(|(t, lp)| t * lp.max(LOG_FLOOR))
        .sum::<f64>();
    let grad = softmax_slice(logits)
        .iter()
        .zip(target)
        .map(|(p, t)| p - t)
        .collect();
    LossValue { loss, grad }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean over labels of binary cross-entropy with soft targets.
///
/// Per label the loss is `softplus(z) − t·z`, which equals
/// `−[t·log σ(z) + (1−t)·log(1−σ(z))]`; the gradient of the mean is
/// `(σ(z) − t) / L`.
pub fn soft_bce(logits: &[f64], targets: &[f64]) -> Result<LossValue> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(Error::shape(format!(
            "{} logits for {} binary targets",
            logits.len(),
            targets.len()
        )));
    }
    if let Some(t) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid(format!("binary target {t} outside [0, 1]")));
    }
    let n = logits.len() as f64;
    let loss = logits
        .iter()
        .zip(targets)
        .map(|(&z, &t)| softplus(z) - t * z)
        .sum::<f64>()
        / n;
    let grad = logits
        .iter()
        .zip(targets)
        .map(|(&z, &t)| (sigmoid(z) - t) / n)
        .collect();
    Ok(LossValue { loss, grad })
}

/// Summed per-pixel soft CE over the included pixels of one frame.
///
/// `logits` is `[K][H][W]` channel-major. Returns the summed loss, the
/// gradient of that sum, and the number of included pixels.
pub(crate) fn pixel_ce_sum(
    logits: &[f64],
    target: &SoftLabelMap,
    mask: Option<&[bool]>,
) -> Result<(LossValue, usize)> {
    let k = target.num_classes();
    let n = target.height() * target.width();
    if logits.len() != k * n {
        return Err(Error::shape(format!(
            "{} logits for a {k}x{}x{} target map",
            logits.len(),
            target.height(),
            target.width()
        )));
    }
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::shape(format!("mask has {} entries for {n} pixels", m.len())));
        }
    }
    let soft = target.as_slice();
    let mut grad = vec![0.0; k * n];
    let mut loss = 0.0;
    let mut count = 0;
    let mut z = vec![0.0; k];
    let mut t = vec![0.0; k];
    for p in 0..n {
        if mask.is_some_and(|m| !m[p]) {
            continue;
        }
        for c in 0..k {
            z[c] = logits[c * n + p];
            t[c] = soft[c * n + p];
        }
        let lv = soft_ce_unchecked(&z, &t);
        loss += lv.loss;
        for c in 0..k {
            grad[c * n + p] = lv.grad[c];
        }
        count += 1;
    }
    Ok((LossValue { loss, grad }, count))
}

/// Mean soft CE over the included pixels of a batch of frames.
///
/// Returns the gradient with respect to each frame's logits, concatenated.
/// A batch with no included pixel yields zero loss and zero gradient.
pub fn masked_pixel_ce(
    logit_maps: &[Vec<f64>],
    targets: &[SoftLabelMap],
    masks: &[Vec<bool>],
) -> Result<LossValue> {
    if logit_maps.len() != targets.len() || targets.len() != masks.len() {
        return Err(Error::shape(format!(
            "{} logit maps, {} targets, {} masks",
            logit_maps.len(),
            targets.len(),
            masks.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Vec::new();
    let mut count = 0;
    for ((z, t), m) in logit_maps.iter().zip(targets).zip(masks) {
        let (lv, c) = pixel_ce_sum(z, t, Some(m))?;
        loss += lv.loss;
        grad.extend(lv.grad);
        count += c;
    }
    if count == 0 {
        return Ok(LossValue {
            loss: 0.0,
            grad: vec![0.0; grad.len()],
        });
    }
    let scale = 1.0 / count as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(LossValue {
        loss: loss * scale,
        grad,
    })
}

/// Shannon entropy of a distribution, `0·log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}
