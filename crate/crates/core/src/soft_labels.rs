//! Soft targets from hard labels.
//!
//! * [`uls`]: uniform smoothing, `t·(1−ε) + ε/K`.
//! * [`svls`]: per-class one-hot planes convolved with a normalized Gaussian,
//!   so only pixels near a class boundary are softened.
//! * [`uls_svls`]: uniform smoothing first, then the spatial convolution.

use crate::error::{Error, Result};
use crate::numerics::{conv2d_same_into, gaussian_kernel2d, Kernel2D};

/// A hard class label out of `num_classes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotLabel {
    class_index: usize,
    num_classes: usize,
}

impl OneHotLabel {
    pub fn new(class_index: usize, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {num_classes}")));
        }
        if class_index >= num_classes {
            return Err(Error::invalid(format!(
                "class {class_index} out of range for {num_classes} classes"
            )));
        }
        Ok(OneHotLabel {
            class_index,
            num_classes,
        })
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbs(Vec<f64>);

impl ClassProbs {
    /// Validates non-negativity and unit sum (within 1e-9).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty probability vector"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(ClassProbs(probs))
    }

    pub fn one_hot(label: OneHotLabel) -> Self {
        let mut p = vec![0.0; label.num_classes];
        p[label.class_index] = 1.0;
        ClassProbs(p)
    }

    pub fn uniform(num_classes: usize) -> Self {
        ClassProbs(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest probability, first one on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-pixel hard labels on an `height`×`width` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    num_classes: usize,
    labels: Vec<usize>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, num_classes: usize, labels: Vec<usize>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("label map must be non-empty"));
        }
        if labels.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} label map needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {num_classes}")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabelMap {
            height,
            width,
            num_classes,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn at(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x]
    }

    pub fn num_pixels(&self) -> usize {
        self.labels.len()
    }
}

/// Per-pixel class distributions, stored channel-major (`[K][H][W]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMap {
    height: usize,
    width: usize,
    num_classes: usize,
    probs: Vec<f64>,
}

impl SoftLabelMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Channel-major storage: index `c * H * W + y * W + x`.
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, class: usize, y: usize, x: usize) -> f64 {
        self.probs[class * self.height * self.width + y * self.width + x]
    }

    /// Distribution at one pixel.
    pub fn pixel(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.num_classes).map(|c| self.prob(c, y, x)).collect()
    }

    /// Hard one-hot planes, no smoothing.
    pub fn one_hot(labels: &LabelMap) -> Self {
        uls_planes(labels, 0.0)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "smoothing factor must lie in [0, 1), got {epsilon}"
        )));
    }
    Ok(())
}

/// Uniform label smoothing of a single label.
pub fn uls(label: OneHotLabel, epsilon: f64) -> Result<ClassProbs> {
    check_epsilon(epsilon)?;
    let k = label.num_classes as f64;
    let probs = (0..label.num_classes)
        .map(|c| {
            let t = if c == label.class_index { 1.0 } else { 0.0 };
            t * (1.0 - epsilon) + epsilon / k
        })
        .collect();
    Ok(ClassProbs(probs))
}

/// Uniform smoothing of independent binary labels: each target `t` becomes
/// `t·(1−ε) + ε/2`.
pub fn smooth_multilabel(targets: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    targets
        .iter()
        .map(|&t| {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid(format!("binary target {t} outside [0, 1]")));
            }
            Ok(t * (1.0 - epsilon) + epsilon / 2.0)
        })
        .collect()
}

fn uls_planes(labels: &LabelMap, epsilon: f64) -> SoftLabelMap {
    let k = labels.num_classes;
    let n = labels.num_pixels();
    let off = epsilon / k as f64;
    let on = (1.0 - epsilon) + off;
    let mut probs = vec![off; k * n];
    for (p, &l) in labels.labels.iter().enumerate() {
        probs[l * n + p] = on;
    }
    SoftLabelMap {
        height: labels.height,
        width: labels.width,
        num_classes: k,
        probs,
    }
}

fn convolve_planes(map: SoftLabelMap, kernel: &Kernel2D) -> SoftLabelMap {
    let n = map.height * map.width;
    let mut out = vec![0.0; map.probs.len()];
    for (src, dst) in map.probs.chunks(n).zip(out.chunks_mut(n)) {
        conv2d_same_into(src, map.height, map.width, kernel, dst);
    }
    SoftLabelMap { probs: out, ..map }
}

/// Uniform smoothing applied at every pixel of a label map.
pub fn uls_map(labels: &LabelMap, epsilon: f64) -> Result<SoftLabelMap> {
    check_epsilon(epsilon)?;
    Ok(uls_planes(labels, epsilon))
}

/// Spatially varying smoothing: one-hot planes convolved with a `k`×`k`
/// Gaussian of width `sigma` (replicate padding).
pub fn svls(labels: &LabelMap, sigma: f64, k: usize) -> Result<SoftLabelMap> {
    let kernel = gaussian_kernel2d(k, sigma)?;
    Ok(convolve_planes(uls_planes(labels, 0.0), &kernel))
}

/// Uniform smoothing followed by the spatial convolution. The order matters:
/// the kernel acts on the already-flattened planes.
pub fn uls_svls(labels: &LabelMap, epsilon: f64, sigma: f64, k: usize) -> Result<SoftLabelMap> {
    check_epsilon(epsilon)?;
    let kernel = gaussian_kernel2d(k, sigma)?;
    Ok(convolve_planes(uls_planes(labels, epsilon), &kernel))
}

/// Soft targets for one epoch of segmentation training. A `sigma` of `None`
/// (or at most 1e-12) skips the spatial term.
pub fn segmentation_targets(
    labels: &LabelMap,
    epsilon: f64,
    sigma: Option<f64>,
    k: usize,
) -> Result<SoftLabelMap> {
    match sigma {
        Some(s) if s > 1e-12 => uls_svls(labels, epsilon, s, k),
        _ => uls_map(labels, epsilon),
    }
}
