//! Confidence-aware pacing.
//!
//! A frozen baseline scores every training sample (or pixel) by its
//! confidence in the ground truth; the bank keeps them sorted easiest first.
//! A [`PacePlan`] decides how many of them are active at each epoch:
//! `L = (λ + μ·e)·N` before epoch `E_all·E`, and all `N` afterwards, with
//! `μ = (1 − λ) / (E_all·E)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::soft_labels::LabelMap;

/// Absorbs representation error in `(λ + μ·e)·N` before flooring, so that
/// e.g. `0.62·1000` yields 620 rather than 619.
const COUNT_SLACK: f64 = 1e-7;

/// `μ = (1 − λ) / (E_all · E)`.
pub fn pace_parameter(lambda: f64, epoch_ratio: f64, epochs: usize) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::invalid(format!("initial ratio must lie in (0, 1], got {lambda}")));
    }
    if !(epoch_ratio > 0.0 && epoch_ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "epoch ratio must lie in (0, 1], got {epoch_ratio}"
        )));
    }
    if epochs == 0 {
        return Err(Error::invalid("total epochs must be at least 1"));
    }
    Ok((1.0 - lambda) / (epoch_ratio * epochs as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacePlan {
    lambda: f64,
    epoch_ratio: f64,
    epochs: usize,
    total: usize,
    mu: f64,
}

impl PacePlan {
    pub fn new(lambda: f64, epoch_ratio: f64, epochs: usize, total: usize) -> Result<Self> {
        let mu = pace_parameter(lambda, epoch_ratio, epochs)?;
        if total == 0 {
            return Err(Error::invalid("pace plan needs at least one sample"));
        }
        Ok(PacePlan {
            lambda,
            epoch_ratio,
            epochs,
            total,
            mu,
        })
    }

    /// A plan that always uses everything.
    pub fn full(epochs: usize, total: usize) -> Result<Self> {
        PacePlan::new(1.0, 1.0, epochs, total)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epoch_ratio(&self) -> f64 {
        self.epoch_ratio
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// First epoch at which every sample is active (`⌈E_all·E⌉`).
    pub fn full_data_epoch(&self) -> usize {
        (self.epoch_ratio * self.epochs as f64 - COUNT_SLACK).ceil().max(0.0) as usize
    }

    /// Number of active samples during `epoch`, floored and clamped to `[1, N]`.
    pub fn active_count(&self, epoch: usize) -> usize {
        if epoch >= self.full_data_epoch() {
            return self.total;
        }
        let raw = (self.lambda + self.mu * epoch as f64) * self.total as f64;
        ((raw + COUNT_SLACK).floor() as usize).clamp(1, self.total)
    }
}

/// Which baseline produced a bank's scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankSource {
    /// Cross-entropy baseline, raw softmax.
    Plain,
    /// Same baseline with post-hoc temperature scaling.
    TemperatureScaled,
    /// A separately trained constant label-smoothing model.
    LabelSmoothed,
}

impl BankSource {
    /// Short tag written to bank files.
    pub fn tag(&self) -> &'static str {
        match self {
            BankSource::Plain => "plain",
            BankSource::TemperatureScaled => "ts",
            BankSource::LabelSmoothed => "ls",
        }
    }
}

impl std::str::FromStr for BankSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(BankSource::Plain),
            "ts" | "temperature_scaled" => Ok(BankSource::TemperatureScaled),
            "ls" | "label_smoothed" => Ok(BankSource::LabelSmoothed),
            other => Err(Error::invalid(format!("unknown bank source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankEntry {
    pub sample_id: usize,
    pub score: f64,
}

/// Samples sorted by confidence, easiest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBank {
    entries: Vec<BankEntry>,
    source: BankSource,
}

fn check_score(score: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::invalid(format!("confidence score {score} outside [0, 1]")));
    }
    Ok(())
}

impl SampleBank {
    /// Wraps already-sorted entries, checking order and id uniqueness.
    pub fn new(entries: Vec<BankEntry>, source: BankSource) -> Result<Self> {
        for e in &entries {
            check_score(e.score)?;
        }
        if entries.windows(2).any(|w| w[1].score > w[0].score) {
            return Err(Error::invalid("bank scores must be non-increasing"));
        }
        let mut ids: Vec<usize> = entries.iter().map(|e| e.sample_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("bank sample ids must be unique"));
        }
        Ok(SampleBank { entries, source })
    }

    /// Sorts per-sample scores (indexed by sample id) descending; ties keep
    /// ascending id order.
    pub fn from_scores(scores: &[f64], source: BankSource) -> Result<Self> {
        for &s in scores {
            check_score(s)?;
        }
        let mut entries: Vec<BankEntry> = scores
            .iter()
            .enumerate()
            .map(|(sample_id, &score)| BankEntry { sample_id, score })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(SampleBank { entries, source })
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn source(&self) -> BankSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sample ids, easiest first.
    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.sample_id).collect()
    }
}

/// Score = predicted probability of the true class.
pub fn build_bank_multiclass<P: AsRef<[f64]>>(
    probs: &[P],
    labels: &[usize],
    source: BankSource,
) -> Result<SampleBank> {
    if probs.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} probability rows for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let scores = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            p.as_ref()
                .get(y)
                .copied()
                .ok_or_else(|| Error::invalid(format!("label {y} outside probability row")))
        })
        .collect::<Result<Vec<_>>>()?;
    SampleBank::from_scores(&scores, source)
}

/// Score = mean predicted probability over positive labels, or over all
/// labels when the sample has none.
pub fn build_bank_multilabel<P: AsRef<[f64]>, L: AsRef<[bool]>>(
    probs: &[P],
    labels: &[L],
    source: BankSource,
) -> Result<SampleBank> {
    if probs.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} probability rows for {} label rows",
            probs.len(),
            labels.len()
        )));
    }
    let mut scores = Vec::with_capacity(probs.len());
    for (p, l) in probs.iter().zip(labels) {
        let (p, l) = (p.as_ref(), l.as_ref());
        if p.len() != l.len() || p.is_empty() {
            return Err(Error::invalid("probability and label rows differ in length"));
        }
        let positives: Vec<f64> = p.iter().zip(l).filter(|(_, &on)| on).map(|(v, _)| *v).collect();
        let pool = if positives.is_empty() { p.to_vec() } else { positives };
        scores.push(pool.iter().sum::<f64>() / pool.len() as f64);
    }
    SampleBank::from_scores(&scores, source)
}

fn check_probmap(probmap: &Tensor, labels: &LabelMap) -> Result<()> {
    let want = [labels.num_classes(), labels.height(), labels.width()];
    if probmap.shape() != want {
        return Err(Error::shape(format!(
            "probability map {:?} does not match label map {want:?}",
            probmap.shape()
        )));
    }
    Ok(())
}

fn true_class_prob(probmap: &Tensor, labels: &LabelMap, pixel: usize) -> f64 {
    let n = labels.num_pixels();
    probmap.data()[labels.labels()[pixel] * n + pixel]
}

/// Frame score: mean true-class probability over ground-truth foreground
/// pixels; frames with no foreground score exactly 0. `probmaps` are
/// `[K, H, W]` softmax outputs.
pub fn build_bank_segmentation(
    probmaps: &[Tensor],
    labelmaps: &[LabelMap],
    background: usize,
    source: BankSource,
) -> Result<SampleBank> {
    if probmaps.len() != labelmaps.len() {
        return Err(Error::shape(format!(
            "{} probability maps for {} label maps",
            probmaps.len(),
            labelmaps.len()
        )));
    }
    let mut scores = Vec::with_capacity(probmaps.len());
    for (pm, lm) in probmaps.iter().zip(labelmaps) {
        check_probmap(pm, lm)?;
        let (mut total, mut count) = (0.0, 0usize);
        for (p, &l) in lm.labels().iter().enumerate() {
            if l != background {
                total += true_class_prob(pm, lm, p);
                count += 1;
            }
        }
        scores.push(if count == 0 { 0.0 } else { total / count as f64 });
    }
    SampleBank::from_scores(&scores, source)
}

/// Per-pixel confidences of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelScores {
    pub height: usize,
    pub width: usize,
    pub scores: Vec<f64>,
}

/// Per-pixel confidences for a whole training set, with a global easy-first
/// ranking (ties by frame, then pixel index).
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBank {
    frames: Vec<PixelScores>,
    rank: Vec<usize>,
}

impl PixelBank {
    pub fn new(frames: Vec<PixelScores>) -> Result<Self> {
        for f in &frames {
            if f.scores.len() != f.height * f.width {
                return Err(Error::shape(format!(
                    "{}x{} frame has {} scores",
                    f.height,
                    f.width,
                    f.scores.len()
                )));
            }
            for &s in &f.scores {
                check_score(s)?;
            }
        }
        let flat: Vec<f64> = frames.iter().flat_map(|f| f.scores.iter().copied()).collect();
        let mut order: Vec<usize> = (0..flat.len()).collect();
        order.sort_by(|&a, &b| flat[b].total_cmp(&flat[a]));
        let mut rank = vec![0; flat.len()];
        for (r, &p) in order.iter().enumerate() {
            rank[p] = r;
        }
        Ok(PixelBank { frames, rank })
    }

    pub fn frames(&self) -> &[PixelScores] {
        &self.frames
    }

    pub fn total_pixels(&self) -> usize {
        self.rank.len()
    }
}

/// Per-pixel score = predicted probability of the pixel's true class.
pub fn build_pixel_bank(probmaps: &[Tensor], labelmaps: &[LabelMap]) -> Result<PixelBank> {
    if probmaps.len() != labelmaps.len() {
        return Err(Error::shape(format!(
            "{} probability maps for {} label maps",
            probmaps.len(),
            labelmaps.len()
        )));
    }
    let frames = probmaps
        .iter()
        .zip(labelmaps)
        .map(|(pm, lm)| {
            check_probmap(pm, lm)?;
            Ok(PixelScores {
                height: lm.height(),
                width: lm.width(),
                scores: (0..lm.num_pixels()).map(|p| true_class_prob(pm, lm, p)).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PixelBank::new(frames)
}

/// The first `active_count(epoch)` sample ids of the bank, in bank order.
pub fn active_set(bank: &SampleBank, plan: &PacePlan, epoch: usize) -> Result<Vec<usize>> {
    if bank.len() != plan.total() {
        return Err(Error::invalid(format!(
            "bank holds {} samples but the plan expects {}",
            bank.len(),
            plan.total()
        )));
    }
    Ok(bank.entries[..plan.active_count(epoch)]
        .iter()
        .map(|e| e.sample_id)
        .collect())
}

/// Per-frame masks selecting the globally top `active_count(epoch)` pixels.
pub fn pixel_mask_at(bank: &PixelBank, plan: &PacePlan, epoch: usize) -> Result<Vec<Vec<bool>>> {
    if bank.total_pixels() != plan.total() {
        return Err(Error::invalid(format!(
            "pixel bank holds {} pixels but the plan expects {}",
            bank.total_pixels(),
            plan.total()
        )));
    }
    let budget = plan.active_count(epoch);
    let mut offset = 0;
    Ok(bank
        .frames
        .iter()
        .map(|f| {
            let n = f.scores.len();
            let mask = bank.rank[offset..offset + n].iter().map(|&r| r < budget).collect();
            offset += n;
            mask
        })
        .collect())
}
