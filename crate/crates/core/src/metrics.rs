//! Evaluation metrics and post-hoc calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_softmax_slice, softmax_slice};
use crate::soft_labels::{argmax, ClassProbs, LabelMap};

const LOG_FLOOR: f64 = 1e-12;

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Argmax of every row.
pub fn predicted_classes<P: AsRef<[f64]>>(rows: &[P]) -> Vec<usize> {
    rows.iter().map(|r| argmax(r.as_ref())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub map: f64,
    /// `None` for labels without a single positive sample.
    pub per_label: Vec<Option<f64>>,
}

impl MapResult {
    pub fn skipped_labels(&self) -> Vec<usize> {
        self.per_label
            .iter()
            .enumerate()
            .filter_map(|(i, ap)| ap.is_none().then_some(i))
            .collect()
    }
}

/// All-points average precision of one ranking. Ties in score keep
/// ascending sample order.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<Option<f64>> {
    if scores.len() != positives.len() {
        return Err(Error::shape("scores and labels differ in length"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positives[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok((hits > 0).then(|| sum / hits as f64))
}

/// Mean of per-label AP over labels that have at least one positive.
pub fn mean_average_precision<S: AsRef<[f64]>, L: AsRef<[bool]>>(scores: &[S], labels: &[L]) -> Result<MapResult> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} score rows for {} label rows", scores.len(), labels.len())));
    }
    let Some(first) = scores.first() else {
        return Err(Error::invalid("MAP of an empty set"));
    };
    let n_labels = first.as_ref().len();
    for (s, l) in scores.iter().zip(labels) {
        if s.as_ref().len() != n_labels || l.as_ref().len() != n_labels {
            return Err(Error::shape("ragged score or label rows"));
        }
    }
    let mut per_label = Vec::with_capacity(n_labels);
    for j in 0..n_labels {
        let col: Vec<f64> = scores.iter().map(|s| s.as_ref()[j]).collect();
        let pos: Vec<bool> = labels.iter().map(|l| l.as_ref()[j]).collect();
        per_label.push(average_precision(&col, &pos)?);
    }
    let present: Vec<f64> = per_label.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::invalid("no label has a positive sample"));
    }
    Ok(MapResult {
        map: present.iter().sum::<f64>() / present.len() as f64,
        per_label,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationScores {
    /// Indexed by class; `None` for the background and for classes absent
    /// from both prediction and ground truth.
    pub iou: Vec<Option<f64>>,
    pub dice: Vec<Option<f64>>,
    /// NaN when no foreground class is present anywhere.
    pub mean_iou: f64,
    pub mean_dice: f64,
}

/// Dataset-level IoU and Dice per foreground class.
pub fn iou_dice(pred: &[LabelMap], gt: &[LabelMap], num_classes: usize, background: usize) -> Result<SegmentationScores> {
    if pred.len() != gt.len() {
        return Err(Error::shape(format!("{} predicted maps for {} ground truths", pred.len(), gt.len())));
    }
    let mut inter = vec![0u64; num_classes];
    let mut pred_area = vec![0u64; num_classes];
    let mut gt_area = vec![0u64; num_classes];
    for (p, g) in pred.iter().zip(gt) {
        if p.height() != g.height() || p.width() != g.width() {
            return Err(Error::shape("predicted and ground-truth maps differ in size"));
        }
        for (&a, &b) in p.labels().iter().zip(g.labels()) {
            if a >= num_classes || b >= num_classes {
                return Err(Error::invalid(format!("class index out of range for K={num_classes}")));
            }
            pred_area[a] += 1;
            gt_area[b] += 1;
            if a == b {
                inter[a] += 1;
            }
        }
    }
    let mut iou = vec![None; num_classes];
    let mut dice = vec![None; num_classes];
    for c in (0..num_classes).filter(|&c| c != background) {
        let union = pred_area[c] + gt_area[c] - inter[c];
        if union == 0 {
            continue;
        }
        iou[c] = Some(inter[c] as f64 / union as f64);
        dice[c] = Some(2.0 * inter[c] as f64 / (pred_area[c] + gt_area[c]) as f64);
    }
    let mean = |v: &[Option<f64>]| {
        let xs: Vec<f64> = v.iter().flatten().copied().collect();
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    Ok(SegmentationScores {
        mean_iou: mean(&iou),
        mean_dice: mean(&dice),
        iou,
        dice,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lower: f64,
    pub upper: f64,
    /// Mean confidence; 0 for an empty bin.
    pub confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub ece: f64,
    pub brier: Option<f64>,
    pub nll: Option<f64>,
    pub bins: Vec<BinStat>,
}

impl CalibrationReport {
    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn sample_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Bin of `c` among `bins` equal-width bins: left-closed, except the top bin
/// which also takes `c == 1`. Edges are `b / bins` exactly as computed.
pub fn bin_index(c: f64, bins: usize) -> usize {
    let edge = |b: usize| b as f64 / bins as f64;
    let mut b = ((c * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    while b > 0 && c < edge(b) {
        b -= 1;
    }
    while b + 1 < bins && c >= edge(b + 1) {
        b += 1;
    }
    b
}

/// Expected calibration error over equal-width confidence bins.
pub fn ece(confidences: &[f64], correct: &[bool], bins: usize) -> Result<CalibrationReport> {
    if confidences.len() != correct.len() {
        return Err(Error::shape("confidences and correctness flags differ in length"));
    }
    if bins == 0 {
        return Err(Error::invalid("ECE needs at least one bin"));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::invalid(format!("confidence {c} outside [0,1]")));
    }
    let mut sum_conf = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    let mut counts = vec![0usize; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = bin_index(c, bins);
        sum_conf[b] += c;
        counts[b] += 1;
        hits[b] += ok as usize;
    }
    let n = confidences.len() as f64;
    let mut total = 0.0;
    let mut stats = Vec::with_capacity(bins);
    for b in 0..bins {
        let (confidence, acc) = if counts[b] == 0 {
            (0.0, 0.0)
        } else {
            (sum_conf[b] / counts[b] as f64, hits[b] as f64 / counts[b] as f64)
        };
        if counts[b] > 0 {
            total += (counts[b] as f64 / n) * (acc - confidence).abs();
        }
        stats.push(BinStat {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            confidence,
            accuracy: acc,
            count: counts[b],
        });
    }
    Ok(CalibrationReport {
        ece: total,
        brier: None,
        nll: None,
        bins: stats,
    })
}

/// ECE, Brier, and NLL of predicted distributions against class labels.
pub fn calibration_report<P: AsRef<[f64]>>(probs: &[P], labels: &[usize], bins: usize) -> Result<CalibrationReport> {
    let b = brier(probs, labels)?;
    let n = nll(probs, labels)?;
    let conf: Vec<f64> = probs
        .iter()
        .map(|p| p.as_ref().iter().copied().fold(0.0, f64::max).min(1.0))
        .collect();
    let correct: Vec<bool> = probs.iter().zip(labels).map(|(p, &y)| argmax(p.as_ref()) == y).collect();
    let mut report = ece(&conf, &correct, bins)?;
    report.brier = Some(b);
    report.nll = Some(n);
    Ok(report)
}

fn check_probs<P: AsRef<[f64]>>(probs: &[P], labels: &[usize]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::shape(format!("{} probability rows for {} labels", probs.len(), labels.len())));
    }
    if probs.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    for (p, &y) in probs.iter().zip(labels) {
        let p = p.as_ref();
        if y >= p.len() {
            return Err(Error::invalid(format!("label {y} out of range for K={}", p.len())));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-6 || p.iter().any(|v| *v < 0.0) {
            return Err(Error::invalid(format!("probabilities are not normalized (sum {s})")));
        }
    }
    Ok(())
}

/// Mean over samples of `Σ_k (p_k − onehot_k)²`.
pub fn brier<P: AsRef<[f64]>>(probs: &[P], labels: &[usize]) -> Result<f64> {
    check_probs(probs, labels)?;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            p.as_ref()
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let d = v - if k == y { 1.0 } else { 0.0 };
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Mean negative log-likelihood of the true class.
pub fn nll<P: AsRef<[f64]>>(probs: &[P], labels: &[usize]) -> Result<f64> {
    check_probs(probs, labels)?;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| -p.as_ref()[y].max(LOG_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Mean NLL of `softmax(logits / t)`.
pub fn nll_at_temperature<P: AsRef<[f64]>>(logits: &[P], labels: &[usize], t: f64) -> f64 {
    let mut scaled = Vec::new();
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(z, &y)| {
            scaled.clear();
            scaled.extend(z.as_ref().iter().map(|v| v / t));
            -log_softmax_slice(&scaled)[y].max(LOG_FLOOR.ln())
        })
        .sum();
    total / labels.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub temperature: f64,
}

impl TemperatureModel {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
        }
        Ok(TemperatureModel { temperature })
    }

    pub fn apply(&self, logits: &[f64]) -> ClassProbs {
        ClassProbs::new(scaled_softmax(logits, self.temperature)).expect("softmax output is a distribution")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureFit {
    pub model: TemperatureModel,
    pub nll: f64,
    pub nll_at_one: f64,
}

const LOG_T_RANGE: (f64, f64) = (-2.995_732_273_553_991, 2.995_732_273_553_991);
const LOG_T_TOL: f64 = 1e-4;

/// Golden-section search for the temperature minimizing validation NLL.
/// `T = 1` is kept whenever the search does no better.
pub fn fit_temperature<P: AsRef<[f64]>>(logits: &[P], labels: &[usize]) -> Result<TemperatureFit> {
    if logits.len() != labels.len() {
        return Err(Error::shape(format!("{} logit rows for {} labels", logits.len(), labels.len())));
    }
    if logits.is_empty() {
        return Err(Error::invalid("cannot fit a temperature on an empty set"));
    }
    for (z, &y) in logits.iter().zip(labels) {
        let z = z.as_ref();
        if y >= z.len() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("logits must be finite and labels in range"));
        }
    }
    let f = |log_t: f64| nll_at_temperature(logits, labels, log_t.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = LOG_T_RANGE;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > LOG_T_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let log_t = 0.5 * (a + b);
    let found = f(log_t);
    let at_one = f(0.0);
    let (t, best) = if found <= at_one { (log_t.exp(), found) } else { (1.0, at_one) };
    Ok(TemperatureFit {
        model: TemperatureModel::new(t)?,
        nll: best,
        nll_at_one: at_one,
    })
}

fn scaled_softmax(logits: &[f64], t: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|v| v / t).collect();
    softmax_slice(&scaled)
}

pub fn apply_temperature(logits: &[f64], t: f64) -> Result<ClassProbs> {
    Ok(TemperatureModel::new(t)?.apply(logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn ap_examples() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap().unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        let ap = average_precision(&[0.9, 0.8, 0.7], &[false, false, true]).unwrap().unwrap();
        assert!((ap - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(average_precision(&[0.5, 0.1], &[false, false]).unwrap(), None);
        // tie: earlier index ranks first
        let ap = average_precision(&[0.5, 0.5], &[false, true]).unwrap().unwrap();
        assert!((ap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn map_skips_labels_without_positives() {
        let scores = vec![vec![0.9, 0.1, 0.3], vec![0.2, 0.8, 0.4]];
        let labels = vec![vec![true, false, false], vec![false, true, false]];
        let r = mean_average_precision(&scores, &labels).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.skipped_labels(), vec![2]);
    }

    fn map(h: usize, w: usize, v: Vec<usize>) -> LabelMap {
        LabelMap::new(h, w, 2, v).unwrap()
    }

    #[test]
    fn iou_dice_examples() {
        let a = map(1, 4, vec![1, 1, 0, 0]);
        let s = iou_dice(&[a.clone()], &[a.clone()], 2, 0).unwrap();
        assert_eq!((s.mean_iou, s.mean_dice), (1.0, 1.0));
        let b = map(1, 4, vec![0, 0, 1, 1]);
        let s = iou_dice(&[a.clone()], &[b], 2, 0).unwrap();
        assert_eq!((s.mean_iou, s.mean_dice), (0.0, 0.0));
        let c = map(1, 4, vec![0, 1, 1, 0]);
        let s = iou_dice(&[a], &[c], 2, 0).unwrap();
        assert!((s.mean_iou - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.mean_dice - 0.5).abs() < 1e-12);
    }

    #[test]
    fn absent_class_is_excluded() {
        let a = LabelMap::new(1, 2, 3, vec![0, 1]).unwrap();
        let s = iou_dice(&[a.clone()], &[a], 3, 0).unwrap();
        assert_eq!(s.iou, vec![None, Some(1.0), None]);
        assert_eq!(s.mean_iou, 1.0);
    }

    #[test]
    fn ece_examples() {
        assert_eq!(ece(&[1.0, 1.0], &[true, true], 10).unwrap().ece, 0.0);
        let r = ece(&[0.8, 0.6], &[true, false], 10).unwrap();
        assert!((r.ece - 0.4).abs() < 1e-12);
        assert_eq!(r.sample_count(), 2);
        assert_eq!(r.bins[9].count, 0);
        assert_eq!(r.bins[8].count, 1);
    }

    #[test]
    fn bin_edges() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.3, 10), 3);
        assert_eq!(bin_index(0.29999999999999993, 10), 2);
        assert_eq!(bin_index(0.7, 10), 7);
        assert_eq!(bin_index(0.5, 1), 0);
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&[vec![1.0, 0.0]], &[0]).unwrap(), 0.0);
        assert!((brier(&[vec![0.5, 0.5]], &[0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(brier(&[vec![0.0, 1.0]], &[0]).unwrap(), 2.0);
        assert!(brier(&[vec![0.5, 0.6]], &[0]).is_err());
    }

    #[test]
    fn temperature_examples() {
        let p = apply_temperature(&[2.0, 0.0], 2.0).unwrap();
        assert!((p.probs()[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((p.probs()[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
        let p = apply_temperature(&[1.0, -3.0, 0.5], 1.0).unwrap();
        assert_eq!(p.probs(), softmax_slice(&[1.0, -3.0, 0.5]).as_slice());
        let p = apply_temperature(&[5.0, 0.0], 1e9).unwrap();
        assert!((p.probs()[0] - 0.5).abs() < 1e-6);
        assert!(apply_temperature(&[1.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn temperature_keeps_argmax(z in prop::collection::vec(-20.0f64..20.0, 2..8), t in 0.01f64..100.0) {
            let p = apply_temperature(&z, t).unwrap();
            prop_assert_eq!(p.argmax(), argmax(&z));
        }

        #[test]
        fn dice_dominates_iou(pred in prop::collection::vec(0usize..3, 12), gt in prop::collection::vec(0usize..3, 12)) {
            let p = LabelMap::new(3, 4, 3, pred).unwrap();
            let g = LabelMap::new(3, 4, 3, gt).unwrap();
            let s = iou_dice(&[p], &[g], 3, 0).unwrap();
            for (i, d) in s.iou.iter().zip(&s.dice) {
                if let (Some(i), Some(d)) = (i, d) {
                    prop_assert!(i <= d);
                    prop_assert!((d - 2.0 * i / (1.0 + i)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn brier_in_range(rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 1..10), y in 0usize..3) {
            let probs: Vec<Vec<f64>> = rows.iter().map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            }).collect();
            let labels = vec![y; probs.len()];
            let b = brier(&probs, &labels).unwrap();
            prop_assert!((0.0..=2.0).contains(&b));
        }
    }
}
