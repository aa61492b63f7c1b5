//! Labelled datasets, synthetic generators, and the CIFAR-10 binary layout.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::persist::atomic_write;
use crate::seed;
use crate::soft_labels::LabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Multiclass,
    Multilabel,
    Segmentation,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Multiclass => "multiclass",
            Task::Multilabel => "multilabel",
            Task::Segmentation => "segmentation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Multilabel(Vec<Vec<bool>>),
    Segmentation(Vec<LabelMap>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Multilabel(v) => v.len(),
            Targets::Segmentation(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Classes(_) => Task::Multiclass,
            Targets::Multilabel(_) => Task::Multilabel,
            Targets::Segmentation(_) => Task::Segmentation,
        }
    }

    fn subset(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes(v) => Targets::Classes(idx.iter().map(|&i| v[i]).collect()),
            Targets::Multilabel(v) => Targets::Multilabel(idx.iter().map(|&i| v[i].clone()).collect()),
            Targets::Segmentation(v) => Targets::Segmentation(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// Inputs and aligned targets. `num_classes` is K for class and pixel
/// targets (background included) and the label count for multi-label data.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Vec<Tensor>,
    targets: Targets,
    num_classes: usize,
    split: Split,
}

impl LabeledDataset {
    pub fn new(inputs: Vec<Tensor>, targets: Targets, num_classes: usize, split: Split) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::shape(format!("{} inputs for {} targets", inputs.len(), targets.len())));
        }
        match &targets {
            Targets::Classes(v) => {
                if num_classes < 2 {
                    return Err(Error::invalid("need at least two classes"));
                }
                if let Some(c) = v.iter().find(|&&c| c >= num_classes) {
                    return Err(Error::invalid(format!("class {c} out of range for K={num_classes}")));
                }
            }
            Targets::Multilabel(v) => {
                if v.iter().any(|l| l.len() != num_classes) {
                    return Err(Error::shape(format!("every label vector must have {num_classes} entries")));
                }
            }
            Targets::Segmentation(maps) => {
                for (x, m) in inputs.iter().zip(maps) {
                    if m.num_classes() != num_classes {
                        return Err(Error::invalid("label map class count disagrees with the dataset"));
                    }
                    match x.shape() {
                        &[_, h, w] if h == m.height() && w == m.width() => {}
                        s => return Err(Error::shape(format!("image {s:?} does not match its label map"))),
                    }
                }
            }
        }
        Ok(LabeledDataset {
            inputs,
            targets,
            num_classes,
            split,
        })
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn task(&self) -> Task {
        self.targets.task()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Class labels of a multi-class dataset.
    pub fn class_labels(&self) -> Result<&[usize]> {
        match &self.targets {
            Targets::Classes(v) => Ok(v),
            _ => Err(Error::invalid(format!("{} data has no class labels", self.task().name()))),
        }
    }

    pub fn subset(&self, idx: &[usize], split: Split) -> Result<LabeledDataset> {
        if let Some(&i) = idx.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("index {i} out of range for {} samples", self.len())));
        }
        Ok(LabeledDataset {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: self.targets.subset(idx),
            num_classes: self.num_classes,
            split,
        })
    }

    /// Same targets, new inputs (e.g. a corrupted copy).
    pub fn with_inputs(&self, inputs: Vec<Tensor>) -> Result<LabeledDataset> {
        LabeledDataset::new(inputs, self.targets.clone(), self.num_classes, self.split)
    }

    /// Seeded disjoint split; each side keeps the original sample order.
    pub fn split_train_val(&self, val_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::invalid("val_fraction must be in [0, 1)"));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut seed::rng(seed));
        let n_val = (self.len() as f64 * val_fraction).round() as usize;
        let mut val = order[..n_val].to_vec();
        let mut train = order[n_val..].to_vec();
        val.sort_unstable();
        train.sort_unstable();
        Ok((self.subset(&train, Split::Train)?, self.subset(&val, Split::Val)?))
    }
}

/// `k` Gaussian clusters in `[0,1]^dim` (features clipped to the cube).
/// Exactly `round(label_noise_rate · N)` labels are flipped to a different
/// class chosen uniformly.
pub fn gen_blobs(
    k: usize,
    n_per_class: usize,
    dim: usize,
    spread: f64,
    label_noise_rate: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if k < 2 || n_per_class == 0 || dim == 0 {
        return Err(Error::invalid("gen_blobs needs K ≥ 2, n ≥ 1, dim ≥ 1"));
    }
    if !(spread >= 0.0 && spread.is_finite()) || !(0.0..=1.0).contains(&label_noise_rate) {
        return Err(Error::invalid("spread must be ≥ 0 and label_noise_rate in [0, 1]"));
    }
    let mut rng = seed::rng(seed::sub_seed(seed, "blobs"));
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let n = k * n_per_class;
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let x: Vec<f64> = centers[c]
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (m + spread * z).clamp(0.0, 1.0)
            })
            .collect();
        inputs.push(Tensor::from_vec(x)?);
        labels.push(c);
    }
    let flips = (label_noise_rate * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &i in &order[..flips] {
        let shift = rng.random_range(1..k);
        labels[i] = (labels[i] + shift) % k;
    }
    LabeledDataset::new(inputs, Targets::Classes(labels), k, Split::Train)
}

/// Inputs uniform in `[0,1]^dim`; label `j` is a seeded linear concept with
/// roughly 30% positives. Every 25th sample is drawn to be all-negative.
pub fn gen_multilabel(labels: usize, n: usize, dim: usize, seed: u64) -> Result<LabeledDataset> {
    if labels == 0 || n == 0 || dim == 0 {
        return Err(Error::invalid("gen_multilabel needs L, n, dim ≥ 1"));
    }
    let mut rng = seed::rng(seed::sub_seed(seed, "multilabel"));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let weights: Vec<Vec<f64>> = (0..labels)
        .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    // threshold at the 70th percentile of the projection of uniform inputs
    let thresholds: Vec<f64> = weights
        .iter()
        .map(|w| 0.524 * (w.iter().map(|v| v * v).sum::<f64>() / 12.0).sqrt())
        .collect();
    let concept = |x: &[f64]| -> Vec<bool> {
        weights
            .iter()
            .zip(&thresholds)
            .map(|(w, t)| w.iter().zip(x).map(|(a, b)| a * (b - 0.5)).sum::<f64>() > *t)
            .collect()
    };
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let want_empty = i % 25 == 0;
        let mut x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let mut y = concept(&x);
        if want_empty {
            let mut tries = 0;
            while y.iter().any(|&b| b) && tries < 10_000 {
                x = (0..dim).map(|_| rng.random::<f64>()).collect();
                y = concept(&x);
                tries += 1;
            }
            y.iter_mut().for_each(|b| *b = false);
        }
        inputs.push(Tensor::from_vec(x)?);
        targets.push(y);
    }
    LabeledDataset::new(inputs, Targets::Multilabel(targets), labels, Split::Train)
}

const PALETTE: [[f64; 3]; 6] = [
    [0.9, 0.2, 0.2],
    [0.2, 0.8, 0.3],
    [0.25, 0.35, 0.95],
    [0.9, 0.85, 0.2],
    [0.8, 0.3, 0.85],
    [0.2, 0.85, 0.85],
];

/// RGB frames with coloured rectangles and disks; class 0 is background.
/// Every 8th frame (index 0, 8, 16, ...) has no foreground.
pub fn gen_shapes_seg(h: usize, w: usize, fg_classes: usize, n: usize, seed: u64) -> Result<LabeledDataset> {
    if h < 16 || w < 16 || fg_classes == 0 || fg_classes > PALETTE.len() || n == 0 {
        return Err(Error::invalid(format!(
            "gen_shapes_seg needs H, W ≥ 16, 1 ≤ classes ≤ {}, n ≥ 1",
            PALETTE.len()
        )));
    }
    let k = fg_classes + 1;
    let mut rng = seed::rng(seed::sub_seed(seed, "shapes"));
    let mut inputs = Vec::with_capacity(n);
    let mut maps = Vec::with_capacity(n);
    for i in 0..n {
        let mut labels = vec![0usize; h * w];
        if i % 8 != 0 {
            let shapes = rng.random_range(1..=3);
            for _ in 0..shapes {
                let class = rng.random_range(1..=fg_classes);
                let cy = rng.random_range(0..h) as f64;
                let cx = rng.random_range(0..w) as f64;
                let size = rng.random_range(3.0..(h.min(w) as f64 / 3.0));
                let disk = rng.random_bool(0.5);
                for y in 0..h {
                    for x in 0..w {
                        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                        let inside = if disk {
                            dy * dy + dx * dx <= size * size
                        } else {
                            dy.abs() <= size && dx.abs() <= 0.7 * size
                        };
                        if inside {
                            labels[y * w + x] = class;
                        }
                    }
                }
            }
        }
        let mut data = vec![0.0; 3 * h * w];
        for p in 0..h * w {
            let color = match labels[p] {
                0 => [0.3, 0.3, 0.3],
                c => PALETTE[c - 1],
            };
            for ch in 0..3 {
                let z: f64 = StandardNormal.sample(&mut rng);
                data[ch * h * w + p] = (color[ch] + 0.05 * z).clamp(0.0, 1.0);
            }
        }
        inputs.push(Tensor::new(vec![3, h, w], data)?);
        maps.push(LabelMap::new(h, w, k, labels)?);
    }
    LabeledDataset::new(inputs, Targets::Segmentation(maps), k, Split::Train)
}

pub const CIFAR_RECORD: usize = 3073;
const CIFAR_SIDE: usize = 32;

/// Records of one label byte followed by 32×32 R, G, B planes.
pub fn parse_cifar10(bytes: &[u8]) -> Result<LabeledDataset> {
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::format(
            "CIFAR-10 binary",
            format!("{} bytes is not a multiple of {CIFAR_RECORD}", bytes.len()),
        ));
    }
    let mut inputs = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    let mut labels = Vec::with_capacity(inputs.capacity());
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(Error::format("CIFAR-10 binary", format!("record {i} has label byte {}", rec[0])));
        }
        labels.push(rec[0] as usize);
        let px = rec[1..].iter().map(|&b| b as f64 / 255.0).collect();
        inputs.push(Tensor::new(vec![3, CIFAR_SIDE, CIFAR_SIDE], px)?);
    }
    LabeledDataset::new(inputs, Targets::Classes(labels), 10, Split::Train)
}

pub fn load_cifar10(path: &Path) -> Result<LabeledDataset> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    parse_cifar10(&std::fs::read(path)?)
}

pub fn encode_cifar10(data: &LabeledDataset) -> Result<Vec<u8>> {
    let labels = data.class_labels()?;
    let mut out = Vec::with_capacity(data.len() * CIFAR_RECORD);
    for (x, &y) in data.inputs().iter().zip(labels) {
        if x.shape() != [3, CIFAR_SIDE, CIFAR_SIDE] || y > 9 {
            return Err(Error::invalid("CIFAR-10 records are 3×32×32 images with labels 0–9"));
        }
        out.push(y as u8);
        out.extend(x.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn write_cifar10(path: &Path, data: &LabeledDataset) -> Result<()> {
    atomic_write(path, &encode_cifar10(data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_counts_and_noise() {
        let d = gen_blobs(8, 125, 4, 0.1, 0.2, 3).unwrap();
        assert_eq!(d.len(), 1000);
        let labels = d.class_labels().unwrap();
        let flipped = labels.iter().enumerate().filter(|(i, &c)| c != i % 8).count();
        assert_eq!(flipped, 200);
        assert!(d.inputs().iter().all(|x| x.data().iter().all(|v| (0.0..=1.0).contains(v))));
        assert_eq!(d, gen_blobs(8, 125, 4, 0.1, 0.2, 3).unwrap());
    }

    #[test]
    fn multilabel_has_empty_samples() {
        let d = gen_multilabel(8, 60, 10, 1).unwrap();
        let Targets::Multilabel(t) = d.targets() else { panic!() };
        assert!(t.iter().any(|l| l.iter().all(|b| !b)));
        assert!(t.iter().any(|l| l.iter().any(|&b| b)));
        assert_eq!(d, gen_multilabel(8, 60, 10, 1).unwrap());
    }

    #[test]
    fn shapes_have_empty_frames() {
        let d = gen_shapes_seg(16, 16, 2, 20, 5).unwrap();
        let Targets::Segmentation(maps) = d.targets() else { panic!() };
        assert!(maps.iter().any(|m| m.labels().iter().all(|&c| c == 0)));
        assert!(maps.iter().any(|m| m.labels().iter().any(|&c| c != 0)));
        assert!(maps.iter().all(|m| m.labels().iter().all(|&c| c < 3)));
        assert_eq!(d, gen_shapes_seg(16, 16, 2, 20, 5).unwrap());
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let d = gen_blobs(2, 50, 2, 0.1, 0.0, 0).unwrap();
        let (tr, va) = d.split_train_val(0.2, 9).unwrap();
        assert_eq!(tr.len() + va.len(), 100);
        assert_eq!(va.len(), 20);
        let mut all: Vec<&Tensor> = tr.inputs().iter().chain(va.inputs()).collect();
        all.sort_by(|a, b| a.data().partial_cmp(b.data()).unwrap());
        all.dedup();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn cifar_rejects_bad_lengths() {
        assert_eq!(parse_cifar10(&[]).unwrap().len(), 0);
        assert!(parse_cifar10(&[0u8; 3072]).is_err());
        let mut rec = vec![0u8; CIFAR_RECORD];
        rec[0] = 10;
        assert!(parse_cifar10(&rec).is_err());
    }
}
