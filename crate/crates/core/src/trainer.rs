//! The paced, smoothed training loop and its presets.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Task, Targets};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{reduce_gradients, sample_gradients, Architecture, Model, SampleTarget};
use crate::numerics::{softmax, softmax_slice, Tensor};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::pacing::{
    active_set, build_bank_multiclass, build_bank_multilabel, build_bank_segmentation, build_pixel_bank, pixel_mask_at,
    BankSource, PacePlan, PixelBank, SampleBank,
};
use crate::persist::{fmt_num, fmt_opt, Table};
use crate::schedules::SmoothingSchedule;
use crate::seed;
use crate::soft_labels::{argmax, segmentation_targets, smooth_multilabel, LabelMap, SoftLabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaceConfig {
    pub lambda: f64,
    pub epoch_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Sample,
    Pixel,
}

/// Architecture family; input and output sizes come from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    LinearSoftmax,
    Mlp { hidden: usize },
    TinyFcn { widths: [usize; 2] },
}

impl ModelConfig {
    pub fn architecture(&self, data: &LabeledDataset) -> Result<Architecture> {
        let first = data
            .inputs()
            .first()
            .ok_or_else(|| Error::invalid("training data is empty"))?;
        let outputs = data.num_classes();
        let arch = match (*self, data.task()) {
            (ModelConfig::LinearSoftmax, Task::Multiclass | Task::Multilabel) => Architecture::LinearSoftmax {
                inputs: first.len(),
                outputs,
            },
            (ModelConfig::Mlp { hidden }, Task::Multiclass | Task::Multilabel) => Architecture::Mlp {
                inputs: first.len(),
                hidden,
                outputs,
            },
            (ModelConfig::TinyFcn { widths }, Task::Segmentation) => Architecture::TinyFcn {
                in_channels: first.shape()[0],
                widths,
                classes: outputs,
            },
            (m, t) => {
                return Err(Error::Config(format!("model {m:?} cannot be trained on {} data", t.name())));
            }
        };
        arch.validate()?;
        Ok(arch)
    }
}

fn default_kernel() -> usize {
    3
}

fn default_lr_decay() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Learning-rate multiplier applied from `lr_decay_epoch` on.
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    /// Defaults to `floor(0.75·epochs)`.
    #[serde(default)]
    pub lr_decay_epoch: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub uls: Option<SmoothingSchedule>,
    #[serde(default)]
    pub svls: Option<SmoothingSchedule>,
    #[serde(default = "default_kernel")]
    pub svls_kernel: usize,
    #[serde(default)]
    pub pace: Option<PaceConfig>,
    #[serde(default)]
    pub bank: Option<PathBuf>,
    #[serde(default)]
    pub granularity: Granularity,
    #[serde(default)]
    pub background: usize,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive".into());
        }
        self.optimizer.validate()?;
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return fail(format!("lr_decay must be positive, got {}", self.lr_decay));
        }
        for s in [&self.uls, &self.svls].into_iter().flatten() {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.svls.is_some() && self.task != Task::Segmentation {
            return fail("an svls schedule requires task=segmentation".into());
        }
        if self.svls_kernel % 2 == 0 {
            return fail(format!("svls_kernel must be odd, got {}", self.svls_kernel));
        }
        if self.granularity == Granularity::Pixel && self.task != Task::Segmentation {
            return fail("pixel granularity requires task=segmentation".into());
        }
        if let Some(p) = &self.pace {
            crate::pacing::pace_parameter(p.lambda, p.epoch_ratio, self.epochs)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn decay_epoch(&self) -> usize {
        self.lr_decay_epoch.unwrap_or(self.epochs * 3 / 4)
    }

    /// Same run with all smoothing and pacing removed.
    pub fn as_baseline(&self) -> TrainConfig {
        TrainConfig {
            uls: None,
            svls: None,
            pace: None,
            bank: None,
            granularity: Granularity::Sample,
            ..self.clone()
        }
    }
}

/// Named configurations. Smoothing, pacing, and optimizer values follow the
/// published hyper-parameters; sizes and epoch counts are desk-scale.
pub const PRESETS: [&str; 8] = [
    "workflow_cls",
    "tool_cls",
    "segmentation",
    "anti",
    "random",
    "linear",
    "ls",
    "baseline",
];

pub fn preset(name: &str) -> Result<TrainConfig> {
    let cls = TrainConfig {
        task: Task::Multiclass,
        epochs: 50,
        batch_size: 32,
        optimizer: OptimizerConfig::sgd(5e-3, 0.9, 5e-3),
        lr_decay: 0.1,
        lr_decay_epoch: None,
        seed: 0,
        uls: Some(SmoothingSchedule::exponential(0.5, 0.9)?),
        svls: None,
        svls_kernel: 3,
        pace: Some(PaceConfig {
            lambda: 0.6,
            epoch_ratio: 0.4,
        }),
        bank: None,
        granularity: Granularity::Sample,
        background: 0,
        model: ModelConfig::Mlp { hidden: 32 },
    };
    let schedule_only = |uls: SmoothingSchedule| TrainConfig {
        uls: Some(uls),
        pace: None,
        ..cls.clone()
    };
    Ok(match name {
        "workflow_cls" => cls,
        "tool_cls" => TrainConfig {
            task: Task::Multilabel,
            optimizer: OptimizerConfig::adam(1e-4),
            lr_decay: 1.0,
            ..cls
        },
        "segmentation" => TrainConfig {
            task: Task::Segmentation,
            epochs: 20,
            batch_size: 8,
            optimizer: OptimizerConfig::adam(1e-4),
            lr_decay: 1.0,
            uls: Some(SmoothingSchedule::exponential(0.6, 0.9)?),
            svls: Some(SmoothingSchedule::exponential(0.9, 0.5)?),
            pace: Some(PaceConfig {
                lambda: 0.8,
                epoch_ratio: 0.4,
            }),
            granularity: Granularity::Pixel,
            model: ModelConfig::TinyFcn { widths: [8, 8] },
            ..cls
        },
        "anti" => schedule_only(SmoothingSchedule::anti(0.005, 1.1, 0.5)?),
        "random" => schedule_only(SmoothingSchedule::random(0.0, 0.5, 0)?),
        "linear" => schedule_only(SmoothingSchedule::linear(0.5, 0.015)?),
        "ls" => schedule_only(SmoothingSchedule::constant(0.1)?),
        "baseline" => cls.as_baseline(),
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}` (known: {})",
                PRESETS.join(", ")
            )))
        }
    })
}

/// Easy-first ordering used for pacing.
#[derive(Debug, Clone, PartialEq)]
pub enum Curriculum {
    Samples(SampleBank),
    Pixels(PixelBank),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Samples, or pixels under pixel granularity, trained this epoch.
    pub active_count: usize,
    pub eps: f64,
    pub sigma: Option<f64>,
    pub train_loss: f64,
    pub metrics: Vec<(String, f64)>,
}

/// Per-sample gradient norms accumulated over one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientProbe {
    pub epoch: usize,
    pub norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    pub records: Vec<EpochRecord>,
    pub probes: Vec<GradientProbe>,
}

pub fn metric_names(task: Task) -> &'static [&'static str] {
    match task {
        Task::Multiclass => &["val_accuracy", "val_nll", "val_ece"],
        Task::Multilabel => &["val_map"],
        Task::Segmentation => &["val_miou", "val_mdice"],
    }
}

/// How per-sample targets are formed in an epoch.
#[derive(Debug, Clone, Copy)]
enum TargetMode {
    OneHot,
    Smoothed { eps: f64, sigma: Option<f64>, kernel: usize },
}

enum Owned {
    Vector(Vec<f64>),
    Map(SoftLabelMap),
}

fn build_target(data: &LabeledDataset, i: usize, mode: TargetMode) -> Result<Owned> {
    let k = data.num_classes();
    Ok(match (data.targets(), mode) {
        (Targets::Classes(v), TargetMode::OneHot) => {
            let mut t = vec![0.0; k];
            t[v[i]] = 1.0;
            Owned::Vector(t)
        }
        (Targets::Classes(v), TargetMode::Smoothed { eps, .. }) => {
            let label = crate::soft_labels::OneHotLabel::new(v[i], k)?;
            Owned::Vector(crate::soft_labels::uls(label, eps)?.into_inner())
        }
        (Targets::Multilabel(v), mode) => {
            let t: Vec<f64> = v[i].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            match mode {
                TargetMode::OneHot => Owned::Vector(t),
                TargetMode::Smoothed { eps, .. } => Owned::Vector(smooth_multilabel(&t, eps)?),
            }
        }
        (Targets::Segmentation(maps), TargetMode::OneHot) => Owned::Map(SoftLabelMap::one_hot(&maps[i])),
        (Targets::Segmentation(maps), TargetMode::Smoothed { eps, sigma, kernel }) => {
            Owned::Map(segmentation_targets(&maps[i], eps, sigma, kernel)?)
        }
    })
}

/// Extra instrumentation for a run.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Epochs at which per-sample gradient norms are recorded.
    pub probe_epochs: Vec<usize>,
}

/// Smoothed, paced training. `curriculum` is required exactly when
/// `config.pace` is set.
pub fn train(
    config: &TrainConfig,
    train_data: &LabeledDataset,
    val_data: &LabeledDataset,
    curriculum: Option<&Curriculum>,
) -> Result<TrainOutcome> {
    train_with(config, train_data, val_data, curriculum, &TrainOptions::default())
}

pub fn train_with(
    config: &TrainConfig,
    train_data: &LabeledDataset,
    val_data: &LabeledDataset,
    curriculum: Option<&Curriculum>,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    let plan = check_setup(config, train_data, val_data, curriculum)?;
    let mode = |e: usize| TargetMode::Smoothed {
        eps: config.uls.as_ref().map_or(0.0, |s| s.value_at(e)),
        sigma: config.svls.as_ref().map(|s| s.value_at(e)),
        kernel: config.svls_kernel,
    };
    run(config, train_data, val_data, plan.as_ref().zip(curriculum), mode, options)
}

/// Plain cross-entropy on one-hot targets over the whole set, i.i.d. order.
pub fn train_baseline(config: &TrainConfig, train_data: &LabeledDataset, val_data: &LabeledDataset) -> Result<TrainOutcome> {
    let config = config.as_baseline();
    check_setup(&config, train_data, val_data, None)?;
    run(&config, train_data, val_data, None, |_| TargetMode::OneHot, &TrainOptions::default())
}

fn check_setup(
    config: &TrainConfig,
    train_data: &LabeledDataset,
    val_data: &LabeledDataset,
    curriculum: Option<&Curriculum>,
) -> Result<Option<PacePlan>> {
    config.validate()?;
    if train_data.is_empty() || val_data.is_empty() {
        return Err(Error::invalid("training and validation data must be non-empty"));
    }
    for d in [train_data, val_data] {
        if d.task() != config.task {
            return Err(Error::Config(format!(
                "config task {} does not match {} data",
                config.task.name(),
                d.task().name()
            )));
        }
    }
    if val_data.num_classes() != train_data.num_classes() {
        return Err(Error::invalid("train and validation class counts differ"));
    }
    if config.task == Task::Segmentation && config.background >= train_data.num_classes() {
        return Err(Error::Config("background class out of range".into()));
    }
    let Some(pace) = config.pace else {
        return Ok(None);
    };
    let total = match (curriculum, config.granularity) {
        (None, _) => return Err(Error::Config("pacing requires a bank".into())),
        (Some(Curriculum::Samples(bank)), Granularity::Sample) => {
            if bank.len() != train_data.len() || bank.entries().iter().any(|e| e.sample_id >= train_data.len()) {
                return Err(Error::invalid(format!(
                    "bank of {} samples does not match {} training samples",
                    bank.len(),
                    train_data.len()
                )));
            }
            train_data.len()
        }
        (Some(Curriculum::Pixels(bank)), Granularity::Pixel) => {
            let Targets::Segmentation(maps) = train_data.targets() else {
                unreachable!("validated: pixel granularity implies segmentation")
            };
            let fits = bank.frames().len() == maps.len()
                && bank
                    .frames()
                    .iter()
                    .zip(maps)
                    .all(|(f, m)| f.height == m.height() && f.width == m.width());
            if !fits {
                return Err(Error::invalid("pixel bank does not match the training frames"));
            }
            bank.total_pixels()
        }
        _ => return Err(Error::Config("bank kind does not match the pacing granularity".into())),
    };
    Ok(Some(PacePlan::new(pace.lambda, pace.epoch_ratio, config.epochs, total)?))
}

fn run(
    config: &TrainConfig,
    train_data: &LabeledDataset,
    val_data: &LabeledDataset,
    pacing: Option<(&PacePlan, &Curriculum)>,
    mode: impl Fn(usize) -> TargetMode,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    let n = train_data.len();
    let arch = config.model.architecture(train_data)?;
    let mut model = Model::init(arch, seed::sub_seed(config.seed, "init"))?;
    let mut opt = Optimizer::new(config.optimizer, model.params().len())?;
    let shuffle_seed = seed::sub_seed(config.seed, "shuffle");
    let mut records = Vec::with_capacity(config.epochs);
    let mut probes = Vec::new();

    for epoch in 0..config.epochs {
        let m = mode(epoch);
        let (mut active, masks, active_count) = match pacing {
            None => ((0..n).collect::<Vec<_>>(), None, n),
            Some((plan, Curriculum::Samples(bank))) => {
                let ids = active_set(bank, plan, epoch)?;
                let count = ids.len();
                (ids, None, count)
            }
            Some((plan, Curriculum::Pixels(bank))) => {
                let masks = pixel_mask_at(bank, plan, epoch)?;
                ((0..n).collect(), Some(masks), plan.active_count(epoch))
            }
        };
        assert!(!active.is_empty(), "active set is clamped to at least one sample");
        // bank order carries no meaning once the set is fixed
        active.sort_unstable();
        active.shuffle(&mut seed::rng(seed::mix(&[shuffle_seed, epoch as u64])));

        let probe = options.probe_epochs.contains(&epoch);
        let mut norms = if probe { vec![0.0; n] } else { Vec::new() };
        let lr_scale = if epoch >= config.decay_epoch() { config.lr_decay } else { 1.0 };
        let (mut loss_sum, mut weight_sum) = (0.0, 0.0);

        for batch in active.chunks(config.batch_size) {
            let owned = batch
                .par_iter()
                .map(|&i| build_target(train_data, i, m))
                .collect::<Result<Vec<_>>>()?;
            let targets: Vec<SampleTarget<'_>> = owned
                .iter()
                .zip(batch)
                .map(|(t, &i)| match t {
                    Owned::Vector(v) if config.task == Task::Multilabel => SampleTarget::Binary(v),
                    Owned::Vector(v) => SampleTarget::Soft(v),
                    Owned::Map(map) => SampleTarget::Pixel {
                        target: map,
                        mask: masks.as_ref().map(|ms| ms[i].as_slice()),
                    },
                })
                .collect();
            let inputs: Vec<Tensor> = batch.iter().map(|&i| train_data.inputs()[i].clone()).collect();
            let parts = sample_gradients(&model, &inputs, &targets)?;
            if probe {
                for (part, &i) in parts.iter().zip(batch) {
                    norms[i] += part.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                }
            }
            for p in &parts {
                loss_sum += p.loss_sum;
                weight_sum += p.weight;
            }
            let lv = reduce_gradients(&parts, model.params().len());
            opt.step(model.params_mut(), &lv.grad, lr_scale);
        }
        if probe {
            probes.push(GradientProbe { epoch, norms });
        }
        let (eps, sigma) = match m {
            TargetMode::OneHot => (0.0, None),
            TargetMode::Smoothed { eps, sigma, .. } => (eps, sigma),
        };
        records.push(EpochRecord {
            epoch,
            active_count,
            eps,
            sigma,
            train_loss: if weight_sum > 0.0 { loss_sum / weight_sum } else { 0.0 },
            metrics: evaluate(&model, val_data, config.background)?,
        });
    }
    Ok(TrainOutcome {
        model,
        records,
        probes,
    })
}

/// Softmax (or sigmoid, for multi-label data) outputs of every sample.
pub fn predict_probs(model: &Model, data: &LabeledDataset) -> Result<Vec<Tensor>> {
    let logits = model.forward_batch(data.inputs())?;
    logits
        .into_iter()
        .map(|z| match data.task() {
            Task::Multiclass => Tensor::new(z.shape().to_vec(), softmax_slice(z.data())),
            Task::Multilabel => Tensor::new(
                z.shape().to_vec(),
                z.data().iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
            ),
            Task::Segmentation => softmax(&z, 0),
        })
        .collect()
}

/// Per-pixel argmax of `[K, H, W]` outputs.
pub fn predicted_map(probs: &Tensor) -> Result<LabelMap> {
    let &[k, h, w] = probs.shape() else {
        return Err(Error::shape("expected a [K, H, W] map"));
    };
    let n = h * w;
    let labels = (0..n)
        .map(|p| {
            let column: Vec<f64> = (0..k).map(|c| probs.data()[c * n + p]).collect();
            argmax(&column)
        })
        .collect();
    LabelMap::new(h, w, k, labels)
}

/// Validation metrics in the order of [`metric_names`].
pub fn evaluate(model: &Model, data: &LabeledDataset, background: usize) -> Result<Vec<(String, f64)>> {
    let probs = predict_probs(model, data)?;
    let values = match data.targets() {
        Targets::Classes(labels) => {
            let rows: Vec<&[f64]> = probs.iter().map(|p| p.data()).collect();
            let preds = metrics::predicted_classes(&rows);
            let report = metrics::calibration_report(&rows, labels, 10)?;
            vec![
                metrics::accuracy(&preds, labels)?,
                report.nll.expect("set by calibration_report"),
                report.ece,
            ]
        }
        Targets::Multilabel(labels) => {
            let rows: Vec<&[f64]> = probs.iter().map(|p| p.data()).collect();
            vec![metrics::mean_average_precision(&rows, labels).map_or(f64::NAN, |r| r.map)]
        }
        Targets::Segmentation(maps) => {
            let preds = probs.iter().map(predicted_map).collect::<Result<Vec<_>>>()?;
            let s = metrics::iou_dice(&preds, maps, data.num_classes(), background)?;
            vec![s.mean_iou, s.mean_dice]
        }
    };
    Ok(metric_names(data.task())
        .iter()
        .map(|s| s.to_string())
        .zip(values)
        .collect())
}

/// `epoch,active_count,eps,sigma,train_loss,<metrics>`.
pub fn metrics_table(task: Task, records: &[EpochRecord]) -> Table {
    let mut header = vec!["epoch", "active_count", "eps", "sigma", "train_loss"];
    header.extend_from_slice(metric_names(task));
    let mut t = Table::new(header);
    for r in records {
        let mut row = vec![
            r.epoch.to_string(),
            r.active_count.to_string(),
            fmt_num(r.eps),
            fmt_opt(r.sigma),
            fmt_num(r.train_loss),
        ];
        row.extend(r.metrics.iter().map(|(_, v)| fmt_num(*v)));
        t.push(row).expect("one cell per column");
    }
    t
}

/// Ranks training samples (or pixels) by a frozen model's confidence in the
/// true label. `TemperatureScaled` first fits `T` on `val_data`; the other
/// sources only tag the bank.
pub fn build_curriculum(
    model: &Model,
    train_data: &LabeledDataset,
    val_data: &LabeledDataset,
    source: BankSource,
    granularity: Granularity,
    background: usize,
) -> Result<(Curriculum, Option<metrics::TemperatureModel>)> {
    let temperature = match source {
        BankSource::TemperatureScaled => {
            let labels = val_data.class_labels().map_err(|_| {
                Error::Config("temperature-scaled banks need multi-class data".into())
            })?;
            let logits = model.forward_batch(val_data.inputs())?;
            let rows: Vec<&[f64]> = logits.iter().map(|z| z.data()).collect();
            Some(metrics::fit_temperature(&rows, labels)?.model)
        }
        _ => None,
    };
    let probs = match temperature {
        Some(t) => model
            .forward_batch(train_data.inputs())?
            .into_iter()
            .map(|z| Tensor::new(z.shape().to_vec(), t.apply(z.data()).into_inner()))
            .collect::<Result<Vec<_>>>()?,
        None => predict_probs(model, train_data)?,
    };
    let curriculum = match (train_data.targets(), granularity) {
        (Targets::Classes(labels), Granularity::Sample) => {
            let rows: Vec<&[f64]> = probs.iter().map(|p| p.data()).collect();
            Curriculum::Samples(build_bank_multiclass(&rows, labels, source)?)
        }
        (Targets::Multilabel(labels), Granularity::Sample) => {
            let rows: Vec<&[f64]> = probs.iter().map(|p| p.data()).collect();
            Curriculum::Samples(build_bank_multilabel(&rows, labels, source)?)
        }
        (Targets::Segmentation(maps), Granularity::Sample) => {
            Curriculum::Samples(build_bank_segmentation(&probs, maps, background, source)?)
        }
        (Targets::Segmentation(maps), Granularity::Pixel) => Curriculum::Pixels(build_pixel_bank(&probs, maps)?),
        _ => return Err(Error::Config("pixel granularity requires segmentation data".into())),
    };
    Ok((curriculum, temperature))
}
