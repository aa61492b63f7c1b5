//! Command-line front end. [`run`] returns the process exit code:
//! 0 on success, 1 on a runtime failure, 2 on a configuration or
//! validation error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corruption::{corrupt_dataset, robustness_report, CorruptionKind};
use crate::data::{gen_blobs, gen_multilabel, gen_shapes_seg, load_cifar10, LabeledDataset};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{calibration_report, fit_temperature};
use crate::pacing::BankSource;
use crate::persist::{
    fmt_num, fmt_opt, load_bank, load_checkpoint, load_json, load_manifest, load_pixel_bank, save_bank,
    save_checkpoint, save_json, save_pixel_bank, Table,
};
use crate::seed;
use crate::trainer::{
    build_curriculum, evaluate, metrics_table, preset, train, train_baseline, Curriculum, Granularity, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "pcbls", version, about = "Paced curriculum learning by label smoothing")]
pub struct Cli {
    /// JSON run configuration; keys override the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes model.ckpt, metrics.csv and config.json.
    Train {
        /// Dataset kind: blobs, multilabel, shapes, cifar10.
        #[arg(long)]
        data: Option<String>,
        /// Sample or pixel bank for pacing.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
    /// Rank training samples by a checkpoint's confidence.
    Bank {
        #[arg(long)]
        checkpoint: PathBuf,
        /// plain, ts, or ls.
        #[arg(long, default_value = "plain")]
        variant: String,
        #[arg(long)]
        data: Option<String>,
    },
    /// Write corrupted copies of the validation split plus a manifest.
    Corrupt {
        /// Comma-separated kinds; all kinds when omitted.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [1u8, 2, 3, 4, 5])]
        severities: Vec<u8>,
        #[arg(long)]
        data: Option<String>,
    },
    /// Validation metrics, or a robustness table when given a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        data: Option<String>,
    },
    /// Fit a temperature on the validation split and report calibration.
    Calibrate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long)]
        data: Option<String>,
    },
    /// Compare finished runs side by side.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

/// Dataset source. Generated data is split with the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
        label_noise: f64,
        val_fraction: f64,
    },
    Multilabel {
        labels: usize,
        samples: usize,
        dim: usize,
        val_fraction: f64,
    },
    Shapes {
        height: usize,
        width: usize,
        classes: usize,
        frames: usize,
        val_fraction: f64,
    },
    Cifar10 {
        train: PathBuf,
        #[serde(default)]
        val: Option<PathBuf>,
        val_fraction: f64,
    },
}

impl DataSpec {
    pub fn default_for(kind: &str) -> Result<DataSpec> {
        Ok(match kind {
            "blobs" => DataSpec::Blobs {
                classes: 8,
                per_class: 125,
                dim: 16,
                spread: 0.15,
                label_noise: 0.2,
                val_fraction: 0.2,
            },
            "multilabel" => DataSpec::Multilabel {
                labels: 8,
                samples: 500,
                dim: 16,
                val_fraction: 0.2,
            },
            "shapes" => DataSpec::Shapes {
                height: 16,
                width: 16,
                classes: 2,
                frames: 40,
                val_fraction: 0.25,
            },
            "cifar10" => DataSpec::Cifar10 {
                train: PathBuf::from("data_batch_1.bin"),
                val: Some(PathBuf::from("test_batch.bin")),
                val_fraction: 0.0,
            },
            other => return Err(Error::Config(format!("unknown data kind `{other}`"))),
        })
    }

    /// `(train, val)` for a run seed.
    pub fn load(&self, run_seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        let data_seed = seed::sub_seed(run_seed, "data");
        let split_seed = seed::sub_seed(run_seed, "split");
        let full = match self {
            DataSpec::Blobs {
                classes,
                per_class,
                dim,
                spread,
                label_noise,
                ..
            } => gen_blobs(*classes, *per_class, *dim, *spread, *label_noise, data_seed)?,
            DataSpec::Multilabel {
                labels, samples, dim, ..
            } => gen_multilabel(*labels, *samples, *dim, data_seed)?,
            DataSpec::Shapes {
                height,
                width,
                classes,
                frames,
                ..
            } => gen_shapes_seg(*height, *width, *classes, *frames, data_seed)?,
            DataSpec::Cifar10 { train, val: Some(val), .. } => {
                let tr = load_cifar10(train)?;
                let va = load_cifar10(val)?;
                let all: Vec<usize> = (0..va.len()).collect();
                return Ok((tr, va.subset(&all, crate::data::Split::Val)?));
            }
            DataSpec::Cifar10 { train, val: None, .. } => load_cifar10(train)?,
        };
        let fraction = match self {
            DataSpec::Blobs { val_fraction, .. }
            | DataSpec::Multilabel { val_fraction, .. }
            | DataSpec::Shapes { val_fraction, .. }
            | DataSpec::Cifar10 { val_fraction, .. } => *val_fraction,
        };
        if fraction <= 0.0 {
            return Err(Error::Config("val_fraction must be positive without a separate validation file".into()));
        }
        full.split_train_val(fraction, split_seed)
    }
}

/// Fully resolved run: the training config plus its data and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: String,
    pub data: DataSpec,
    #[serde(flatten)]
    pub train: TrainConfig,
}

fn default_data(train: &TrainConfig) -> &'static str {
    match train.task {
        crate::data::Task::Multiclass => "blobs",
        crate::data::Task::Multilabel => "multilabel",
        crate::data::Task::Segmentation => "shapes",
    }
}

/// Objects merge key by key (one level deep); anything else replaces.
fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot @ Value::Object(_)) if v.is_object() => overlay(slot, v),
                    Some(slot) => *slot = v,
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Preset, then config file, then flags.
pub fn resolve(cli: &Cli, data_flag: Option<&str>, bank_flag: Option<&Path>) -> Result<RunConfig> {
    let file: Option<Value> = match &cli.config {
        Some(p) => Some(load_json(p).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", p.display())),
            other => other,
        })?),
        None => None,
    };
    let from_file = file
        .as_ref()
        .and_then(|f| f.get("preset"))
        .and_then(Value::as_str)
        .map(String::from);
    let name = cli.preset.clone().or(from_file).unwrap_or_else(|| "workflow_cls".into());
    let base_train = preset(&name)?;
    let data = DataSpec::default_for(data_flag.unwrap_or(default_data(&base_train)))?;
    let mut value = serde_json::to_value(RunConfig {
        preset: name.clone(),
        data,
        train: base_train,
    })?;
    if let Some(f) = file {
        overlay(&mut value, f);
    }
    if let Some(kind) = data_flag {
        value["data"] = serde_json::to_value(DataSpec::default_for(kind)?)?;
    }
    value["preset"] = Value::String(name);
    if let Some(s) = cli.seed {
        value["seed"] = s.into();
    }
    if let Some(b) = bank_flag {
        value["bank"] = serde_json::to_value(b)?;
    }
    let run: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    run.train.validate()?;
    Ok(run)
}

fn load_curriculum(path: &Path, granularity: Granularity) -> Result<Curriculum> {
    Ok(match granularity {
        Granularity::Sample => Curriculum::Samples(load_bank(path)?),
        Granularity::Pixel => Curriculum::Pixels(load_pixel_bank(path)?),
    })
}

fn cmd_train(run: &RunConfig, out: &Path) -> Result<()> {
    let cfg = &run.train;
    let curriculum = match (&cfg.pace, &cfg.bank) {
        (Some(_), None) => return Err(Error::Config("pacing is enabled but no bank path is set".into())),
        (Some(_), Some(p)) => Some(load_curriculum(p, cfg.granularity)?),
        (None, _) => None,
    };
    let (tr, va) = run.data.load(cfg.seed)?;
    let plain = cfg.uls.is_none() && cfg.svls.is_none() && cfg.pace.is_none();
    let outcome = if plain {
        train_baseline(cfg, &tr, &va)?
    } else {
        train(cfg, &tr, &va, curriculum.as_ref())?
    };
    std::fs::create_dir_all(out)?;
    save_json(&out.join("config.json"), run)?;
    metrics_table(cfg.task, &outcome.records).save(&out.join("metrics.csv"))?;
    save_checkpoint(&out.join("model.ckpt"), &outcome.model, cfg.epochs as u64)?;
    Ok(())
}

fn load_model(path: &Path) -> Result<crate::model::Model> {
    Ok(load_checkpoint(path)?.model)
}

fn cmd_bank(run: &RunConfig, out: &Path, checkpoint: &Path, variant: &str) -> Result<()> {
    let source: BankSource = variant.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    let model = load_model(checkpoint)?;
    let (tr, va) = run.data.load(run.train.seed)?;
    let (curriculum, temperature) =
        build_curriculum(&model, &tr, &va, source, run.train.granularity, run.train.background)?;
    std::fs::create_dir_all(out)?;
    match &curriculum {
        Curriculum::Samples(b) => save_bank(&out.join("bank.csv"), b)?,
        Curriculum::Pixels(b) => save_pixel_bank(&out.join("pixel_bank.pcbl"), b)?,
    }
    if let Some(t) = temperature {
        save_json(&out.join("temperature.json"), &t)?;
    }
    Ok(())
}

fn parse_kinds(kinds: &[String]) -> Result<Vec<CorruptionKind>> {
    if kinds.is_empty() {
        return Ok(CorruptionKind::ALL.to_vec());
    }
    kinds
        .iter()
        .map(|k| k.parse().map_err(|e: Error| Error::Config(e.to_string())))
        .collect()
}

fn cmd_corrupt(run: &RunConfig, out: &Path, kinds: &[String], severities: &[u8]) -> Result<()> {
    let kinds = parse_kinds(kinds)?;
    let (_, va) = run.data.load(run.train.seed)?;
    let images = va.inputs().iter().map(Image::from_input).collect::<Result<Vec<_>>>()?;
    let base = seed::sub_seed(run.train.seed, "corruption");
    corrupt_dataset(&images, &kinds, severities, base, &out.join("corrupt"))?;
    Ok(())
}

fn cmd_eval(run: &RunConfig, out: &Path, checkpoint: &Path, manifest: Option<&Path>) -> Result<()> {
    let model = load_model(checkpoint)?;
    let (_, va) = run.data.load(run.train.seed)?;
    std::fs::create_dir_all(out)?;
    match manifest {
        Some(m) => {
            let rows = load_manifest(m)?;
            let root = m.parent().unwrap_or(Path::new("."));
            robustness_report(&model, &rows, root, &va)?
                .to_table()
                .save(&out.join("robustness.csv"))
        }
        None => {
            let metrics = evaluate(&model, &va, run.train.background)?;
            let mut t = Table::new(metrics.iter().map(|(k, _)| k.clone()));
            t.push(metrics.iter().map(|(_, v)| fmt_num(*v)).collect())?;
            t.save(&out.join("eval.csv"))
        }
    }
}

fn cmd_calibrate(run: &RunConfig, out: &Path, checkpoint: &Path, bins: usize) -> Result<()> {
    let model = load_model(checkpoint)?;
    let (_, va) = run.data.load(run.train.seed)?;
    let labels = va
        .class_labels()
        .map_err(|_| Error::Config("calibration needs multi-class data".into()))?;
    let logits = model.forward_batch(va.inputs())?;
    let rows: Vec<&[f64]> = logits.iter().map(|z| z.data()).collect();
    let fit = fit_temperature(&rows, labels)?;
    let before: Vec<Vec<f64>> = rows.iter().map(|z| crate::numerics::softmax_slice(z)).collect();
    let after: Vec<Vec<f64>> = rows.iter().map(|z| fit.model.apply(z).into_inner()).collect();
    let r0 = calibration_report(&before, labels, bins)?;
    let r1 = calibration_report(&after, labels, bins)?;
    std::fs::create_dir_all(out)?;
    save_json(&out.join("temperature.json"), &fit.model)?;
    let mut t = Table::new(["scope", "temperature", "bin", "lower", "upper", "confidence", "accuracy", "count", "ece", "brier", "nll"]);
    for (scope, temp, r) in [("uncalibrated", 1.0, &r0), ("calibrated", fit.model.temperature, &r1)] {
        t.push(vec![
            scope.into(),
            fmt_num(temp),
            "all".into(),
            "0".into(),
            "1".into(),
            "NA".into(),
            "NA".into(),
            r.sample_count().to_string(),
            fmt_num(r.ece),
            fmt_opt(r.brier),
            fmt_opt(r.nll),
        ])?;
        for (i, b) in r.bins.iter().enumerate() {
            t.push(vec![
                scope.into(),
                fmt_num(temp),
                i.to_string(),
                fmt_num(b.lower),
                fmt_num(b.upper),
                fmt_num(b.confidence),
                fmt_num(b.accuracy),
                b.count.to_string(),
                "NA".into(),
                "NA".into(),
                "NA".into(),
            ])?;
        }
    }
    t.save(&out.join("calibration.csv"))
}

/// Final-epoch columns compared across runs, in output order.
pub const REPORT_COLUMNS: [&str; 8] = [
    "train_loss",
    "val_accuracy",
    "val_nll",
    "val_ece",
    "val_map",
    "val_miou",
    "val_mdice",
    "robust_mean",
];

fn cmd_report(runs: &[PathBuf], out: &Path) -> Result<()> {
    let mut header = vec!["run".to_string(), "preset".to_string()];
    header.extend(REPORT_COLUMNS.iter().map(|s| s.to_string()));
    let mut t = Table::new(header);
    for dir in runs {
        let metrics = Table::load(&dir.join("metrics.csv"))?;
        let last = metrics.rows.last();
        let preset = load_json::<Value>(&dir.join("config.json"))
            .ok()
            .and_then(|v| v.get("preset").and_then(Value::as_str).map(String::from))
            .unwrap_or_else(|| "NA".into());
        let mut row = vec![dir.display().to_string(), preset];
        for col in REPORT_COLUMNS {
            let cell = if col == "robust_mean" {
                robust_mean(dir)
            } else {
                metrics
                    .column(col)
                    .and_then(|i| last.map(|r| r[i].clone()))
            };
            row.push(cell.unwrap_or_else(|| "NA".into()));
        }
        t.push(row)?;
    }
    t.save(&out.join("report.csv"))
}

/// Mean over kinds of the per-kind mean in `robustness.csv`.
fn robust_mean(dir: &Path) -> Option<String> {
    let t = Table::load(&dir.join("robustness.csv")).ok()?;
    let (k, m) = (t.column("kind")?, t.column("mean")?);
    let vals: Vec<f64> = t
        .rows
        .iter()
        .filter(|r| r[k] != "clean")
        .filter_map(|r| r[m].parse().ok())
        .collect();
    (!vals.is_empty()).then(|| fmt_num(vals.iter().sum::<f64>() / vals.len() as f64))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let out = &cli.out;
    match &cli.command {
        Command::Train { data, bank } => cmd_train(&resolve(cli, data.as_deref(), bank.as_deref())?, out),
        Command::Bank {
            checkpoint,
            variant,
            data,
        } => cmd_bank(&resolve(cli, data.as_deref(), None)?, out, checkpoint, variant),
        Command::Corrupt {
            kinds,
            severities,
            data,
        } => cmd_corrupt(&resolve(cli, data.as_deref(), None)?, out, kinds, severities),
        Command::Eval {
            checkpoint,
            manifest,
            data,
        } => cmd_eval(&resolve(cli, data.as_deref(), None)?, out, checkpoint, manifest.as_deref()),
        Command::Calibrate { checkpoint, bins, data } => {
            cmd_calibrate(&resolve(cli, data.as_deref(), None)?, out, checkpoint, *bins)
        }
        Command::Report { runs } => cmd_report(runs, out),
    }
}

/// Thread cap from `PCBLS_THREADS` (0 or unset: rayon's default).
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("PCBLS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("PCBLS_THREADS must be a number, got `{raw}`")))?;
    if n > 0 {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command, reports errors on
/// stderr, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match configure_threads().and_then(|_| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}
