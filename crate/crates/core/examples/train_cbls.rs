//! Baseline cross-entropy against the paced label-smoothing curriculum on
//! noisy blobs, clean and under Gaussian noise.

use pcbls::corruption::{robustness_report_in_memory, CorruptionKind};
use pcbls::data::gen_blobs;
use pcbls::pacing::BankSource;
use pcbls::trainer::{build_curriculum, preset, train, train_baseline, Granularity};

fn main() -> pcbls::Result<()> {
    let (tr, va) = gen_blobs(8, 150, 16, 0.15, 0.2, 3)?.split_train_val(1.0 / 6.0, 3)?;
    let cfg = preset("workflow_cls")?;

    let baseline = train_baseline(&cfg, &tr, &va)?;
    let (bank, _) = build_curriculum(&baseline.model, &tr, &va, BankSource::Plain, Granularity::Sample, 0)?;
    let paced = train(&cfg, &tr, &va, Some(&bank))?;

    for (name, out) in [("baseline", &baseline), ("p-cbls", &paced)] {
        let last = out.records.last().unwrap();
        let noise = robustness_report_in_memory(&out.model, &va, &[CorruptionKind::GaussianNoise], 11)?;
        println!(
            "{name:>8}: {} | gaussian_noise mean {:.1}%",
            last.metrics
                .iter()
                .map(|(k, v)| format!("{k}={v:.3}"))
                .collect::<Vec<_>>()
                .join(" "),
            noise.rows[0].mean
        );
    }
    Ok(())
}
