//! Pixel-level pacing with SVLS targets on synthetic shapes.

use pcbls::data::gen_shapes_seg;
use pcbls::optim::OptimizerConfig;
use pcbls::pacing::BankSource;
use pcbls::trainer::{build_curriculum, preset, train, train_baseline, Granularity};

fn main() -> pcbls::Result<()> {
    let (tr, va) = gen_shapes_seg(16, 16, 2, 40, 5)?.split_train_val(0.25, 5)?;
    let mut cfg = preset("segmentation")?;
    // The preset's Adam 1e-4 is sized for large pretrained networks; a few
    // hundred steps on toy shapes need a larger step.
    cfg.optimizer = OptimizerConfig::adam(1e-2);
    let base = train_baseline(&cfg, &tr, &va)?;
    let (bank, _) = build_curriculum(&base.model, &tr, &va, BankSource::Plain, Granularity::Pixel, 0)?;
    let out = train(&cfg, &tr, &va, Some(&bank))?;
    println!("epoch\tactive_px\teps\tsigma\tloss\tmIoU");
    for r in &out.records {
        let miou = r.metrics.iter().find(|(n, _)| n == "val_miou").map_or(f64::NAN, |m| m.1);
        println!(
            "{}\t{}\t{:.3}\t{:.3}\t{:.4}\t{:.3}",
            r.epoch,
            r.active_count,
            r.eps,
            r.sigma.unwrap_or(0.0),
            r.train_loss,
            miou
        );
    }
    Ok(())
}
