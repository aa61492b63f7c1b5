//! ECE before and after temperature scaling an overconfident classifier.

use pcbls::data::gen_blobs;
use pcbls::metrics::{calibration_report, fit_temperature};
use pcbls::trainer::{preset, train_baseline};

fn main() -> pcbls::Result<()> {
    let (tr, va) = gen_blobs(6, 120, 10, 0.2, 0.25, 9)?.split_train_val(0.3, 9)?;
    let cfg = preset("baseline")?;
    let model = train_baseline(&cfg, &tr, &va)?.model;
    let logits: Vec<Vec<f64>> = model.forward_batch(va.inputs())?.into_iter().map(|t| t.into_data()).collect();
    let labels = va.class_labels()?;

    let fit = fit_temperature(&logits, labels)?;
    let raw: Vec<Vec<f64>> = logits.iter().map(|z| pcbls::numerics::softmax_slice(z)).collect();
    let scaled: Vec<Vec<f64>> = logits.iter().map(|z| fit.model.apply(z).into_inner()).collect();
    let before = calibration_report(&raw, labels, 10)?;
    let after = calibration_report(&scaled, labels, 10)?;
    println!("T = {:.3}", fit.model.temperature);
    println!("NLL {:.4} -> {:.4}", fit.nll_at_one, fit.nll);
    println!("ECE {:.4} -> {:.4}", before.ece, after.ece);
    for b in after.bins.iter().filter(|b| b.count > 0) {
        println!("[{:.1}, {:.1}) n={:<4} conf {:.3} acc {:.3}", b.lower, b.upper, b.count, b.confidence, b.accuracy);
    }
    Ok(())
}
