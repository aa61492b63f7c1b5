//! Build a confidence bank from a baseline model and show which samples
//! each epoch trains on.

use pcbls::data::gen_blobs;
use pcbls::pacing::{active_set, BankSource, PacePlan};
use pcbls::trainer::{build_curriculum, preset, train_baseline, Curriculum, Granularity};

fn main() -> pcbls::Result<()> {
    let (train, val) = gen_blobs(4, 100, 8, 0.15, 0.2, 1)?.split_train_val(0.2, 1)?;
    let mut cfg = preset("baseline")?;
    cfg.epochs = 40;
    let model = train_baseline(&cfg, &train, &val)?.model;
    let (Curriculum::Samples(bank), _) =
        build_curriculum(&model, &train, &val, BankSource::Plain, Granularity::Sample, 0)?
    else {
        unreachable!("class data gives a sample bank");
    };
    let easiest = &bank.entries()[..3];
    let hardest = &bank.entries()[bank.len() - 3..];
    println!("easiest {easiest:?}\nhardest {hardest:?}");

    let plan = PacePlan::new(0.6, 0.4, 20, bank.len())?;
    println!("mu = {:.4}, full data from epoch {}", plan.mu(), plan.full_data_epoch());
    for epoch in [0, 4, 8, 12] {
        let ids = active_set(&bank, &plan, epoch)?;
        println!("epoch {epoch:>2}: {} active, easiest ids {:?}", ids.len(), &ids[..5]);
    }
    Ok(())
}
