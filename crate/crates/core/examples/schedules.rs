//! Smoothing traces for the curriculum and its ablations.

use pcbls::schedules::SmoothingSchedule;

fn main() -> pcbls::Result<()> {
    let schedules = [
        ("exponential", SmoothingSchedule::exponential(0.5, 0.9)?),
        ("linear", SmoothingSchedule::linear(0.5, 0.015)?),
        ("anti", SmoothingSchedule::anti(0.005, 1.1, 0.5)?),
        ("random", SmoothingSchedule::random(0.0, 0.5, 7)?),
        ("constant", SmoothingSchedule::constant(0.1)?),
    ];
    print!("epoch");
    for (name, _) in &schedules {
        print!("\t{name}");
    }
    println!();
    for e in (0..50).step_by(5) {
        print!("{e}");
        for (_, s) in &schedules {
            print!("\t{:.4}", s.value_at(e));
        }
        println!();
    }
    Ok(())
}
