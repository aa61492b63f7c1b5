//! Load a CIFAR-10 binary batch and print its label histogram.
//!
//! Usage: `cargo run --example cifar10 -- path/to/data_batch_1.bin`

use std::path::Path;

use pcbls::data::load_cifar10;

fn main() {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: cifar10 <data_batch.bin>");
        std::process::exit(2);
    };
    let data = match load_cifar10(Path::new(&path)) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_validation() { 2 } else { 1 });
        }
    };
    let mut counts = [0usize; 10];
    for &l in data.class_labels().expect("cifar labels") {
        counts[l] += 1;
    }
    println!("{} records, shape {:?}", data.len(), data.inputs()[0].shape());
    for (class, n) in counts.iter().enumerate() {
        println!("class {class}: {n}");
    }
}
