//! Uniform and spatially varying label smoothing on a small label map.

use pcbls::soft_labels::{smooth_multilabel, svls, uls, uls_svls, LabelMap, OneHotLabel};

fn main() -> pcbls::Result<()> {
    let label = OneHotLabel::new(2, 5)?;
    for eps in [0.0, 0.1, 0.5] {
        println!("uls eps={eps}: {:?}", uls(label, eps)?.probs());
    }
    println!("multilabel eps=0.2: {:?}", smooth_multilabel(&[1.0, 0.0, 1.0], 0.2)?);

    // A vertical boundary between class 0 and class 1.
    let (h, w) = (4, 6);
    let labels = LabelMap::new(h, w, 2, (0..h * w).map(|i| usize::from(i % w >= 3)).collect())?;
    let soft = svls(&labels, 1.0, 3)?;
    let both = uls_svls(&labels, 0.2, 1.0, 3)?;
    println!("\nP(class 1) along row 0, svls sigma=1:");
    for x in 0..w {
        print!("{:.3} ", soft.prob(1, 0, x));
    }
    println!("\nsame with uls eps=0.2 first:");
    for x in 0..w {
        print!("{:.3} ", both.prob(1, 0, x));
    }
    println!();
    Ok(())
}
