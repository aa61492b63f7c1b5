//! Render every corruption at every severity for one image into a directory
//! of PNM files.

use std::path::PathBuf;

use pcbls::corruption::{corrupt_dataset, CorruptionKind};
use pcbls::data::gen_shapes_seg;
use pcbls::image::Image;

fn main() -> pcbls::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("corruption_gallery"), PathBuf::from);
    let data = gen_shapes_seg(32, 32, 3, 2, 4)?;
    let image = Image::from_input(&data.inputs()[1])?;
    let rows = corrupt_dataset(&[image], &CorruptionKind::ALL, &[1, 2, 3, 4, 5], 0, &out)?;
    println!("wrote {} images under {}", rows.len(), out.display());
    Ok(())
}
