//! Seeded image corruptions at five severity levels, a dataset driver, and
//! the per-kind robustness table.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::{read_pnm, write_pnm, Image};
use crate::model::Model;
use crate::numerics::{conv2d_same_into, Kernel2D};
use crate::persist::{save_manifest, ManifestRow};
use crate::seed;
use crate::soft_labels::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    DefocusBlur,
    GlassBlur,
    MotionBlur,
    ZoomBlur,
    Fog,
    Brightness,
    Contrast,
    Pixelate,
    JpegLike,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 12] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::ShotNoise,
        CorruptionKind::ImpulseNoise,
        CorruptionKind::DefocusBlur,
        CorruptionKind::GlassBlur,
        CorruptionKind::MotionBlur,
        CorruptionKind::ZoomBlur,
        CorruptionKind::Fog,
        CorruptionKind::Brightness,
        CorruptionKind::Contrast,
        CorruptionKind::Pixelate,
        CorruptionKind::JpegLike,
    ];

    pub const NOISE: [CorruptionKind; 3] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::ShotNoise,
        CorruptionKind::ImpulseNoise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::ShotNoise => "shot_noise",
            CorruptionKind::ImpulseNoise => "impulse_noise",
            CorruptionKind::DefocusBlur => "defocus_blur",
            CorruptionKind::GlassBlur => "glass_blur",
            CorruptionKind::MotionBlur => "motion_blur",
            CorruptionKind::ZoomBlur => "zoom_blur",
            CorruptionKind::Fog => "fog",
            CorruptionKind::Brightness => "brightness",
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::Pixelate => "pixelate",
            CorruptionKind::JpegLike => "jpeg_like",
        }
    }

    /// Stable 1-based id used in seed derivation.
    pub fn id(&self) -> u64 {
        CorruptionKind::ALL.iter().position(|k| k == self).expect("listed") as u64 + 1
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown corruption kind `{s}`")))
    }
}

/// Strength parameters of one corruption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorruptionParams {
    GaussianNoise { sigma: f64 },
    /// Gaussian approximation of Poisson noise, variance `x / lambda`.
    ShotNoise { lambda: f64 },
    ImpulseNoise { fraction: f64 },
    DefocusBlur { radius: usize },
    GlassBlur { rounds: usize, radius: usize },
    MotionBlur { length: usize },
    ZoomBlur { crops: usize, max_zoom: f64 },
    Fog { weight: f64 },
    Brightness { delta: f64 },
    Contrast { factor: f64 },
    Pixelate { factor: usize },
    JpegLike { scale: f64 },
}

const GAUSSIAN_SIGMA: [f64; 5] = [0.08, 0.12, 0.18, 0.26, 0.38];
const SHOT_LAMBDA: [f64; 5] = [60.0, 25.0, 12.0, 5.0, 3.0];
const IMPULSE_FRACTION: [f64; 5] = [0.03, 0.06, 0.09, 0.17, 0.27];
const DEFOCUS_RADIUS: [usize; 5] = [1, 2, 3, 4, 6];
const GLASS: [(usize, usize); 5] = [(1, 1), (2, 1), (3, 2), (4, 2), (5, 3)];
const MOTION_LENGTH: [usize; 5] = [3, 5, 7, 9, 13];
const ZOOM: [(usize, f64); 5] = [(3, 1.06), (4, 1.11), (5, 1.16), (6, 1.21), (7, 1.26)];
const FOG_WEIGHT: [f64; 5] = [0.15, 0.25, 0.35, 0.45, 0.55];
const BRIGHTNESS_DELTA: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
const CONTRAST_FACTOR: [f64; 5] = [0.75, 0.5, 0.4, 0.3, 0.15];
const PIXELATE_FACTOR: [usize; 5] = [2, 3, 4, 6, 8];
const JPEG_SCALE: [f64; 5] = [0.5, 1.0, 2.0, 3.0, 5.0];

impl CorruptionParams {
    /// Row of the severity table, `severity` in 1..=5.
    pub fn for_severity(kind: CorruptionKind, severity: u8) -> Result<Self> {
        if !(1..=5).contains(&severity) {
            return Err(Error::invalid(format!("severity must be in 1..=5, got {severity}")));
        }
        let s = severity as usize - 1;
        Ok(match kind {
            CorruptionKind::GaussianNoise => CorruptionParams::GaussianNoise { sigma: GAUSSIAN_SIGMA[s] },
            CorruptionKind::ShotNoise => CorruptionParams::ShotNoise { lambda: SHOT_LAMBDA[s] },
            CorruptionKind::ImpulseNoise => CorruptionParams::ImpulseNoise {
                fraction: IMPULSE_FRACTION[s],
            },
            CorruptionKind::DefocusBlur => CorruptionParams::DefocusBlur { radius: DEFOCUS_RADIUS[s] },
            CorruptionKind::GlassBlur => CorruptionParams::GlassBlur {
                rounds: GLASS[s].0,
                radius: GLASS[s].1,
            },
            CorruptionKind::MotionBlur => CorruptionParams::MotionBlur { length: MOTION_LENGTH[s] },
            CorruptionKind::ZoomBlur => CorruptionParams::ZoomBlur {
                crops: ZOOM[s].0,
                max_zoom: ZOOM[s].1,
            },
            CorruptionKind::Fog => CorruptionParams::Fog { weight: FOG_WEIGHT[s] },
            CorruptionKind::Brightness => CorruptionParams::Brightness {
                delta: BRIGHTNESS_DELTA[s],
            },
            CorruptionKind::Contrast => CorruptionParams::Contrast {
                factor: CONTRAST_FACTOR[s],
            },
            CorruptionKind::Pixelate => CorruptionParams::Pixelate {
                factor: PIXELATE_FACTOR[s],
            },
            CorruptionKind::JpegLike => CorruptionParams::JpegLike { scale: JPEG_SCALE[s] },
        })
    }

    /// Zero-strength row: leaves any image unchanged.
    pub fn identity(kind: CorruptionKind) -> Self {
        match kind {
            CorruptionKind::GaussianNoise => CorruptionParams::GaussianNoise { sigma: 0.0 },
            CorruptionKind::ShotNoise => CorruptionParams::ShotNoise { lambda: f64::INFINITY },
            CorruptionKind::ImpulseNoise => CorruptionParams::ImpulseNoise { fraction: 0.0 },
            CorruptionKind::DefocusBlur => CorruptionParams::DefocusBlur { radius: 0 },
            CorruptionKind::GlassBlur => CorruptionParams::GlassBlur { rounds: 0, radius: 0 },
            CorruptionKind::MotionBlur => CorruptionParams::MotionBlur { length: 1 },
            CorruptionKind::ZoomBlur => CorruptionParams::ZoomBlur {
                crops: 1,
                max_zoom: 1.0,
            },
            CorruptionKind::Fog => CorruptionParams::Fog { weight: 0.0 },
            CorruptionKind::Brightness => CorruptionParams::Brightness { delta: 0.0 },
            CorruptionKind::Contrast => CorruptionParams::Contrast { factor: 1.0 },
            CorruptionKind::Pixelate => CorruptionParams::Pixelate { factor: 1 },
            CorruptionKind::JpegLike => CorruptionParams::JpegLike { scale: 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8, seed: u64) -> Result<Self> {
        CorruptionParams::for_severity(kind, severity)?;
        Ok(CorruptionSpec { kind, severity, seed })
    }
}

/// Deterministic in `(image, spec)`; output clipped to `[0,1]`.
pub fn corrupt(image: &Image, spec: &CorruptionSpec) -> Result<Image> {
    let params = CorruptionParams::for_severity(spec.kind, spec.severity)?;
    Ok(apply(image, params, spec.seed))
}

/// Applies explicit parameters.
pub fn apply(image: &Image, params: CorruptionParams, seed: u64) -> Image {
    let mut rng = seed::rng(seed);
    let mut out = image.clone();
    match params {
        CorruptionParams::GaussianNoise { sigma } => {
            if sigma > 0.0 {
                for v in out.data_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += sigma * z;
                }
            }
        }
        CorruptionParams::ShotNoise { lambda } => {
            if lambda.is_finite() {
                for v in out.data_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += z * (v.max(0.0) / lambda).sqrt();
                }
            }
        }
        CorruptionParams::ImpulseNoise { fraction } => {
            if fraction > 0.0 {
                for v in out.data_mut() {
                    if rng.random::<f64>() < fraction {
                        *v = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        CorruptionParams::DefocusBlur { radius } => {
            if radius > 0 {
                let r = radius as isize;
                let weights = (-r..=r)
                    .flat_map(|dy| (-r..=r).map(move |dx| if dy * dy + dx * dx <= r * r { 1.0 } else { 0.0 }))
                    .collect();
                let k = Kernel2D::from_weights(2 * radius + 1, weights).expect("disk kernel");
                convolve_channels(&mut out, &k);
            }
        }
        CorruptionParams::GlassBlur { rounds, radius } => {
            let (h, w, c) = (out.height(), out.width(), out.channels());
            let d = radius as i64;
            for _ in 0..rounds {
                for y in 0..h {
                    for x in 0..w {
                        let dy = rng.random_range(-d..=d);
                        let dx = rng.random_range(-d..=d);
                        let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        for ch in 0..c {
                            let a = out.get(y, x, ch);
                            let b = out.get(yy, xx, ch);
                            out.set(y, x, ch, b);
                            out.set(yy, xx, ch, a);
                        }
                    }
                }
            }
        }
        CorruptionParams::MotionBlur { length } => {
            if length > 1 {
                let angle = rng.random_range(0.0..std::f64::consts::PI);
                let size = length | 1;
                let half = (size / 2) as f64;
                let mut weights = vec![0.0; size * size];
                for i in 0..length {
                    let t = i as f64 - (length - 1) as f64 / 2.0;
                    let r = (half + t * angle.sin()).round() as usize;
                    let c = (half + t * angle.cos()).round() as usize;
                    weights[r.min(size - 1) * size + c.min(size - 1)] += 1.0;
                }
                let k = Kernel2D::from_weights(size, weights).expect("line kernel");
                convolve_channels(&mut out, &k);
            }
        }
        CorruptionParams::ZoomBlur { crops, max_zoom } => {
            if crops > 1 && max_zoom > 1.0 {
                let mut acc = vec![0.0; out.data().len()];
                for i in 0..crops {
                    let z = 1.0 + (max_zoom - 1.0) * i as f64 / (crops - 1) as f64;
                    let zoomed = zoom(image, z);
                    acc.iter_mut().zip(zoomed.data()).for_each(|(a, v)| *a += v);
                }
                out.data_mut()
                    .iter_mut()
                    .zip(&acc)
                    .for_each(|(o, a)| *o = a / crops as f64);
            }
        }
        CorruptionParams::Fog { weight } => {
            if weight > 0.0 {
                let (h, w, c) = (out.height(), out.width(), out.channels());
                const GRID: usize = 4;
                let coarse: Vec<f64> = (0..GRID * GRID).map(|_| rng.random_range(0.5..1.0)).collect();
                for y in 0..h {
                    for x in 0..w {
                        let gy = y as f64 * (GRID - 1) as f64 / (h.max(2) - 1) as f64;
                        let gx = x as f64 * (GRID - 1) as f64 / (w.max(2) - 1) as f64;
                        let haze = bilinear(&coarse, GRID, GRID, 1, gy, gx, 0);
                        for ch in 0..c {
                            let v = out.get(y, x, ch);
                            out.set(y, x, ch, (1.0 - weight) * v + weight * haze);
                        }
                    }
                }
            }
        }
        CorruptionParams::Brightness { delta } => out.data_mut().iter_mut().for_each(|v| *v += delta),
        CorruptionParams::Contrast { factor } => {
            if factor != 1.0 {
                let c = out.channels();
                let n = (out.height() * out.width()) as f64;
                for ch in 0..c {
                    let mean = out.data().iter().skip(ch).step_by(c).sum::<f64>() / n;
                    out.data_mut()
                        .iter_mut()
                        .skip(ch)
                        .step_by(c)
                        .for_each(|v| *v = (*v - mean) * factor + mean);
                }
            }
        }
        CorruptionParams::Pixelate { factor } => {
            if factor > 1 {
                let (h, w, c) = (out.height(), out.width(), out.channels());
                for by in (0..h).step_by(factor) {
                    for bx in (0..w).step_by(factor) {
                        let (ey, ex) = ((by + factor).min(h), (bx + factor).min(w));
                        let cells = ((ey - by) * (ex - bx)) as f64;
                        for ch in 0..c {
                            let mut s = 0.0;
                            for y in by..ey {
                                for x in bx..ex {
                                    s += image.get(y, x, ch);
                                }
                            }
                            for y in by..ey {
                                for x in bx..ex {
                                    out.set(y, x, ch, s / cells);
                                }
                            }
                        }
                    }
                }
            }
        }
        CorruptionParams::JpegLike { scale } => {
            if scale > 0.0 {
                jpeg_like(&mut out, scale);
            }
        }
    }
    out.clamp_unit();
    out
}

fn convolve_channels(img: &mut Image, kernel: &Kernel2D) {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut plane = vec![0.0; h * w];
    let mut blurred = vec![0.0; h * w];
    for ch in 0..c {
        for (p, v) in plane.iter_mut().enumerate() {
            *v = img.data()[p * c + ch];
        }
        conv2d_same_into(&plane, h, w, kernel, &mut blurred);
        for (p, v) in blurred.iter().enumerate() {
            img.data_mut()[p * c + ch] = *v;
        }
    }
}

/// Bilinear sample of an interleaved grid at fractional `(y, x)`, clamped.
fn bilinear(data: &[f64], h: usize, w: usize, c: usize, y: f64, x: f64, ch: usize) -> f64 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let at = |yy: usize, xx: usize| data[(yy * w + xx) * c + ch];
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Centre crop of relative size `1/z`, rescaled to full size.
fn zoom(img: &Image, z: f64) -> Image {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let sy = cy + (y as f64 - cy) / z;
            let sx = cx + (x as f64 - cx) / z;
            for ch in 0..c {
                out.set(y, x, ch, bilinear(img.data(), h, w, c, sy, sx, ch));
            }
        }
    }
    out
}

const JPEG_LUMA: [f64; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., 12., 12., 14., 19., 26., 58., 60., 55., 14., 13., 16., 24., 40., 57., 69.,
    56., 14., 17., 22., 29., 51., 87., 80., 62., 18., 22., 37., 56., 68., 109., 103., 77., 24., 35., 55., 64., 81.,
    104., 113., 92., 49., 64., 78., 87., 103., 121., 120., 101., 72., 92., 95., 98., 112., 100., 103., 99.,
];

fn dct_basis() -> [[f64; 8]; 8] {
    let mut b = [[0.0; 8]; 8];
    for (u, row) in b.iter_mut().enumerate() {
        let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (x, v) in row.iter_mut().enumerate() {
            *v = a * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    b
}

/// Orthonormal 8×8 block DCT, coefficients rounded to multiples of the
/// scaled luminance table, inverse DCT. Blocks past the border read
/// replicated pixels.
fn jpeg_like(img: &mut Image, scale: f64) {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let basis = dct_basis();
    let src = img.clone();
    for ch in 0..c {
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                let mut block = [[0.0; 8]; 8];
                for (i, row) in block.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = src.get((by + i).min(h - 1), (bx + j).min(w - 1), ch) * 255.0 - 128.0;
                    }
                }
                let mut coef = [[0.0; 8]; 8];
                for u in 0..8 {
                    for v in 0..8 {
                        let mut s = 0.0;
                        for i in 0..8 {
                            for j in 0..8 {
                                s += basis[u][i] * basis[v][j] * block[i][j];
                            }
                        }
                        let q = JPEG_LUMA[u * 8 + v] * scale;
                        coef[u][v] = (s / q).round() * q;
                    }
                }
                for i in 0..8 {
                    for j in 0..8 {
                        if by + i >= h || bx + j >= w {
                            continue;
                        }
                        let mut s = 0.0;
                        for u in 0..8 {
                            for v in 0..8 {
                                s += basis[u][i] * basis[v][j] * coef[u][v];
                            }
                        }
                        img.set(by + i, bx + j, ch, (s + 128.0) / 255.0);
                    }
                }
            }
        }
    }
}

/// Seed of image `index` under `(kind, severity)`.
pub fn image_seed(base: u64, kind: CorruptionKind, severity: u8, index: usize) -> u64 {
    seed::mix(&[base, kind.id(), severity as u64, index as u64])
}

/// Corrupted copy of a dataset's inputs, held in memory.
pub fn corrupt_inputs(data: &LabeledDataset, kind: CorruptionKind, severity: u8, base_seed: u64) -> Result<LabeledDataset> {
    let params = CorruptionParams::for_severity(kind, severity)?;
    let inputs = data
        .inputs()
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let img = Image::from_input(x)?;
            apply(&img, params, image_seed(base_seed, kind, severity, i)).to_tensor_like(x)
        })
        .collect::<Result<Vec<_>>>()?;
    data.with_inputs(inputs)
}

/// Writes `<kind>/s<severity>/<index>.ppm|pgm` under `out_dir` plus
/// `manifest.csv`; returns the manifest rows (paths relative to `out_dir`).
pub fn corrupt_dataset(
    images: &[Image],
    kinds: &[CorruptionKind],
    severities: &[u8],
    base_seed: u64,
    out_dir: &Path,
) -> Result<Vec<ManifestRow>> {
    for &s in severities {
        CorruptionParams::for_severity(CorruptionKind::GaussianNoise, s)?;
    }
    let mut jobs = Vec::new();
    for &kind in kinds {
        for &severity in severities {
            for index in 0..images.len() {
                jobs.push((kind, severity, index));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(kind, severity, index)| {
            let img = &images[index];
            let ext = if img.channels() == 1 { "pgm" } else { "ppm" };
            let rel = PathBuf::from(kind.name())
                .join(format!("s{severity}"))
                .join(format!("{index:06}.{ext}"));
            let params = CorruptionParams::for_severity(kind, severity)?;
            let out = apply(img, params, image_seed(base_seed, kind, severity, index));
            write_pnm(&out_dir.join(&rel), &out)?;
            Ok(ManifestRow {
                orig_id: index,
                kind: kind.name().to_string(),
                severity,
                path: rel,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    save_manifest(&out_dir.join("manifest.csv"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub kind: String,
    /// Accuracy in percent at severities 1..=5.
    pub per_severity: [f64; 5],
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub rows: Vec<RobustnessRow>,
    pub clean: f64,
}

impl RobustnessReport {
    /// `cells[(kind, severity)] = (hits, count)`, kinds in first-seen order.
    fn from_cells(order: &[String], cells: &BTreeMap<(String, u8), (usize, usize)>, clean: f64) -> Result<Self> {
        let mut rows = Vec::with_capacity(order.len());
        for kind in order {
            let mut per_severity = [0.0; 5];
            for s in 1..=5u8 {
                let Some(&(hits, count)) = cells.get(&(kind.clone(), s)) else {
                    return Err(Error::invalid(format!("manifest has no severity {s} images for `{kind}`; the robustness table needs all five levels")));
                };
                per_severity[s as usize - 1] = 100.0 * hits as f64 / count as f64;
            }
            rows.push(RobustnessRow {
                kind: kind.clone(),
                mean: per_severity.iter().sum::<f64>() / 5.0,
                per_severity,
            });
        }
        Ok(RobustnessReport { rows, clean })
    }

    pub fn row(&self, kind: &str) -> Option<&RobustnessRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    /// `kind,s1,...,s5,mean` plus a final `clean` row with only the mean.
    pub fn to_table(&self) -> crate::persist::Table {
        use crate::persist::fmt_num;
        let mut t = crate::persist::Table::new(["kind", "s1", "s2", "s3", "s4", "s5", "mean"]);
        for r in &self.rows {
            let mut cells = vec![r.kind.clone()];
            cells.extend(r.per_severity.iter().map(|&v| fmt_num(v)));
            cells.push(fmt_num(r.mean));
            t.push(cells).expect("seven cells");
        }
        let mut clean = vec!["clean".to_string()];
        clean.extend(std::iter::repeat_n("NA".to_string(), 5));
        clean.push(fmt_num(self.clean));
        t.push(clean).expect("seven cells");
        t
    }
}

fn predict(model: &Model, x: &crate::numerics::Tensor) -> Result<usize> {
    Ok(argmax(model.forward(x)?.data()))
}

/// `(correct, total)` on a multi-class dataset.
fn hits(model: &Model, data: &LabeledDataset) -> Result<(usize, usize)> {
    let labels = data.class_labels()?;
    let preds = data
        .inputs()
        .par_iter()
        .map(|x| predict(model, x))
        .collect::<Result<Vec<_>>>()?;
    Ok((preds.iter().zip(labels).filter(|(p, l)| p == l).count(), labels.len()))
}

fn accuracy_percent(model: &Model, data: &LabeledDataset) -> Result<f64> {
    let (h, n) = hits(model, data)?;
    if n == 0 {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    Ok(100.0 * h as f64 / n as f64)
}

/// Accuracy per kind and severity from images listed in a manifest.
pub fn robustness_report(model: &Model, rows: &[ManifestRow], root: &Path, clean: &LabeledDataset) -> Result<RobustnessReport> {
    let labels = clean.class_labels()?;
    let outcomes = rows
        .par_iter()
        .map(|r| {
            let reference = clean
                .inputs()
                .get(r.orig_id)
                .ok_or_else(|| Error::invalid(format!("manifest refers to missing sample {}", r.orig_id)))?;
            let img = read_pnm(&root.join(&r.path))?;
            let x = img.to_tensor_like(reference)?;
            Ok(predict(model, &x)? == labels[r.orig_id])
        })
        .collect::<Result<Vec<bool>>>()?;
    let mut order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, u8), (usize, usize)> = BTreeMap::new();
    for (r, ok) in rows.iter().zip(outcomes) {
        if !order.contains(&r.kind) {
            order.push(r.kind.clone());
        }
        let cell = cells.entry((r.kind.clone(), r.severity)).or_default();
        cell.0 += ok as usize;
        cell.1 += 1;
    }
    RobustnessReport::from_cells(&order, &cells, accuracy_percent(model, clean)?)
}

/// Same table with corruptions generated in memory, skipping the disk.
pub fn robustness_report_in_memory(
    model: &Model,
    clean: &LabeledDataset,
    kinds: &[CorruptionKind],
    base_seed: u64,
) -> Result<RobustnessReport> {
    let mut order = Vec::new();
    let mut cells = BTreeMap::new();
    for &kind in kinds {
        order.push(kind.name().to_string());
        for s in 1..=5u8 {
            let data = corrupt_inputs(clean, kind, s, base_seed)?;
            cells.insert((kind.name().to_string(), s), hits(model, &data)?);
        }
    }
    RobustnessReport::from_cells(&order, &cells, accuracy_percent(model, clean)?)
}
