//! Interleaved (H×W×C) images in `[0,1]` and binary PNM I/O.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::persist::atomic_write;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::shape("image dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{}x{}x{} image needs {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image values must be finite"));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(height, width, channels, vec![value; height * width * channels])
    }

    /// From a `[C, H, W]` tensor.
    pub fn from_chw(t: &Tensor) -> Result<Self> {
        let &[c, h, w] = t.shape() else {
            return Err(Error::shape(format!("expected a [C, H, W] tensor, got {:?}", t.shape())));
        };
        let src = t.data();
        let mut data = vec![0.0; c * h * w];
        for ch in 0..c {
            for p in 0..h * w {
                data[p * c + ch] = src[ch * h * w + p];
            }
        }
        Image::new(h, w, c, data)
    }

    pub fn to_chw(&self) -> Tensor {
        let (c, n) = (self.channels, self.height * self.width);
        let mut data = vec![0.0; c * n];
        for p in 0..n {
            for ch in 0..c {
                data[ch * n + p] = self.data[p * c + ch];
            }
        }
        Tensor::new(vec![c, self.height, self.width], data).expect("shape is consistent")
    }

    /// A feature vector viewed as a one-row grayscale image.
    pub fn from_features(t: &Tensor) -> Result<Self> {
        Image::new(1, t.len(), 1, t.data().to_vec())
    }

    /// Converts back to the shape of `like`: a `[C, H, W]` tensor or a flat vector.
    pub fn to_tensor_like(&self, like: &Tensor) -> Result<Tensor> {
        if like.shape().len() == 3 {
            let t = self.to_chw();
            if t.shape() != like.shape() {
                return Err(Error::shape("image does not match the reference tensor"));
            }
            Ok(t)
        } else {
            Tensor::new(like.shape().to_vec(), self.data.clone())
        }
    }

    /// Image view of a model input.
    pub fn from_input(t: &Tensor) -> Result<Self> {
        if t.shape().len() == 3 {
            Image::from_chw(t)
        } else {
            Image::from_features(t)
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn clamp_unit(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// 8-bit quantization, as stored on disk.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn from_bytes(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Image::new(height, width, channels, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }
}

/// Binary PGM (`P5`) for one channel, PPM (`P6`) for three.
pub fn encode_pnm(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::invalid(format!("PNM supports 1 or 3 channels, not {c}"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    Ok(out)
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let bad = |d: &str| Error::format("PNM image", d);
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match fields[0] {
        "P5" => 1,
        "P6" => 3,
        m => return Err(Error::Version {
            what: "PNM image".into(),
            detail: format!("unsupported magic {m:?}"),
        }),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    let need = width * height * channels;
    if bytes.len() < pos || bytes.len() - pos != need {
        return Err(bad(&format!("expected {need} raster bytes")));
    }
    Image::from_bytes(height, width, channels, &bytes[pos..])
}

pub fn write_pnm(path: &Path, img: &Image) -> Result<()> {
    atomic_write(path, &encode_pnm(img)?)
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_pnm(&std::fs::read(path)?)
}
