//! On-disk formats: checkpoints, banks, manifests, and metric tables.
//! Every writer goes through [`atomic_write`].

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{Architecture, Model};
use crate::pacing::{BankEntry, BankSource, PixelBank, PixelScores, SampleBank};

/// Writes to a temporary file in the target directory, then renames it.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn read_existing(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(std::fs::read(path)?)
}

const CKPT_MAGIC: &[u8; 6] = b"PCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub epoch: u64,
}

pub fn encode_checkpoint(model: &Model, epoch: u64) -> Vec<u8> {
    let arch = model.architecture();
    let mut out = Vec::with_capacity(6 + 1 + 16 + model.params().len() * 8 + 8);
    out.extend_from_slice(CKPT_MAGIC);
    out.push(arch.tag());
    for d in arch.dims() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out.extend_from_slice(&epoch.to_le_bytes());
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    const WHAT: &str = "checkpoint";
    if bytes.len() < 7 || &bytes[..6] != CKPT_MAGIC {
        return Err(Error::Version {
            what: WHAT.into(),
            detail: "missing PCKPT1 magic".into(),
        });
    }
    let tag = bytes[6];
    let n_dims = Architecture::dim_count(tag).ok_or_else(|| Error::format(WHAT, format!("unknown architecture tag {tag}")))?;
    let mut pos = 7;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| Error::format(WHAT, "truncated"))?;
        pos += n;
        Ok(s)
    };
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        dims.push(u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")));
    }
    let arch = Architecture::from_tag(tag, &dims).map_err(|e| Error::format(WHAT, e.to_string()))?;
    let count = arch.param_count();
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(f64::from_le_bytes(take(8)?.try_into().expect("8 bytes")));
    }
    let epoch = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
    if pos != bytes.len() {
        return Err(Error::format(WHAT, "trailing bytes"));
    }
    let model = Model::new(arch, params).map_err(|e| Error::format(WHAT, e.to_string()))?;
    Ok(Checkpoint { model, epoch })
}

pub fn save_checkpoint(path: &Path, model: &Model, epoch: u64) -> Result<()> {
    atomic_write(path, &encode_checkpoint(model, epoch))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_existing(path)?)
}

const BANK_HEADER: &str = "sample_id,score,source";

/// CSV `sample_id,score,source`, scores with 9 decimals, bank order.
pub fn encode_bank(bank: &SampleBank) -> String {
    let mut out = String::with_capacity(bank.len() * 24 + 32);
    out.push_str(BANK_HEADER);
    out.push('\n');
    let tag = bank.source().tag();
    for e in bank.entries() {
        out.push_str(&format!("{},{:.9},{}\n", e.sample_id, e.score, tag));
    }
    out
}

pub fn decode_bank(text: &str) -> Result<SampleBank> {
    const WHAT: &str = "bank CSV";
    let mut lines = text.lines();
    if lines.next() != Some(BANK_HEADER) {
        return Err(Error::Version {
            what: WHAT.into(),
            detail: format!("header must be {BANK_HEADER:?}"),
        });
    }
    let mut entries = Vec::new();
    let mut source = None;
    for (i, line) in lines.enumerate() {
        let bad = |d: &str| Error::format(WHAT, format!("row {}: {d}", i + 1));
        let mut cols = line.split(',');
        let (Some(id), Some(score), Some(src), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
            return Err(bad("expected 3 columns"));
        };
        let sample_id = id.parse().map_err(|_| bad("bad sample_id"))?;
        let score: f64 = score.parse().map_err(|_| bad("bad score"))?;
        let src: BankSource = src.parse().map_err(|_| bad("bad source"))?;
        if *source.get_or_insert(src) != src {
            return Err(bad("mixed sources"));
        }
        entries.push(BankEntry { sample_id, score });
    }
    SampleBank::new(entries, source.unwrap_or(BankSource::Plain)).map_err(|e| Error::format(WHAT, e.to_string()))
}

pub fn save_bank(path: &Path, bank: &SampleBank) -> Result<()> {
    atomic_write(path, encode_bank(bank).as_bytes())
}

pub fn load_bank(path: &Path) -> Result<SampleBank> {
    let bytes = read_existing(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format("bank CSV", "not UTF-8"))?;
    decode_bank(&text)
}

const PIXEL_MAGIC: &[u8; 4] = b"PCBL";

/// `PCBL`, u32 frame count, then per frame u32 H, u32 W and H·W f64 scores,
/// all little-endian.
pub fn encode_pixel_bank(bank: &PixelBank) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + bank.total_pixels() * 8 + bank.frames().len() * 8);
    out.extend_from_slice(PIXEL_MAGIC);
    out.extend_from_slice(&(bank.frames().len() as u32).to_le_bytes());
    for f in bank.frames() {
        out.extend_from_slice(&(f.height as u32).to_le_bytes());
        out.extend_from_slice(&(f.width as u32).to_le_bytes());
        for s in &f.scores {
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    out
}

pub fn decode_pixel_bank(bytes: &[u8]) -> Result<PixelBank> {
    const WHAT: &str = "pixel bank";
    if bytes.len() < 4 || &bytes[..4] != PIXEL_MAGIC {
        return Err(Error::Version {
            what: WHAT.into(),
            detail: "missing PCBL magic".into(),
        });
    }
    let mut pos = 4;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| Error::format(WHAT, "truncated"))?;
        pos += n;
        Ok(s)
    };
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
    let n = u32_at(take(4)?);
    let mut frames = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let height = u32_at(take(4)?);
        let width = u32_at(take(4)?);
        let raw = take(height * width * 8)?;
        let scores = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        frames.push(PixelScores { height, width, scores });
    }
    if pos != bytes.len() {
        return Err(Error::format(WHAT, "trailing bytes"));
    }
    PixelBank::new(frames).map_err(|e| Error::format(WHAT, e.to_string()))
}

pub fn save_pixel_bank(path: &Path, bank: &PixelBank) -> Result<()> {
    atomic_write(path, &encode_pixel_bank(bank))
}

pub fn load_pixel_bank(path: &Path) -> Result<PixelBank> {
    decode_pixel_bank(&read_existing(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ManifestRow {
    pub orig_id: usize,
    pub kind: String,
    pub severity: u8,
    pub path: PathBuf,
}

const MANIFEST_HEADER: [&str; 4] = ["orig_id", "kind", "severity", "path"];

pub fn encode_manifest(rows: &[ManifestRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(MANIFEST_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn decode_manifest(bytes: &[u8]) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    if r.headers()?.iter().ne(MANIFEST_HEADER) {
        return Err(Error::Version {
            what: "manifest".into(),
            detail: format!("header must be {}", MANIFEST_HEADER.join(",")),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn save_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    atomic_write(path, &encode_manifest(rows)?)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    decode_manifest(&read_existing(path)?)
}

/// A header plus string rows. Missing numbers are written as `NA`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::shape(format!("row has {} cells for {} columns", row.len(), self.header.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn decode(bytes: &[u8]) -> Result<Table> {
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Table> {
        Table::decode(&read_existing(path)?)
    }
}

/// Shortest round-trip decimal, `NA` for NaN.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt_num)
}

pub fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read_existing(path)?)?)
}
