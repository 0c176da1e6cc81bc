//! Little-endian binary containers for frame datasets (`DSET`), sequence
//! datasets (`DSEQ`) and model weights (`MLPW`).
//!
//! Frame and sequence files share a header: magic, version, `n`, `H`, `W`,
//! `K`, `C` as u32, then (sequences only) `T` as u32, then `C` class names
//! each as a u32 byte length and UTF-8 bytes, then `n` labels as u16. Sequence
//! files continue with `n` group ids as u64. Pixels follow as f32, sample-major
//! (sequence-major then frame-major for sequences), each frame interleaved
//! `H x W x K`.
//!
//! Model files: magic, version, layer count u32, `(in, out)` u32 pairs per
//! layer, dropout rate f64, then every layer's weights (row-major, out x in)
//! followed by every layer's biases, all f32.

use std::fs;
use std::path::Path;

use desot_core::data::{FrameDataset, SequenceDataset};
use desot_core::{MlpModel, SequenceSample};

use crate::error::{CliError, CliResult};

pub const DSET_MAGIC: &[u8; 4] = b"DSET";
pub const DSEQ_MAGIC: &[u8; 4] = b"DSEQ";
pub const MLPW_MAGIC: &[u8; 4] = b"MLPW";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("truncated file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("invalid contents: {0}")]
    Invalid(String),
}

impl From<desot_core::Error> for FormatError {
    fn from(e: desot_core::Error) -> Self {
        Self::Invalid(e.to_string())
    }
}

type FResult<T> = Result<T, FormatError>;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> FResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(FormatError::Truncated {
                offset: self.pos,
                needed: n - (self.buf.len() - self.pos),
            }),
        }
    }

    fn array<const N: usize>(&mut self) -> FResult<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> FResult<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> FResult<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn usize(&mut self) -> FResult<usize> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> FResult<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> FResult<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// `n` f32 values, checking the byte budget before allocating.
    fn f32s(&mut self, n: usize) -> FResult<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| FormatError::Invalid("element count overflow".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn magic(&mut self, expected: &[u8; 4]) -> FResult<()> {
        let found = self.take(4).map_err(|_| FormatError::BadMagic {
            expected: String::from_utf8_lossy(expected).into(),
            found: String::from_utf8_lossy(&self.buf[self.pos..]).into(),
        })?;
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(expected).into(),
                found: String::from_utf8_lossy(found).into(),
            });
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(FormatError::Version(v));
        }
        Ok(())
    }

    fn finish(self) -> FResult<()> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::Trailing(n)),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> FResult<()> {
    let v =
        u32::try_from(v).map_err(|_| FormatError::Invalid(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Header {
    n: usize,
    height: usize,
    width: usize,
    channels: usize,
    t_len: Option<usize>,
    class_names: Vec<String>,
    labels: Vec<usize>,
}

fn write_header(out: &mut Vec<u8>, magic: &[u8; 4], h: &Header) -> FResult<()> {
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [h.n, h.height, h.width, h.channels, h.class_names.len()] {
        put_u32(out, v)?;
    }
    if let Some(t) = h.t_len {
        put_u32(out, t)?;
    }
    for name in &h.class_names {
        put_u32(out, name.len())?;
        out.extend_from_slice(name.as_bytes());
    }
    for &l in &h.labels {
        let l = u16::try_from(l)
            .map_err(|_| FormatError::Invalid(format!("label {l} does not fit in u16")))?;
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(())
}

fn read_header(r: &mut Reader<'_>, magic: &[u8; 4], sequences: bool) -> FResult<Header> {
    r.magic(magic)?;
    let (n, height, width, channels, classes) =
        (r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let t_len = if sequences { Some(r.usize()?) } else { None };
    let mut class_names = Vec::with_capacity(classes.min(1 << 16));
    for _ in 0..classes {
        let len = r.usize()?;
        let bytes = r.take(len)?;
        let name = std::str::from_utf8(bytes)
            .map_err(|e| FormatError::Invalid(format!("class name: {e}")))?;
        class_names.push(name.to_owned());
    }
    let mut labels = Vec::with_capacity(n.min(1 << 24));
    for i in 0..n {
        let l = r.u16()? as usize;
        if l >= classes {
            return Err(FormatError::Invalid(format!(
                "record {i}: label {l} out of range for {classes} classes"
            )));
        }
        labels.push(l);
    }
    Ok(Header {
        n,
        height,
        width,
        channels,
        t_len,
        class_names,
        labels,
    })
}

fn put_pixels(out: &mut Vec<u8>, pixels: &[f32]) {
    out.reserve(pixels.len() * 4);
    for v in pixels {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_dataset(ds: &FrameDataset) -> FResult<Vec<u8>> {
    let mut out = Vec::new();
    let header = Header {
        n: ds.len(),
        height: ds.height(),
        width: ds.width(),
        channels: ds.channels(),
        t_len: None,
        class_names: ds.class_names().to_vec(),
        labels: ds.labels().to_vec(),
    };
    write_header(&mut out, DSET_MAGIC, &header)?;
    put_pixels(&mut out, ds.pixels());
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> FResult<FrameDataset> {
    let mut r = Reader::new(bytes);
    let h = read_header(&mut r, DSET_MAGIC, false)?;
    let frame_len = h.height * h.width * h.channels;
    let pixels = r.f32s(
        h.n.checked_mul(frame_len)
            .ok_or_else(|| FormatError::Invalid("size overflow".into()))?,
    )?;
    r.finish()?;
    if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(FormatError::Invalid(format!(
            "record {}: pixel value outside [0, 1]",
            i / frame_len.max(1)
        )));
    }
    Ok(FrameDataset::new(
        h.height,
        h.width,
        h.channels,
        h.class_names,
        h.labels,
        pixels,
    )?)
}

pub fn encode_sequences(ds: &SequenceDataset) -> FResult<Vec<u8>> {
    let mut out = Vec::new();
    let header = Header {
        n: ds.len(),
        height: ds.height,
        width: ds.width,
        channels: ds.channels,
        t_len: Some(ds.t_len),
        class_names: ds.class_names.clone(),
        labels: ds.sequences.iter().map(SequenceSample::label).collect(),
    };
    write_header(&mut out, DSEQ_MAGIC, &header)?;
    for s in &ds.sequences {
        out.extend_from_slice(&s.group_id().to_le_bytes());
    }
    for s in &ds.sequences {
        for f in s.frames() {
            put_pixels(&mut out, f);
        }
    }
    Ok(out)
}

pub fn decode_sequences(bytes: &[u8]) -> FResult<SequenceDataset> {
    let mut r = Reader::new(bytes);
    let h = read_header(&mut r, DSEQ_MAGIC, true)?;
    let t_len = h.t_len.expect("sequence header");
    let mut groups = Vec::with_capacity(h.n.min(1 << 24));
    for _ in 0..h.n {
        groups.push(r.u64()?);
    }
    let frame_len = h.height * h.width * h.channels;
    let mut sequences = Vec::with_capacity(h.n.min(1 << 20));
    for (i, (&label, &group)) in h.labels.iter().zip(&groups).enumerate() {
        let mut frames = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            frames.push(r.f32s(frame_len)?);
        }
        sequences.push(
            SequenceSample::new(frames, label, group)
                .map_err(|e| FormatError::Invalid(format!("record {i}: {e}")))?,
        );
    }
    r.finish()?;
    Ok(SequenceDataset::new(
        h.height,
        h.width,
        h.channels,
        h.class_names,
        t_len,
        sequences,
        None,
    )?)
}

/// Parameters are stored as f32; see [`MlpModel::rounded_to_f32`].
pub fn encode_model(model: &MlpModel) -> FResult<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MLPW_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let dims = model.dims();
    put_u32(&mut out, dims.len() - 1)?;
    for w in dims.windows(2) {
        put_u32(&mut out, w[0])?;
        put_u32(&mut out, w[1])?;
    }
    out.extend_from_slice(&model.dropout_rate().to_le_bytes());
    for layer in model.weights().iter().chain(model.biases()) {
        for &v in layer {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> FResult<MlpModel> {
    let mut r = Reader::new(bytes);
    r.magic(MLPW_MAGIC)?;
    let layers = r.usize()?;
    if layers == 0 {
        return Err(FormatError::Invalid("model has no layers".into()));
    }
    let mut dims = Vec::with_capacity(layers.min(1024) + 1);
    for l in 0..layers {
        let (fan_in, fan_out) = (r.usize()?, r.usize()?);
        match dims.last() {
            None => dims.push(fan_in),
            Some(&prev) if prev != fan_in => {
                return Err(FormatError::Invalid(format!(
                    "layer {l} input {fan_in} does not match previous output {prev}"
                )))
            }
            Some(_) => {}
        }
        dims.push(fan_out);
    }
    let dropout = r.f64()?;
    let mut read_layers = |sizes: &mut dyn Iterator<Item = usize>| -> FResult<Vec<Vec<f64>>> {
        sizes
            .map(|n| Ok(r.f32s(n)?.into_iter().map(f64::from).collect()))
            .collect()
    };
    let weights = read_layers(&mut dims.windows(2).map(|w| w[0] * w[1]))?;
    let biases = read_layers(&mut dims[1..].iter().copied())?;
    r.finish()?;
    Ok(MlpModel::from_parts(dims, weights, biases, dropout, 0)?)
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn in_file<T>(path: &Path, r: FResult<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn load_dataset(path: &Path) -> CliResult<FrameDataset> {
    in_file(path, decode_dataset(&read(path)?))
}

pub fn save_dataset(ds: &FrameDataset, path: &Path) -> CliResult<()> {
    write(path, &in_file(path, encode_dataset(ds))?)
}

pub fn load_sequences(path: &Path) -> CliResult<SequenceDataset> {
    in_file(path, decode_sequences(&read(path)?))
}

pub fn save_sequences(ds: &SequenceDataset, path: &Path) -> CliResult<()> {
    write(path, &in_file(path, encode_sequences(ds))?)
}

pub fn load_model(path: &Path) -> CliResult<MlpModel> {
    in_file(path, decode_model(&read(path)?))
}

pub fn save_model(model: &MlpModel, path: &Path) -> CliResult<()> {
    write(path, &in_file(path, encode_model(model))?)
}
