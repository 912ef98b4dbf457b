//! MNIST ingestion: IDX parsing, binarization, class-stratified subsets and the
//! packed `BDS1` dataset file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const BDS_MAGIC: &[u8; 4] = b"BDS1";

/// Grayscale images as loaded from IDX files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    pub rows: usize,
    pub cols: usize,
    /// `count × rows·cols` bytes, image-major.
    pub pixels: Vec<u8>,
    pub labels: Option<Vec<u8>>,
    /// SHA-256 (hex) of the source bytes.
    pub source_digest: String,
}

impl RawDataset {
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        if self.dim() == 0 {
            0
        } else {
            self.pixels.len() / self.dim()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let d = self.dim();
        &self.pixels[index * d..(index + 1) * d]
    }

    /// Lifts a binary dataset to pixel form (`0 → 0`, `1 → 255`).
    pub fn from_binary(ds: &BinaryDataset) -> Self {
        Self {
            rows: 1,
            cols: ds.dim(),
            pixels: ds.vectors.iter().flatten().map(|&b| b * 255).collect(),
            labels: ds.labels.clone(),
            source_digest: ds.source_digest.clone(),
        }
    }
}

/// Binary vectors of a common length, with optional digit labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryDataset {
    dim: usize,
    pub vectors: Vec<Vec<u8>>,
    pub labels: Option<Vec<u8>>,
    pub source_digest: String,
}

impl BinaryDataset {
    pub fn new(
        vectors: Vec<Vec<u8>>,
        labels: Option<Vec<u8>>,
        source_digest: String,
    ) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if let Some(bad) = vectors.iter().position(|v| v.len() != dim) {
            return Err(Error::Dimension(format!(
                "vector {bad} has length {}, expected {dim}",
                vectors[bad].len()
            )));
        }
        if vectors.iter().flatten().any(|&b| b > 1) {
            return Err(Error::InvalidArgument(
                "dataset entries must be 0 or 1".into(),
            ));
        }
        if let Some(labels) = &labels {
            if labels.len() != vectors.len() {
                return Err(Error::CountMismatch {
                    images: vectors.len(),
                    labels: labels.len(),
                });
            }
            if let Some(l) = labels.iter().find(|&&l| l > 9) {
                return Err(Error::InvalidArgument(format!("label {l} outside 0..=9")));
            }
        }
        Ok(Self {
            dim,
            vectors,
            labels,
            source_digest,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Per-unit count of ones.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.dim];
        for v in &self.vectors {
            for (c, &b) in counts.iter_mut().zip(v) {
                *c += b as usize;
            }
        }
        counts
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let row_bytes = self.dim.div_ceil(8);
        let mut out = Vec::with_capacity(21 + self.len() * (row_bytes + 1));
        out.extend_from_slice(BDS_MAGIC);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.push(self.labels.is_some() as u8);
        for v in &self.vectors {
            pack_bits(v, &mut out);
        }
        if let Some(labels) = &self.labels {
            out.extend_from_slice(labels);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "BDS1 dataset";
        if bytes.len() < 21 {
            return Err(Error::Truncated {
                what: WHAT,
                expected: 21,
                actual: bytes.len(),
            });
        }
        if &bytes[..4] != BDS_MAGIC {
            return Err(Error::BadMagic {
                what: WHAT,
                expected: u32::from_be_bytes(*BDS_MAGIC),
                actual: u32::from_be_bytes(bytes[..4].try_into().unwrap()),
            });
        }
        let count = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let dim = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let has_labels = match bytes[20] {
            0 => false,
            1 => true,
            x => return Err(Error::format(WHAT, format!("has_labels flag is {x}"))),
        };
        let row_bytes = dim.div_ceil(8);
        let expected = 21 + count * row_bytes + if has_labels { count } else { 0 };
        if bytes.len() != expected {
            return Err(Error::Truncated {
                what: WHAT,
                expected,
                actual: bytes.len(),
            });
        }
        let body = &bytes[21..];
        let vectors = (0..count)
            .map(|k| unpack_bits(&body[k * row_bytes..(k + 1) * row_bytes], dim))
            .collect();
        let labels = has_labels.then(|| body[count * row_bytes..].to_vec());
        Self::new(vectors, labels, sha256_hex(&[bytes]))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Appends `bits` packed LSB-first into `ceil(len/8)` bytes.
pub(crate) fn pack_bits(bits: &[u8], out: &mut Vec<u8>) {
    for chunk in bits.chunks(8) {
        let byte = chunk
            .iter()
            .enumerate()
            .fold(0u8, |acc, (k, &b)| acc | ((b & 1) << k));
        out.push(byte);
    }
}

pub(crate) fn unpack_bits(bytes: &[u8], len: usize) -> Vec<u8> {
    (0..len).map(|k| (bytes[k / 8] >> (k % 8)) & 1).collect()
}

pub(crate) fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    let mut s = String::with_capacity(64);
    for b in hasher.finalize().iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(Error::Truncated {
            what,
            expected: offset + 4,
            actual: bytes.len(),
        })
}

/// Parses an IDX3 unsigned-byte image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    const WHAT: &str = "IDX image file";
    let magic = read_be_u32(bytes, 0, WHAT)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            what: WHAT,
            expected: IDX_IMAGES_MAGIC,
            actual: magic,
        });
    }
    let count = read_be_u32(bytes, 4, WHAT)? as usize;
    let rows = read_be_u32(bytes, 8, WHAT)? as usize;
    let cols = read_be_u32(bytes, 12, WHAT)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            what: WHAT,
            expected,
            actual: bytes.len(),
        });
    }
    Ok((count, rows, cols, bytes[16..expected].to_vec()))
}

/// Parses an IDX1 unsigned-byte label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    const WHAT: &str = "IDX label file";
    let magic = read_be_u32(bytes, 0, WHAT)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            what: WHAT,
            expected: IDX_LABELS_MAGIC,
            actual: magic,
        });
    }
    let count = read_be_u32(bytes, 4, WHAT)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            what: WHAT,
            expected,
            actual: bytes.len(),
        });
    }
    Ok(bytes[8..expected].to_vec())
}

/// Loads a pair of IDX image/label files.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<RawDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = fs::read(ip).map_err(|e| Error::file(ip, e))?;
    let label_bytes = fs::read(lp).map_err(|e| Error::file(lp, e))?;
    let (count, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if labels.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    Ok(RawDataset {
        rows,
        cols,
        pixels,
        labels: Some(labels),
        source_digest: sha256_hex(&[&image_bytes, &label_bytes]),
    })
}

/// MNIST split loaded from the standard file names in `dir`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

pub fn load_mnist(dir: impl AsRef<Path>, split: MnistSplit) -> Result<RawDataset> {
    let dir = dir.as_ref();
    let prefix = match split {
        MnistSplit::Train => "train",
        MnistSplit::Test => "t10k",
    };
    load_idx(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binarization {
    /// `pixel / 255 > t`.
    Threshold(f64),
    /// `Bernoulli(pixel / 255)`; image `k` draws from stream `k` of the seed.
    Stochastic(u64),
}

impl Default for Binarization {
    fn default() -> Self {
        Binarization::Threshold(0.5)
    }
}

pub fn binarize(raw: &RawDataset, mode: Binarization) -> BinaryDataset {
    let vectors = (0..raw.len())
        .map(|k| {
            let img = raw.image(k);
            match mode {
                Binarization::Threshold(t) => {
                    img.iter().map(|&p| (p as f64 / 255.0 > t) as u8).collect()
                }
                Binarization::Stochastic(seed) => {
                    let mut rng = SeededRng::stream(seed, k as u64);
                    img.iter()
                        .map(|&p| rng.bernoulli(p as f64 / 255.0))
                        .collect()
                }
            }
        })
        .collect();
    BinaryDataset {
        dim: raw.dim(),
        vectors,
        labels: raw.labels.clone(),
        source_digest: raw.source_digest.clone(),
    }
}

/// `per_class` items of every label present, drawn without replacement.
/// Output is grouped by ascending label, in draw order within a class.
pub fn stratified_subset(
    ds: &BinaryDataset,
    per_class: usize,
    rng: &mut SeededRng,
) -> Result<BinaryDataset> {
    let labels = ds
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("stratified subset needs labels".into()))?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); 10];
    for (k, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(k);
    }
    let mut vectors = Vec::new();
    let mut out_labels = Vec::new();
    for (label, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < per_class {
            return Err(Error::InvalidArgument(format!(
                "class {label} has {} members, {per_class} requested",
                members.len()
            )));
        }
        for pick in sample_indices(rng, members.len(), per_class) {
            vectors.push(ds.vectors[members[pick]].clone());
            out_labels.push(label as u8);
        }
    }
    BinaryDataset::new(vectors, Some(out_labels), ds.source_digest.clone())
}
