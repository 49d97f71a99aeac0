//! IDX ingestion, normalization and stratified sampling.
//!
//! Layout (all header words big-endian `u32`):
//!
//! ```text
//! images: 0x00000803 | count | rows (28) | cols (28) | count·rows·cols pixel bytes
//! labels: 0x00000801 | count | count label bytes
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.offset;
        if n > available {
            return Err(Error::Truncated {
                offset: self.offset,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn check_magic(kind: &str, found: u32, expected: u32) -> Result<()> {
    if found != expected {
        return Err(Error::Format(format!(
            "{kind} magic 0x{found:08x}, expected 0x{expected:08x}"
        )));
    }
    Ok(())
}

/// Parses an IDX image stream into 28×28 tensors with pixels scaled to [0,1].
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut r = Reader { bytes, offset: 0 };
    check_magic("image", r.u32()?, IMAGES_MAGIC)?;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::Format(format!("images are {rows}x{cols}, expected 28x28")));
    }
    let pixels = r.take(count * rows * cols)?;
    Ok(pixels
        .chunks_exact(rows * cols)
        .map(|px| {
            let data = px.iter().map(|&b| f64::from(b) / 255.0).collect();
            Tensor::new(vec![rows, cols], data).expect("chunk is rows*cols")
        })
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader { bytes, offset: 0 };
    check_magic("label", r.u32()?, LABELS_MAGIC)?;
    let count = r.u32()? as usize;
    Ok(r.take(count)?.iter().map(|&b| usize::from(b)).collect())
}

/// Inverse of [`parse_idx_images`]; pixels are rounded back to bytes.
pub fn encode_idx_images(images: &[Tensor]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + images.len() * IMAGE_SIDE * IMAGE_SIDE);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    for img in images {
        if img.shape() != [IMAGE_SIDE, IMAGE_SIDE] {
            return Err(Error::dim("encode_idx_images", img.shape(), &[IMAGE_SIDE, IMAGE_SIDE]));
        }
        out.extend(img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| Error::Format(format!("label {l} does not fit a byte")))?;
        out.push(b);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Labeled images. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<Tensor>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Dataset { images, labels })
    }

    /// Reads `{train,t10k}-{images-idx3,labels-idx1}-ubyte` from `dir`.
    pub fn load(dir: &Path, split: Split) -> Result<Self> {
        let read = |name: String| {
            let path = dir.join(name);
            std::fs::read(&path).map_err(|e| Error::io(path, e))
        };
        let images = parse_idx_images(&read(format!("{}-images-idx3-ubyte", split.prefix()))?)?;
        let labels = parse_idx_labels(&read(format!("{}-labels-idx1-ubyte", split.prefix()))?)?;
        Dataset::new(images, labels)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, idx: usize) -> Result<(&Tensor, usize)> {
        match (self.images.get(idx), self.labels.get(idx)) {
            (Some(img), Some(&l)) => Ok((img, l)),
            _ => Err(Error::Config(format!("sample {idx} outside dataset of {}", self.len()))),
        }
    }

    /// Distinct labels, ascending, with their sample counts.
    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut images = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let (img, l) = self.get(i)?;
            images.push(img.clone());
            labels.push(l);
        }
        Ok(Dataset { images, labels })
    }

    /// Keeps only samples whose label is in `classes`, relabeled to their
    /// position in `classes`.
    pub fn relabel(&self, classes: &[usize]) -> Self {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (img, l) in self.images.iter().zip(&self.labels) {
            if let Some(pos) = classes.iter().position(|c| c == l) {
                images.push(img.clone());
                labels.push(pos);
            }
        }
        Dataset { images, labels }
    }
}

/// Exactly `per_class` samples from every class present, drawn without
/// replacement. Output is grouped by ascending class.
pub fn stratified_subset(ds: &Dataset, per_class: usize, seed: u64) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::Config("per_class must be positive".into()));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(per_class * by_class.len());
    for (class, mut members) in by_class {
        if members.len() < per_class {
            return Err(Error::Config(format!(
                "class {class} has {} samples, fewer than the {per_class} requested",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..per_class]);
    }
    ds.select(&chosen)
}

/// One shuffled pass over `ds` split into batches of `batch_size` indices;
/// the final short batch is kept.
pub fn batches(ds: &Dataset, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
