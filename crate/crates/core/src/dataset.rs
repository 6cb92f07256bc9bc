//! Digit corpus and the IDX container reader.
//!
//! IDX files carry a big-endian header: a 4-byte magic (`0x00000803` for
//! rank-3 unsigned-byte image tensors, `0x00000801` for rank-1 label
//! vectors) followed by one `u32` per dimension. Gzip-compressed files are
//! detected by their leading bytes and decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::Array2;

use crate::error::{Result, RrnError};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Grayscale digit glyphs with their class labels.
///
/// Labels are carried for analysis only; training never reads them.
#[derive(Debug, Clone)]
pub struct DigitCorpus {
    images: Vec<Array2<f64>>,
    labels: Vec<u8>,
    source: String,
}

impl DigitCorpus {
    pub fn new(images: Vec<Array2<f64>>, labels: Vec<u8>, source: impl Into<String>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(RrnError::Consistency(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 9) {
            return Err(RrnError::Consistency(format!("label {bad} outside 0..=9")));
        }
        for (i, img) in images.iter().enumerate() {
            if img.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(RrnError::Consistency(format!(
                    "image {i} has intensities outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            images,
            labels,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, index: usize) -> &Array2<f64> {
        &self.images[index]
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn images(&self) -> &[Array2<f64>] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Glyph box size `(rows, cols)` of the first image, or the MNIST
    /// default when the corpus is empty.
    pub fn glyph_shape(&self) -> (usize, usize) {
        self.images.first().map(|g| g.dim()).unwrap_or((28, 28))
    }

    /// Contiguous sub-corpus `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(RrnError::Argument(format!(
                "slice {start}..{end} out of bounds for corpus of {}",
                self.len()
            )));
        }
        Ok(Self {
            images: self.images[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
            source: format!("{}[{start}..{end}]", self.source),
        })
    }

    /// Indices of every instance of `digit`.
    pub fn indices_of(&self, digit: u8) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == digit).then_some(i))
            .collect()
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| RrnError::io(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| RrnError::Format {
                path: path.to_path_buf(),
                reason: format!("gzip stream: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| RrnError::Format {
            path: path.to_path_buf(),
            reason: "truncated header".into(),
        })
}

/// Parse an IDX image tensor into `[0, 1]` grids (raw byte / 255).
pub fn read_idx_images(path: &Path) -> Result<Vec<Array2<f64>>> {
    let bytes = read_maybe_gz(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(RrnError::Format {
            path: path.to_path_buf(),
            reason: format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let body = &bytes[16..];
    let per = rows * cols;
    if body.len() != count * per {
        return Err(RrnError::Format {
            path: path.to_path_buf(),
            reason: format!(
                "payload has {} bytes, header declares {count}x{rows}x{cols}",
                body.len()
            ),
        });
    }
    Ok(body
        .chunks_exact(per.max(1))
        .take(count)
        .map(|chunk| {
            Array2::from_shape_fn((rows, cols), |(r, c)| f64::from(chunk[r * cols + c]) / 255.0)
        })
        .collect())
}

/// Parse an IDX label vector.
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_maybe_gz(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(RrnError::Format {
            path: path.to_path_buf(),
            reason: format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(RrnError::Format {
            path: path.to_path_buf(),
            reason: format!("payload has {} bytes, header declares {count}", body.len()),
        });
    }
    Ok(body.to_vec())
}

/// Load an image/label IDX pair into a corpus.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<DigitCorpus> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.len() != labels.len() {
        return Err(RrnError::Consistency(format!(
            "{} has {} images but {} has {} labels",
            images_path.display(),
            images.len(),
            labels_path.display(),
            labels.len()
        )));
    }
    DigitCorpus::new(images, labels, images_path.display().to_string())
}

/// Serialize images and labels as IDX (uncompressed). Intensities are
/// quantized to bytes with rounding.
pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    images: &[Array2<f64>],
    labels: &[u8],
) -> Result<()> {
    let (rows, cols) = images.first().map(|g| g.dim()).unwrap_or((0, 0));
    let mut buf = Vec::with_capacity(16 + images.len() * rows * cols);
    buf.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    buf.extend_from_slice(&(images.len() as u32).to_be_bytes());
    buf.extend_from_slice(&(rows as u32).to_be_bytes());
    buf.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        buf.extend(img.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    let images_path = images_path.as_ref();
    fs::write(images_path, &buf).map_err(|e| RrnError::io(images_path, e))?;

    let mut lbuf = Vec::with_capacity(8 + labels.len());
    lbuf.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbuf.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lbuf.extend_from_slice(labels);
    let labels_path = labels_path.as_ref();
    fs::write(labels_path, &lbuf).map_err(|e| RrnError::io(labels_path, e))
}
