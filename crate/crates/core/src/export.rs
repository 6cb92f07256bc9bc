//! PGM and CSV writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Result, RrnError};

/// Binary PGM (P5, maxval 255). Values are clamped to `[0, 1]`.
pub fn pgm_bytes(img: &ArrayView2<f64>) -> Vec<u8> {
    let (h, w) = img.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(img.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn write_pgm(path: impl AsRef<Path>, img: &ArrayView2<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, pgm_bytes(img)).map_err(|e| RrnError::io(path, e))
}

/// Parse a P5 file back into `[0, 1]` intensities.
pub fn read_pgm(bytes: &[u8]) -> Result<Array2<f64>> {
    let bad = |r: &str| RrnError::Format {
        path: "<pgm>".into(),
        reason: r.to_string(),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("not an 8-bit P5 image"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let body = &bytes[pos + 1..];
    if body.len() != w * h {
        return Err(bad("payload size"));
    }
    Ok(Array2::from_shape_fn((h, w), |(r, c)| f64::from(body[r * w + c]) / 255.0))
}

/// Tile equally sized images into a `rows x cols` mosaic with a 1-px gap.
pub fn tile(images: &[Array2<f64>], cols: usize) -> Array2<f64> {
    if images.is_empty() || cols == 0 {
        return Array2::zeros((0, 0));
    }
    let (h, w) = images[0].dim();
    let rows = images.len().div_ceil(cols);
    let mut out = Array2::zeros((rows * (h + 1) - 1, cols * (w + 1) - 1));
    for (k, img) in images.iter().enumerate() {
        let (r, c) = (k / cols, k % cols);
        out.slice_mut(ndarray::s![r * (h + 1)..r * (h + 1) + h, c * (w + 1)..c * (w + 1) + w])
            .assign(img);
    }
    out
}

/// Linearly map `[lo, hi]` to `[0, 1]` for heatmap export.
pub fn normalize(m: &ArrayView2<f64>, lo: f64, hi: f64) -> Array2<f64> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    m.mapv(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

/// Minimal CSV builder; floats use Rust's shortest round-trip formatting so
/// output is byte-stable across runs.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn with_header(columns: &[&str]) -> Self {
        let mut csv = Self::default();
        csv.buf.push_str(&columns.join(","));
        csv.buf.push('\n');
        csv
    }

    pub fn row<I, T>(&mut self, fields: I) -> &mut Self
    where
        I: IntoIterator<Item = T>,
        T: std::fmt::Display,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            let _ = write!(self.buf, "{f}");
        }
        self.buf.push('\n');
        self
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, &self.buf).map_err(|e| RrnError::io(path, e))
    }
}

/// Matrix as CSV without a header.
pub fn matrix_csv(m: &ArrayView2<f64>) -> Csv {
    let mut csv = Csv::default();
    for row in m.rows() {
        csv.row(row.iter());
    }
    csv
}
