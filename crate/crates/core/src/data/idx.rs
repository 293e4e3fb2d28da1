//! IDX file parsing (the MNIST container format).
//!
//! Big-endian headers: images carry magic `0x00000803` followed by count,
//! rows, and columns; labels carry magic `0x00000801` followed by count.
//! Parse failures report the byte offset where the problem was found.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, offset: 0 }
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let end = self.offset + 4;
        if end > self.bytes.len() {
            return Err(Error::format(
                self.offset as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let v = u32::from_be_bytes(self.bytes[self.offset..end].try_into().unwrap());
        self.offset = end;
        Ok(v)
    }

    fn read_exact(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.offset + len;
        if end > self.bytes.len() {
            return Err(Error::format(
                self.offset as u64,
                format!(
                    "truncated while reading {what}: need {len} bytes, {} left",
                    self.bytes.len() - self.offset
                ),
            ));
        }
        let out = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(out)
    }

    fn expect_eof(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(Error::format(
                self.offset as u64,
                format!("{} trailing bytes", self.bytes.len() - self.offset),
            ));
        }
        Ok(())
    }
}

/// Load an IDX image file as an `N x (rows*cols)` tensor of integer pixel
/// values in `{0..255}`, one image per row.
pub fn load_idx_images(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    parse_idx_images(&bytes)
}

pub(crate) fn parse_idx_images(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes);
    let magic = r.read_u32("image magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(
            0,
            format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let n = r.read_u32("image count")? as usize;
    let rows = r.read_u32("image rows")? as usize;
    let cols = r.read_u32("image cols")? as usize;
    let dim = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::format(8, "image dimensions overflow"))?;
    let pixels = r.read_exact(
        n.checked_mul(dim)
            .ok_or_else(|| Error::format(4, "image payload size overflows"))?,
        "pixel data",
    )?;
    r.expect_eof()?;
    let data: Vec<f64> = pixels.iter().map(|&b| b as f64).collect();
    Tensor::new(n, dim, data)
}

/// Load an IDX label file as one byte per example.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes);
    let magic = r.read_u32("label magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(
            0,
            format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let n = r.read_u32("label count")? as usize;
    let labels = r.read_exact(n, "label data")?.to_vec();
    r.expect_eof()?;
    Ok(labels)
}

/// Load an MNIST-style pair. Labels are optional and only checked for
/// consistency; training ignores them.
pub fn load_mnist_idx(
    images_path: &Path,
    labels_path: Option<&Path>,
) -> Result<(Tensor, Option<Vec<u8>>)> {
    let images = load_idx_images(images_path)?;
    let labels = match labels_path {
        Some(p) => {
            let labels = load_idx_labels(p)?;
            if labels.len() != images.rows() {
                return Err(Error::format(
                    4,
                    format!(
                        "label count {} does not match image count {}",
                        labels.len(),
                        images.rows()
                    ),
                ));
            }
            Some(labels)
        }
        None => None,
    };
    Ok((images, labels))
}

/// Write images (integer values in `{0..255}`, one image per row) as an IDX
/// file with the given image geometry. Used for fixtures and synthetic data.
pub fn write_idx_images(path: &Path, images: &Tensor, rows: usize, cols: usize) -> Result<()> {
    if rows * cols != images.cols() {
        return Err(Error::dimension(format!(
            "geometry {rows}x{cols} does not match row width {}",
            images.cols()
        )));
    }
    let mut bytes = Vec::with_capacity(16 + images.data().len());
    bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(images.rows() as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for v in images.data() {
        if v.fract() != 0.0 || *v < 0.0 || *v > 255.0 {
            return Err(Error::Domain(format!("pixel value {v} not in 0..=255")));
        }
        bytes.push(*v as u8);
    }
    fs::write(path, bytes)?;
    Ok(())
}
