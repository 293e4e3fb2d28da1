//! 8-bit grayscale PGM (P5) output for sample and inpainting grids.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Write raw 8-bit pixels with the exact header `P5\n<w> <h>\n255\n`.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::dimension(format!(
            "pixel buffer has {} bytes, {width}x{height} needs {}",
            pixels.len(),
            width * height
        )));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes)?;
    Ok(())
}

/// Map a value in `domain` to an 8-bit level (the inverse of dequantization,
/// up to the dropped noise).
#[inline]
pub fn quantize(v: f64, domain: (f64, f64)) -> u8 {
    let unit = (v - domain.0) / (domain.1 - domain.0);
    (unit * 256.0).floor().clamp(0.0, 255.0) as u8
}

/// Tile `samples` (one image per row, `img_w * img_h` wide) into a grid of
/// `ceil(sqrt(n))` columns and write it as one PGM. Unused cells stay black.
pub fn write_image_grid(
    path: &Path,
    samples: &Tensor,
    img_w: usize,
    img_h: usize,
    domain: (f64, f64),
) -> Result<()> {
    if samples.cols() != img_w * img_h {
        return Err(Error::dimension(format!(
            "rows are {} wide, image geometry {img_w}x{img_h} needs {}",
            samples.cols(),
            img_w * img_h
        )));
    }
    let n = samples.rows();
    let grid_cols = (n as f64).sqrt().ceil() as usize;
    let grid_rows = n.div_ceil(grid_cols);
    let (width, height) = (grid_cols * img_w, grid_rows * img_h);
    let mut pixels = vec![0u8; width * height];
    for (idx, row) in (0..n).map(|r| (r, samples.row(r))) {
        let (cell_r, cell_c) = (idx / grid_cols, idx % grid_cols);
        for py in 0..img_h {
            for px in 0..img_w {
                let v = quantize(row[py * img_w + px], domain);
                pixels[(cell_r * img_h + py) * width + cell_c * img_w + px] = v;
            }
        }
    }
    write_pgm(path, width, height, &pixels)
}
