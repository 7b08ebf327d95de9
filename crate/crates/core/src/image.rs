//! Square grayscale images: the signal side of the forward model.
//!
//! Two on-disk representations are supported: 8-bit binary PGM (`P5`) for
//! interchange, and a raw little-endian `f64` array prefixed by a one-line
//! JSON header (`{"n": ...}\n`) for lossless round-trips.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Anything that exposes a square grid of `f64` pixels.
///
/// Implemented by [`Image`] and by `Measurement`, so metrics can score both.
pub trait PixelGrid {
    /// Pixels per side.
    fn side(&self) -> usize;
    /// Row-major pixel data, `side * side` long.
    fn data(&self) -> &[f64];
}

/// An `n x n` grayscale intensity grid with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    n: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Builds an image from row-major pixel data, validating the invariants
    /// (`n >= 2`, all values finite and in `[0, 1]`).
    pub fn new(n: usize, pixels: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidImage(format!("side must be >= 2, got {n}")));
        }
        if pixels.len() != n * n {
            return Err(Error::InvalidImage(format!(
                "expected {} pixels for side {n}, got {}",
                n * n,
                pixels.len()
            )));
        }
        for (i, &v) in pixels.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidImage(format!(
                    "pixel {i} = {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self { n, pixels })
    }

    /// Builds an image by evaluating `f(row, col)`; values are clamped to `[0, 1]`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidImage(format!("side must be >= 2, got {n}")));
        }
        let mut pixels = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                pixels.push(f(r, c).clamp(0.0, 1.0));
            }
        }
        Self::new(n, pixels)
    }

    /// All-zero image.
    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n])
    }

    /// Constant image of value `v`.
    pub fn constant(n: usize, v: f64) -> Result<Self> {
        Self::new(n, vec![v; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.n + col]
    }

    /// Squared L2 norm of the pixel grid.
    pub fn energy(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum()
    }

    /// Bilinear resample to `new_n` pixels per side. Resampling to the same
    /// size returns a bit-identical copy.
    pub fn resize_bilinear(&self, new_n: usize) -> Result<Self> {
        if new_n < 2 {
            return Err(Error::InvalidImage(format!(
                "resize target must be >= 2, got {new_n}"
            )));
        }
        if new_n == self.n {
            return Ok(self.clone());
        }
        let scale = self.n as f64 / new_n as f64;
        let src_max = (self.n - 1) as f64;
        let mut pixels = Vec::with_capacity(new_n * new_n);
        for r in 0..new_n {
            let sy = ((r as f64 + 0.5) * scale - 0.5).clamp(0.0, src_max);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(self.n - 1);
            let fy = sy - y0 as f64;
            for c in 0..new_n {
                let sx = ((c as f64 + 0.5) * scale - 0.5).clamp(0.0, src_max);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(self.n - 1);
                let fx = sx - x0 as f64;
                let top = self.get(y0, x0) * (1.0 - fx) + self.get(y0, x1) * fx;
                let bot = self.get(y1, x0) * (1.0 - fx) + self.get(y1, x1) * fx;
                pixels.push((top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0));
            }
        }
        Self::new(new_n, pixels)
    }

    /// Writes binary 8-bit PGM (`P5`). Pixels are quantized as `round(v * 255)`.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.n * self.n + 32);
        write!(out, "P5\n{} {}\n255\n", self.n, self.n)?;
        out.extend(self.pixels.iter().map(|&v| (v * 255.0).round() as u8));
        fs::write(path, out)?;
        Ok(())
    }

    /// Reads a binary 8-bit PGM (`P5`) file; values are mapped to `v / 255`.
    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let parse_err = |detail: &str| Error::Parse {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        };

        fn next_token(bytes: &[u8], pos: usize) -> Option<(usize, usize)> {
            let mut i = pos;
            loop {
                while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'#' {
                    while i < bytes.len() && bytes[i] != b'\n' {
                        i += 1;
                    }
                    continue;
                }
                break;
            }
            let start = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            (start < i).then_some((start, i))
        }

        let mut pos = 0usize;
        let mut tokens = Vec::with_capacity(4);
        for _ in 0..4 {
            let (s, e) = next_token(&bytes, pos).ok_or_else(|| parse_err("truncated header"))?;
            tokens.push(
                std::str::from_utf8(&bytes[s..e])
                    .map_err(|_| parse_err("bad header"))?
                    .to_string(),
            );
            pos = e;
        }
        if tokens[0] != "P5" {
            return Err(parse_err("not a P5 PGM"));
        }
        let w: usize = tokens[1].parse().map_err(|_| parse_err("bad width"))?;
        let h: usize = tokens[2].parse().map_err(|_| parse_err("bad height"))?;
        let maxval: u32 = tokens[3].parse().map_err(|_| parse_err("bad maxval"))?;
        if w != h {
            return Err(parse_err("image is not square"));
        }
        if maxval != 255 {
            return Err(parse_err("only maxval 255 is supported"));
        }
        // Single whitespace byte separates header from raster.
        pos += 1;
        if bytes.len() < pos + w * h {
            return Err(parse_err("truncated raster"));
        }
        let pixels = bytes[pos..pos + w * h]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        Self::new(w, pixels)
    }

    /// Writes the lossless representation: `{"n": ...}\n` followed by
    /// row-major little-endian `f64` pixels.
    pub fn write_f64(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.n * self.n * 8 + 16);
        out.extend_from_slice(format!("{{\"n\":{}}}\n", self.n).as_bytes());
        for &v in &self.pixels {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Reads the raw `f64` representation written by [`Image::write_f64`].
    pub fn read_f64(path: &Path) -> Result<Self> {
        let (header, data) = read_json_framed(path)?;
        let n = header["n"].as_u64().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            detail: "header missing \"n\"".to_string(),
        })? as usize;
        let pixels = parse_f64_payload(path, &data, n * n)?;
        Self::new(n, pixels)
    }
}

impl PixelGrid for Image {
    fn side(&self) -> usize {
        self.n
    }
    fn data(&self) -> &[f64] {
        &self.pixels
    }
}

/// Reads a file framed as one JSON header line plus a binary payload.
pub(crate) fn read_json_framed(path: &Path) -> Result<(serde_json::Value, Vec<u8>)> {
    let mut file = fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        detail: "missing header line".to_string(),
    })?;
    let header: serde_json::Value =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: format!("bad JSON header: {e}"),
        })?;
    Ok((header, bytes[nl + 1..].to_vec()))
}

pub(crate) fn parse_f64_payload(path: &Path, data: &[u8], count: usize) -> Result<Vec<f64>> {
    if data.len() != count * 8 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            detail: format!("expected {} payload bytes, got {}", count * 8, data.len()),
        });
    }
    Ok(data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
