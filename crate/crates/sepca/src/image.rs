//! Image stacks and their on-disk format.
//!
//! A stack is `n` square images of side `L`, stored row-major as `f64`.
//! Pixel `(ix, iy)` sits at Cartesian coordinates `(ix - L/2, iy - L/2)`,
//! so the disk of radius `R` is centered on the grid center.
//!
//! On disk a stack is a JSON header `{n, L, dtype, layout, kind}` at `path`
//! plus a sidecar binary blob at `path + ".bin"` holding `n * L * L`
//! little-endian 8-byte floats.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether pixel values are Poisson photon counts or clean intensities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StackKind {
    Counts,
    Intensity,
}

#[derive(Debug, Serialize, Deserialize)]
struct StackHeader {
    n: usize,
    #[serde(rename = "L")]
    l: usize,
    dtype: String,
    layout: String,
    kind: StackKind,
}

/// A stack of n real L x L images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    pub n: usize,
    pub l: usize,
    pub kind: StackKind,
    pixels: Vec<f64>,
}

impl ImageStack {
    pub fn zeros(n: usize, l: usize, kind: StackKind) -> Self {
        Self {
            n,
            l,
            kind,
            pixels: vec![0.0; n * l * l],
        }
    }

    pub fn from_pixels(n: usize, l: usize, kind: StackKind, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != n * l * l {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer has {} values, expected {}",
                pixels.len(),
                n * l * l
            )));
        }
        Ok(Self { n, l, kind, pixels })
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.pixels[i * self.l * self.l..(i + 1) * self.l * self.l]
    }

    pub fn image_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.pixels[i * self.l * self.l..(i + 1) * self.l * self.l]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    /// Value at pixel indices (ix, iy) of image i.
    pub fn get(&self, i: usize, ix: usize, iy: usize) -> f64 {
        self.pixels[(i * self.l + ix) * self.l + iy]
    }

    pub fn set(&mut self, i: usize, ix: usize, iy: usize, v: f64) {
        self.pixels[(i * self.l + ix) * self.l + iy] = v;
    }

    /// Pixel-wise mean over the stack.
    pub fn mean_image(&self) -> Vec<f64> {
        let m = self.l * self.l;
        let mut out = vec![0.0; m];
        for i in 0..self.n {
            let img = self.image(i);
            for (o, &v) in out.iter_mut().zip(img) {
                *o += v;
            }
        }
        let inv = 1.0 / self.n.max(1) as f64;
        for o in &mut out {
            *o *= inv;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("stack contains non-finite pixels".into()));
        }
        if self.kind == StackKind::Counts && self.pixels.iter().any(|&v| v < 0.0) {
            return Err(Error::Data("count stack contains negative pixels".into()));
        }
        Ok(())
    }

    /// Write header JSON at `path` and the pixel blob at `path + ".bin"`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let header = StackHeader {
            n: self.n,
            l: self.l,
            dtype: "f64".into(),
            layout: "row-major".into(),
            kind: self.kind,
        };
        fs::write(path, serde_json::to_string_pretty(&header)?)?;
        let mut buf = Vec::with_capacity(self.pixels.len() * 8);
        for &v in &self.pixels {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(sidecar_path(path))?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let header: StackHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
        if header.dtype != "f64" || header.layout != "row-major" {
            return Err(Error::Data(format!(
                "unsupported stack encoding: dtype {} layout {}",
                header.dtype, header.layout
            )));
        }
        let mut f = fs::File::open(sidecar_path(path))?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        let expect = header.n * header.l * header.l * 8;
        if buf.len() != expect {
            return Err(Error::Data(format!(
                "stack payload has {} bytes, header implies {}",
                buf.len(),
                expect
            )));
        }
        let pixels: Vec<f64> = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::from_pixels(header.n, header.l, header.kind, pixels)
    }
}

/// Binary sidecar path for a stack or model header file.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".bin");
    std::path::PathBuf::from(s)
}

/// Counter-clockwise rotation by `alpha` with bilinear interpolation;
/// samples falling outside the grid read as zero.
pub fn rotate_bilinear(image: &[f64], l: usize, alpha: f64) -> Vec<f64> {
    let half = (l / 2) as isize;
    let (sa, ca) = alpha.sin_cos();
    let mut out = vec![0.0; l * l];
    for ix in 0..l {
        let x = ix as isize as f64 - half as f64;
        for iy in 0..l {
            let y = iy as isize as f64 - half as f64;
            // source point R_{-alpha} (x, y)
            let xs = ca * x + sa * y;
            let ys = -sa * x + ca * y;
            let x0 = xs.floor();
            let y0 = ys.floor();
            let fx = xs - x0;
            let fy = ys - y0;
            let mut acc = 0.0;
            for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
                    let jx = x0 + dx + half as f64;
                    let jy = y0 + dy + half as f64;
                    if jx >= 0.0 && jx < l as f64 && jy >= 0.0 && jy < l as f64 {
                        acc += wx * wy * image[(jx as usize) * l + jy as usize];
                    }
                }
            }
            out[ix * l + iy] = acc;
        }
    }
    out
}

/// Reflection about the y axis: out(x, y) = in(-x, y). The single column with
/// -x outside the grid reads as zero.
pub fn reflect_y(image: &[f64], l: usize) -> Vec<f64> {
    let mut out = vec![0.0; l * l];
    for ix in 0..l {
        let sx = l as isize - ix as isize; // (L/2 - x) as index
        if sx >= 0 && (sx as usize) < l {
            let sx = sx as usize;
            out[ix * l..(ix + 1) * l].copy_from_slice(&image[sx * l..(sx + 1) * l]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.stack");
        let mut s = ImageStack::zeros(3, 4, StackKind::Intensity);
        for (i, v) in s.pixels_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.25 - 3.0;
        }
        s.write(&path).unwrap();
        let t = ImageStack::read(&path).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn size_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.stack");
        let s = ImageStack::zeros(2, 4, StackKind::Counts);
        s.write(&path).unwrap();
        std::fs::write(sidecar_path(&path), [0u8; 24]).unwrap();
        assert!(matches!(ImageStack::read(&path), Err(Error::Data(_))));
    }

    #[test]
    fn rotation_by_zero_is_identity() {
        let l = 8;
        let img: Vec<f64> = (0..l * l).map(|i| (i % 7) as f64).collect();
        let out = rotate_bilinear(&img, l, 0.0);
        for (a, b) in img.iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_turn_permutes_interior_pixels() {
        let l = 8;
        let mut img = vec![0.0; l * l];
        img[(5) * l + 4] = 2.0; // (x, y) = (1, 0)
        let out = rotate_bilinear(&img, l, std::f64::consts::FRAC_PI_2);
        // CCW quarter turn sends (1, 0) to (0, 1)
        assert!((out[4 * l + 5] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reflection_is_an_involution_inside() {
        let l = 8;
        let img: Vec<f64> = (0..l * l).map(|i| i as f64).collect();
        let twice = reflect_y(&reflect_y(&img, l), l);
        // interior rows (index >= 1 maps within range) survive
        for ix in 1..l {
            for iy in 0..l {
                assert_eq!(twice[ix * l + iy], img[ix * l + iy]);
            }
        }
    }
}
