//! The end-to-end estimation pipeline and the trained-model container.
//!
//! `estimate` wires the steps together: sample mean, support/band-limit
//! selection, rotationally invariant mean, prewhitening, coefficient
//! expansion, per-frequency covariance, eigenvalue shrinkage, recoloring and
//! scaling. The result bundles everything the denoiser and the kernel
//! evaluator need, and serializes to a JSON-indexed binary container.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisParams, FbBasis};
use crate::covariance::{block_covariance, center_zero_frequency, shrink_block};
use crate::error::{Error, Result};
use crate::image::{sidecar_path, ImageStack, StackKind};
use crate::mean::{homogenize, rotinv_mean, RotInvMean};
use crate::recolor::{recolor_block, recolor_matrices, scale_block, RecolorMatrices, ScaledBlocks};
use crate::transform::{estimate_band_limit, estimate_support_radius, expand};

/// Band limit used for the k = 0 expansion that defines the whitening mean;
/// full Nyquist so the mean keeps all its radial detail.
pub const MEAN_BAND_LIMIT: f64 = 0.5;

/// Fraction of cumulative mass used by the automatic support/band estimates.
pub const AUTO_FRACTION: f64 = 0.999;

/// Auto or fixed choice for a pipeline parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Param<T> {
    Auto,
    Fixed(T),
}

/// Pipeline options.
#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub support_radius: Param<usize>,
    pub band_limit: Param<f64>,
    pub include_reflections: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            support_radius: Param::Auto,
            band_limit: Param::Auto,
            include_reflections: true,
        }
    }
}

/// Everything the covariance kernel and the Wiener denoiser need.
#[derive(Debug, Clone)]
pub struct SepcaModel {
    pub basis: FbBasis,
    /// Whitening mean: k = 0 expansion at `MEAN_BAND_LIMIT`.
    pub mean_white: RotInvMean,
    /// Raw-mean coefficients in the main basis's k = 0 block.
    pub mean_coeffs: Vec<f64>,
    pub recolor: RecolorMatrices,
    pub scaled: ScaledBlocks,
    /// Spikes above the Marchenko-Pastur edge, per frequency.
    pub spike_ranks: Vec<usize>,
    /// Shrunken eigenvalues per frequency.
    pub shrunken_eigenvalues: Vec<Vec<f64>>,
    pub estimated_support_radius: usize,
    pub estimated_band_limit: f64,
    pub band_limit_flat_warning: bool,
    pub include_reflections: bool,
}

impl SepcaModel {
    /// Components kept after the scaling filter, per frequency.
    pub fn kept_ranks(&self) -> &[usize] {
        &self.scaled.kept_ranks
    }

    pub fn total_rank(&self) -> usize {
        self.scaled.total_rank()
    }
}

/// Run the estimation pipeline on a count stack.
pub fn estimate(stack: &ImageStack, opts: &EstimateOptions) -> Result<SepcaModel> {
    if stack.n == 0 {
        return Err(Error::InvalidArgument("empty stack".into()));
    }
    stack.validate()?;
    let l = stack.l;

    let r_est = match opts.support_radius {
        Param::Fixed(r) => r,
        Param::Auto => estimate_support_radius(stack, AUTO_FRACTION)?,
    };
    if r_est < 1 || 2 * r_est > l {
        return Err(Error::InvalidArgument(format!(
            "support radius {r_est} incompatible with image size {l}"
        )));
    }

    // rotationally invariant mean at full Nyquist, then prewhiten
    let mean_basis = FbBasis::zero_frequency(MEAN_BAND_LIMIT, r_est, l)?;
    let mean_white = rotinv_mean(stack, &mean_basis)?;
    let whitened = homogenize(stack, &mean_white)?;

    let (c_est, flat) = match opts.band_limit {
        Param::Fixed(c) => (c, false),
        Param::Auto => {
            let est = estimate_band_limit(&whitened, AUTO_FRACTION)?;
            (est.band_limit, est.flat_spectrum)
        }
    };

    let basis = FbBasis::build(BasisParams::new(c_est, r_est, l)?)?;

    // coefficients of the whitened stack, and of the raw mean in this basis
    let coeffs = expand(&whitened, &basis)?;
    let mean_stack = ImageStack::from_pixels(1, l, StackKind::Intensity, stack.mean_image())?;
    let mean_cb = expand(&mean_stack, &basis)?;
    let mean_coeffs: Vec<f64> = (0..basis.p(0)).map(|q| mean_cb.blocks[0][(q, 0)].re).collect();

    let centered = center_zero_frequency(&coeffs);
    let cov = block_covariance(&centered, opts.include_reflections)?;
    let shrunk = shrink_block(&cov);
    let recolor = recolor_matrices(&mean_white, &basis)?;
    let recolored = recolor_block(&shrunk, &recolor)?;
    let scaled = scale_block(&recolored, &recolor, &shrunk)?;

    Ok(SepcaModel {
        basis,
        mean_white,
        mean_coeffs,
        recolor,
        spike_ranks: shrunk.spike_ranks.clone(),
        shrunken_eigenvalues: shrunk.ell.clone(),
        scaled,
        estimated_support_radius: r_est,
        estimated_band_limit: c_est,
        band_limit_flat_warning: flat,
        include_reflections: opts.include_reflections,
    })
}

// ---------------------------------------------------------------------------
// serialization: JSON index + little-endian binary payload
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct BlockEntry {
    k: usize,
    p: usize,
    /// f64 offsets into the payload for B, D (real) and S_s (complex).
    b_off: usize,
    d_off: usize,
    s_off: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    band_limit: f64,
    support_radius: usize,
    image_size: usize,
    mean_band_limit: f64,
    mean_white_coeffs: Vec<f64>,
    mean_coeffs: Vec<f64>,
    gammas: Vec<f64>,
    n_samples: usize,
    spike_ranks: Vec<usize>,
    kept_ranks: Vec<usize>,
    shrunken_eigenvalues: Vec<Vec<f64>>,
    alphas: Vec<Vec<f64>>,
    estimated_support_radius: usize,
    estimated_band_limit: f64,
    band_limit_flat_warning: bool,
    include_reflections: bool,
    blocks: Vec<BlockEntry>,
}

impl SepcaModel {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut payload: Vec<f64> = Vec::new();
        let mut entries = Vec::new();
        for k in 0..=self.basis.k_max {
            let p = self.basis.p(k);
            let b_off = payload.len();
            payload.extend(self.recolor.b[k].iter());
            let d_off = payload.len();
            payload.extend(self.recolor.d[k].iter());
            let s_off = payload.len();
            for z in self.scaled.blocks[k].iter() {
                payload.push(z.re);
                payload.push(z.im);
            }
            entries.push(BlockEntry {
                k,
                p,
                b_off,
                d_off,
                s_off,
            });
        }
        let header = ModelHeader {
            format: "sepca-model-v1".into(),
            band_limit: self.basis.params.band_limit,
            support_radius: self.basis.params.support_radius,
            image_size: self.basis.params.image_size,
            mean_band_limit: self.mean_white.basis.params.band_limit,
            mean_white_coeffs: self.mean_white.coeffs.clone(),
            mean_coeffs: self.mean_coeffs.clone(),
            gammas: self.scaled.gammas.clone(),
            n_samples: self.scaled.n_samples,
            spike_ranks: self.spike_ranks.clone(),
            kept_ranks: self.scaled.kept_ranks.clone(),
            shrunken_eigenvalues: self.shrunken_eigenvalues.clone(),
            alphas: self.scaled.alphas.clone(),
            estimated_support_radius: self.estimated_support_radius,
            estimated_band_limit: self.estimated_band_limit,
            band_limit_flat_warning: self.band_limit_flat_warning,
            include_reflections: self.include_reflections,
            blocks: entries,
        };
        fs::write(path, serde_json::to_string_pretty(&header)?)?;
        let mut buf = Vec::with_capacity(payload.len() * 8);
        for v in payload {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(sidecar_path(path))?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let header: ModelHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
        if header.format != "sepca-model-v1" {
            return Err(Error::Data(format!("unknown model format {}", header.format)));
        }
        let mut f = fs::File::open(sidecar_path(path))?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        if buf.len() % 8 != 0 {
            return Err(Error::Data("model payload is not f64-aligned".into()));
        }
        let payload: Vec<f64> = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();

        let basis = FbBasis::build(BasisParams::new(
            header.band_limit,
            header.support_radius,
            header.image_size,
        )?)?;
        let mean_basis = FbBasis::zero_frequency(
            header.mean_band_limit,
            header.support_radius,
            header.image_size,
        )?;
        // rebuild the whitening mean from its stored coefficients
        let mean_white = rebuild_profile(&RotInvMean::from_parts(
            mean_basis,
            header.mean_white_coeffs.clone(),
            vec![0.0; header.image_size * header.image_size],
        ));

        let mut b_mats = Vec::new();
        let mut d_mats = Vec::new();
        let mut s_mats = Vec::new();
        for e in &header.blocks {
            let p = e.p;
            if basis.p(e.k) != p {
                return Err(Error::Data(format!(
                    "block {} has {} radial indices on disk, basis expects {}",
                    e.k,
                    p,
                    basis.p(e.k)
                )));
            }
            let need = |off: usize, len: usize| -> Result<&[f64]> {
                payload
                    .get(off..off + len)
                    .ok_or_else(|| Error::Data("model payload truncated".into()))
            };
            b_mats.push(DMatrix::from_column_slice(p, p, need(e.b_off, p * p)?));
            d_mats.push(DMatrix::from_column_slice(p, p, need(e.d_off, p * p)?));
            let raw = need(e.s_off, 2 * p * p)?;
            let mut s = DMatrix::<Complex64>::zeros(p, p);
            for (i, z) in s.iter_mut().enumerate() {
                *z = Complex64::new(raw[2 * i], raw[2 * i + 1]);
            }
            s_mats.push(s);
        }
        let scaled = ScaledBlocks {
            blocks: s_mats,
            alphas: header.alphas.clone(),
            kept_ranks: header.kept_ranks.clone(),
            gammas: header.gammas.clone(),
            n_samples: header.n_samples,
        };
        Ok(SepcaModel {
            basis,
            mean_white,
            mean_coeffs: header.mean_coeffs,
            recolor: RecolorMatrices {
                b: b_mats,
                d: d_mats,
            },
            scaled,
            spike_ranks: header.spike_ranks,
            shrunken_eigenvalues: header.shrunken_eigenvalues,
            estimated_support_radius: header.estimated_support_radius,
            estimated_band_limit: header.estimated_band_limit,
            band_limit_flat_warning: header.band_limit_flat_warning,
            include_reflections: header.include_reflections,
        })
    }
}

/// Recompute the pixel-grid profile of a mean whose coefficients were
/// replaced after construction.
fn rebuild_profile(mean: &RotInvMean) -> RotInvMean {
    let basis = mean.basis.clone();
    let l = basis.params.image_size;
    let coeffs = mean.coeffs.clone();
    let half = (l / 2) as f64;
    let r_sup = basis.params.support_radius as f64;
    let mut profile_grid = vec![0.0; l * l];
    let mut cache = std::collections::BTreeMap::<u64, f64>::new();
    for ix in 0..l {
        let x = ix as f64 - half;
        for iy in 0..l {
            let y = iy as f64 - half;
            let r = x.hypot(y);
            if r <= r_sup {
                let v = *cache.entry(r.to_bits()).or_insert_with(|| {
                    let mut acc = 0.0;
                    for (q, &a) in coeffs.iter().enumerate() {
                        acc += a * basis.radial_profile(0, q, r).unwrap_or(0.0);
                    }
                    acc.max(0.0)
                });
                profile_grid[ix * l + iy] = v;
            }
        }
    }
    RotInvMean::from_parts(basis, coeffs, profile_grid)
}
