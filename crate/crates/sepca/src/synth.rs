//! Synthetic data with exactly known rotationally invariant ground truth.
//!
//! Clean images are random combinations of basis functions: per angular
//! frequency the coefficients are proper complex Gaussians with a prescribed
//! real PSD covariance, a common uniform rotation phase e^{-i k alpha} is
//! applied per image, and the image is reconstructed on the grid. The
//! ensemble's pixel covariance is then exactly the covariance kernel
//! assembled from the per-frequency blocks, and the Poisson observation step
//! adds the diagonal mean term on top.
//!
//! Non-negativity: the mean must dominate the fluctuations. Negative pixels
//! are clipped at zero; models whose probe clip mass exceeds 1% of the
//! positive mass are rejected at construction.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisParams, FbBasis};
use crate::bessel::gauss_legendre;
use crate::covariance::BlockCovariance;
use crate::error::{Error, Result};
use crate::image::{sidecar_path, ImageStack, StackKind};
use crate::kernel::covariance_kernel;
use crate::transform::{reconstruct, CoeffBlocks};

/// Largest admissible probe clip mass (fraction of positive mass).
pub const MAX_CLIP_RATE: f64 = 0.01;

/// Ground-truth generator: mean coefficients (k = 0), per-frequency signal
/// covariance blocks, and the photon-count scale.
#[derive(Debug, Clone)]
pub struct GroundTruthModel {
    pub basis: FbBasis,
    /// k = 0 mean coefficients (real).
    pub mean_coeffs: Vec<f64>,
    /// Per-frequency PSD signal covariance blocks for k = 0..k_max.
    pub signal_cov: Vec<DMatrix<f64>>,
    /// Mean photon count per pixel over the full grid.
    pub intensity_scale: f64,
    pub seed: u64,
    /// Clip mass measured on the construction probe.
    pub clip_rate: f64,
    sqrt_cov: Vec<DMatrix<f64>>,
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = crate::eigh::sym_eigen(&sym, true)?;
    let q = eig.vectors.as_ref().unwrap();
    let scale = eig.values.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    let mut out = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let lam = eig.values[i];
        if lam < -1e-10 * scale {
            return Err(Error::InvalidArgument(
                "signal covariance block is not positive semidefinite".into(),
            ));
        }
        let s = lam.max(0.0).sqrt();
        let v = q.column(i);
        for a in 0..p {
            for b in 0..p {
                out[(a, b)] += s * v[a] * v[b];
            }
        }
    }
    Ok(out)
}

impl GroundTruthModel {
    /// Build and validate a model; the probe draw measures the clip rate.
    pub fn new(
        basis: FbBasis,
        mean_coeffs: Vec<f64>,
        signal_cov: Vec<DMatrix<f64>>,
        intensity_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if mean_coeffs.len() != basis.p(0) {
            return Err(Error::InvalidArgument(format!(
                "mean has {} coefficients, basis k=0 block has {}",
                mean_coeffs.len(),
                basis.p(0)
            )));
        }
        if signal_cov.len() != basis.k_max + 1 {
            return Err(Error::InvalidArgument(
                "need one signal covariance block per angular frequency".into(),
            ));
        }
        for (k, s) in signal_cov.iter().enumerate() {
            if s.nrows() != basis.p(k) || s.ncols() != basis.p(k) {
                return Err(Error::InvalidArgument(format!(
                    "signal block {k} has shape {}x{}, expected {}",
                    s.nrows(),
                    s.ncols(),
                    basis.p(k)
                )));
            }
        }
        let sqrt_cov = signal_cov.iter().map(psd_sqrt).collect::<Result<Vec<_>>>()?;
        let mut model = Self {
            basis,
            mean_coeffs,
            signal_cov,
            intensity_scale,
            seed,
            clip_rate: 0.0,
            sqrt_cov,
        };
        // probe draw for the clip rate
        let (_, clip) = model.draw_clean_internal(256, seed ^ 0x5eed_c11f)?;
        model.clip_rate = clip;
        if clip > MAX_CLIP_RATE {
            return Err(Error::InvalidArgument(format!(
                "model clips {:.2}% of positive mass (limit {:.0}%); weaken the fluctuations",
                100.0 * clip,
                100.0 * MAX_CLIP_RATE
            )));
        }
        Ok(model)
    }

    /// Draw per-image coefficients: mean plus per-frequency Gaussian
    /// fluctuations, a common uniform rotation phase per image.
    pub fn draw_coefficients(&self, n: usize, seed: u64) -> CoeffBlocks {
        let basis = &self.basis;
        let mut cb = CoeffBlocks::zeros_like(basis, n);
        for i in 0..n {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1));
            let alpha: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            for k in 0..=basis.k_max {
                let p = basis.p(k);
                let sq = &self.sqrt_cov[k];
                if k == 0 {
                    let g =
                        nalgebra::DVector::<f64>::from_fn(p, |_, _| {
                            rng.sample(rand_distr::StandardNormal)
                        });
                    let z = sq * g;
                    for q in 0..p {
                        cb.blocks[0][(q, i)] =
                            Complex64::new(self.mean_coeffs[q] + z[q], 0.0);
                    }
                } else {
                    let g1 = nalgebra::DVector::<f64>::from_fn(p, |_, _| {
                        rng.sample(rand_distr::StandardNormal)
                    });
                    let g2 = nalgebra::DVector::<f64>::from_fn(p, |_, _| {
                        rng.sample(rand_distr::StandardNormal)
                    });
                    let zr = sq * g1 / 2.0_f64.sqrt();
                    let zi = sq * g2 / 2.0_f64.sqrt();
                    let ph = Complex64::new(0.0, -(k as f64) * alpha).exp();
                    for q in 0..p {
                        cb.blocks[k][(q, i)] = Complex64::new(zr[q], zi[q]) * ph;
                    }
                }
            }
        }
        cb
    }

    fn draw_clean_internal(&self, n: usize, seed: u64) -> Result<(ImageStack, f64)> {
        let cb = self.draw_coefficients(n, seed);
        let mut stack = reconstruct(&cb, &self.basis)?;
        let mut neg = 0.0;
        let mut pos = 0.0;
        for v in stack.pixels_mut() {
            if *v < 0.0 {
                neg -= *v;
                *v = 0.0;
            } else {
                pos += *v;
            }
        }
        let clip = if pos > 0.0 { neg / pos } else { 0.0 };
        Ok((stack, clip))
    }

    /// Draw a clean (noiseless) stack; negative pixels are clipped at zero.
    pub fn draw_clean_stack(&self, n: usize, seed: u64) -> Result<ImageStack> {
        let (stack, _) = self.draw_clean_internal(n, seed)?;
        Ok(stack)
    }

    /// Exact clean-image covariance kernel at the given points.
    pub fn true_covariance(&self, points: &[(f64, f64)]) -> Result<DMatrix<f64>> {
        let blocks: Vec<DMatrix<Complex64>> = self
            .signal_cov
            .iter()
            .map(|s| s.map(|v| Complex64::new(v, 0.0)))
            .collect();
        let cov = BlockCovariance::from_blocks(blocks, vec![1.0; self.signal_cov.len()], 1)?;
        covariance_kernel(&cov, &self.basis, points)
    }

    /// Exact clean-image covariance over the full pixel grid.
    pub fn true_covariance_grid(&self) -> Result<DMatrix<f64>> {
        let l = self.basis.params.image_size;
        let half = (l / 2) as f64;
        let points: Vec<(f64, f64)> = (0..l * l)
            .map(|p| ((p / l) as f64 - half, (p % l) as f64 - half))
            .collect();
        self.true_covariance(&points)
    }

    /// The clean mean image (reconstruction of the mean coefficients,
    /// clipped at zero like every drawn image).
    pub fn mean_image(&self) -> Result<Vec<f64>> {
        let mut cb = CoeffBlocks::zeros_like(&self.basis, 1);
        for (q, &m) in self.mean_coeffs.iter().enumerate() {
            cb.blocks[0][(q, 0)] = Complex64::new(m, 0.0);
        }
        let stack = reconstruct(&cb, &self.basis)?;
        Ok(stack.image(0).iter().map(|&v| v.max(0.0)).collect())
    }

    /// Desk-scale preset: L = 32, R = 14, c = 0.15, mean count 0.05, five
    /// rank-one signal components spread over k = 0..4.
    pub fn desk_preset(seed: u64) -> Result<Self> {
        let basis = FbBasis::build(BasisParams::new(0.15, 14, 32)?)?;
        let mean_rel = vec![1.0, 0.45, 0.18];
        let comps = [(0usize, 2usize, 0.050), (1, 0, 0.045), (2, 0, 0.040), (3, 0, 0.035), (4, 0, 0.030)];
        Self::from_design(basis, mean_rel, &comps, 0.05, seed)
    }

    /// Paper-scale preset: L = 128, R = 61, c = 0.08, mean count 0.01.
    pub fn paper_preset(seed: u64) -> Result<Self> {
        let basis = FbBasis::build(BasisParams::new(0.08, 61, 128)?)?;
        // project a wide radial bump onto the k = 0 block, mildly damped
        let rule = gauss_legendre(400, 0.0, 61.0)?;
        let thr = 2.0 * std::f64::consts::PI * 0.08 * 61.0;
        let p0 = basis.p(0);
        let mut mean_rel = vec![0.0; p0];
        for q in 0..p0 {
            let mut acc = 0.0;
            for (j, &r) in rule.nodes.iter().enumerate() {
                let bump = (-0.5 * (r / 22.0) * (r / 22.0)).exp();
                acc += bump * basis.radial_profile(0, q, r)? * r * rule.weights[j];
            }
            let damp = (-2.0 * (basis.roots[0][q] / thr).powi(2)).exp();
            mean_rel[q] = 2.0 * std::f64::consts::PI * acc * damp;
        }
        let comps = [(0usize, 4usize, 0.025), (1, 0, 0.022), (2, 0, 0.020), (3, 0, 0.018), (4, 0, 0.015)];
        Self::from_design(basis, mean_rel, &comps, 0.01, seed)
    }

    /// Build from relative mean coefficients and rank-one component specs
    /// (k, radial index, sigma as a fraction of the mean coefficient norm),
    /// rescaled to the target mean photon count.
    pub fn from_design(
        basis: FbBasis,
        mean_rel: Vec<f64>,
        components: &[(usize, usize, f64)],
        intensity: f64,
        seed: u64,
    ) -> Result<Self> {
        let l = basis.params.image_size;
        // scale the mean to the target photon count
        let mut cb = CoeffBlocks::zeros_like(&basis, 1);
        for (q, &m) in mean_rel.iter().enumerate() {
            cb.blocks[0][(q, 0)] = Complex64::new(m, 0.0);
        }
        let img = reconstruct(&cb, &basis)?;
        let total: f64 = img.image(0).iter().map(|&v| v.max(0.0)).sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("mean profile has no mass".into()));
        }
        let scale = intensity * (l * l) as f64 / total;
        let mean_coeffs: Vec<f64> = mean_rel.iter().map(|&m| m * scale).collect();
        let norm = mean_coeffs.iter().map(|m| m * m).sum::<f64>().sqrt();
        let mut signal_cov: Vec<DMatrix<f64>> = (0..=basis.k_max)
            .map(|k| DMatrix::zeros(basis.p(k), basis.p(k)))
            .collect();
        for &(k, q, frac) in components {
            if k > basis.k_max || q >= basis.p(k) {
                return Err(Error::InvalidArgument(format!(
                    "component at (k = {k}, q = {q}) is outside the basis"
                )));
            }
            let sigma = frac * norm;
            signal_cov[k][(q, q)] += sigma * sigma;
        }
        Self::new(basis, mean_coeffs, signal_cov, intensity, seed)
    }
}

/// Independent Poisson draws per pixel; rates are the clean intensities.
pub fn poisson_observe(clean: &ImageStack, seed: u64) -> Result<ImageStack> {
    clean.validate()?;
    if clean.pixels().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "Poisson rates must be non-negative".into(),
        ));
    }
    let mut out = ImageStack::zeros(clean.n, clean.l, StackKind::Counts);
    for i in 0..clean.n {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ 0xd1b5_4a32_d192_ed03u64.wrapping_mul(i as u64 + 1));
        let src = clean.image(i);
        let dst = out.image_mut(i);
        for (d, &rate) in dst.iter_mut().zip(src) {
            *d = if rate > 0.0 {
                let dist = rand_distr::Poisson::new(rate).map_err(|e| {
                    Error::InvalidArgument(format!("bad Poisson rate {rate}: {e}"))
                })?;
                rng.sample(dist)
            } else {
                0.0
            };
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// ground-truth sidecar
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct TruthHeader {
    format: String,
    band_limit: f64,
    support_radius: usize,
    image_size: usize,
    mean_coeffs: Vec<f64>,
    intensity_scale: f64,
    seed: u64,
    clip_rate: f64,
    /// per-frequency block sizes; payload holds the blocks in order
    block_sizes: Vec<usize>,
}

impl GroundTruthModel {
    pub fn write(&self, path: &Path) -> Result<()> {
        let header = TruthHeader {
            format: "sepca-truth-v1".into(),
            band_limit: self.basis.params.band_limit,
            support_radius: self.basis.params.support_radius,
            image_size: self.basis.params.image_size,
            mean_coeffs: self.mean_coeffs.clone(),
            intensity_scale: self.intensity_scale,
            seed: self.seed,
            clip_rate: self.clip_rate,
            block_sizes: self.signal_cov.iter().map(|b| b.nrows()).collect(),
        };
        fs::write(path, serde_json::to_string_pretty(&header)?)?;
        let mut buf = Vec::new();
        for b in &self.signal_cov {
            for v in b.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(sidecar_path(path))?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let header: TruthHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
        if header.format != "sepca-truth-v1" {
            return Err(Error::Data(format!(
                "unknown ground-truth format {}",
                header.format
            )));
        }
        let basis = FbBasis::build(BasisParams::new(
            header.band_limit,
            header.support_radius,
            header.image_size,
        )?)?;
        let mut f = fs::File::open(sidecar_path(path))?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        let vals: Vec<f64> = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let mut off = 0;
        let mut blocks = Vec::new();
        for &p in &header.block_sizes {
            let need = p * p;
            let slice = vals
                .get(off..off + need)
                .ok_or_else(|| Error::Data("truth payload truncated".into()))?;
            blocks.push(DMatrix::from_column_slice(p, p, slice));
            off += need;
        }
        Self::new(
            basis,
            header.mean_coeffs,
            blocks,
            header.intensity_scale,
            header.seed,
        )
    }
}
