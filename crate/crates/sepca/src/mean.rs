//! Rotationally invariant sample mean and homogenization (prewhitening).
//!
//! The rotationally invariant mean keeps only the zero angular frequency of
//! the sample mean: `fbar(r) = sum_q abar_{0,q} G_{0,q}(r)`, thresholded at
//! zero. For Poisson counts the pixel variance equals the pixel mean, so
//! dividing each image by `sqrt(fbar)` (where positive) makes the noise
//! approximately white with unit variance.

use crate::basis::FbBasis;
use crate::error::{Error, Result};
use crate::image::{ImageStack, StackKind};
use crate::transform::expand;

/// The k = 0 expansion of the sample mean together with its clamped radial
/// profile on the pixel grid of the basis it was built with.
#[derive(Debug, Clone)]
pub struct RotInvMean {
    /// Basis the coefficients live in (only its k = 0 block is used).
    pub basis: FbBasis,
    /// Coefficients abar_{0,q}, ordered by radial index.
    pub coeffs: Vec<f64>,
    /// Clamped profile at every pixel of the L x L grid (0 outside the disk).
    profile_grid: Vec<f64>,
}

impl RotInvMean {
    /// Assemble from already-computed parts (deserialization path).
    pub fn from_parts(basis: FbBasis, coeffs: Vec<f64>, profile_grid: Vec<f64>) -> Self {
        Self {
            basis,
            coeffs,
            profile_grid,
        }
    }

    /// fbar at an arbitrary radius, clamped at zero; zero outside the disk.
    pub fn profile_at(&self, r: f64) -> f64 {
        if r > self.basis.params.support_radius as f64 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (q, &a) in self.coeffs.iter().enumerate() {
            acc += a * self.basis.radial_profile(0, q, r).unwrap_or(0.0);
        }
        acc.max(0.0)
    }

    /// fbar at several radii.
    pub fn profile_at_radii(&self, radii: &[f64]) -> Vec<f64> {
        radii.iter().map(|&r| self.profile_at(r)).collect()
    }

    /// The clamped profile sampled on the pixel grid.
    pub fn pixel_profile(&self) -> &[f64] {
        &self.profile_grid
    }

    /// True when the clamped profile is identically zero.
    pub fn is_degenerate(&self) -> bool {
        self.profile_grid.iter().all(|&v| v <= 0.0)
    }
}

/// Estimate the rotationally invariant sample mean of a stack in the k = 0
/// block of `basis`. Negative profile values are thresholded to zero.
pub fn rotinv_mean(stack: &ImageStack, basis: &FbBasis) -> Result<RotInvMean> {
    if stack.n == 0 {
        return Err(Error::InvalidArgument("empty stack".into()));
    }
    let l = stack.l;
    let mean = stack.mean_image();
    let mean_stack = ImageStack::from_pixels(1, l, StackKind::Intensity, mean)?;
    let cb = expand(&mean_stack, basis)?;
    let coeffs: Vec<f64> = (0..basis.p(0)).map(|q| cb.blocks[0][(q, 0)].re).collect();

    let half = (l / 2) as f64;
    let r_sup = basis.params.support_radius as f64;
    let mut profile_grid = vec![0.0; l * l];
    // evaluate per unique radius to avoid repeated Bessel work
    let mut cache = std::collections::BTreeMap::<u64, f64>::new();
    for ix in 0..l {
        let x = ix as f64 - half;
        for iy in 0..l {
            let y = iy as f64 - half;
            let r = x.hypot(y);
            if r <= r_sup {
                let key = r.to_bits();
                let v = *cache.entry(key).or_insert_with(|| {
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
    Ok(RotInvMean {
        basis: basis.clone(),
        coeffs,
        profile_grid,
    })
}

/// Prewhiten a stack: Z = Y / sqrt(fbar) where fbar > 0, else 0.
pub fn homogenize(stack: &ImageStack, mean: &RotInvMean) -> Result<ImageStack> {
    if stack.l != mean.basis.params.image_size {
        return Err(Error::InvalidArgument(
            "stack geometry does not match the mean".into(),
        ));
    }
    if mean.is_degenerate() {
        return Err(Error::DegenerateInput(
            "rotationally invariant mean is identically zero".into(),
        ));
    }
    let m = stack.l * stack.l;
    let inv_sqrt: Vec<f64> = mean
        .pixel_profile()
        .iter()
        .map(|&f| if f > 0.0 { 1.0 / f.sqrt() } else { 0.0 })
        .collect();
    let mut out = ImageStack::zeros(stack.n, stack.l, StackKind::Intensity);
    for i in 0..stack.n {
        let src = stack.image(i);
        let dst = out.image_mut(i);
        for p in 0..m {
            dst[p] = src[p] * inv_sqrt[p];
        }
    }
    Ok(out)
}
