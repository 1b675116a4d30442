//! Wiener-type denoising in the steerable basis, plus Cartesian baselines.
//!
//! The coefficients of the prewhitened images are first recolored by B^(k)
//! and then filtered with the estimated signal covariance S_s^(k) against the
//! recolored noise covariance D^(k):
//!
//! ```text
//! Ahat^(k) = S_s (D + S_s)^{-1} B A^(k),                      k != 0,
//! Ahat^(0) = S_s (D + S_s)^{-1} B A^(0)
//!            + D (D + S_s)^{-1} abar 1^T,
//! ```
//!
//! where `abar` holds the zero-frequency coefficients of the raw sample mean
//! in the same basis (the filter is affine: with no signal covariance every
//! image collapses to the rotationally invariant mean). Linear solves are
//! used instead of explicit inverses; a singular `D + S_s` falls back to a
//! relative ridge of 1e-12 tr/p and raises a warning flag.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{ImageStack, StackKind};
use crate::mean::homogenize;
use crate::model::SepcaModel;
use crate::recolor::RecolorMatrices;
use crate::transform::{expand, reconstruct, CoeffBlocks};

/// Solve (D + S) X = RHS for Hermitian D + S, with the documented ridge
/// fallback. Returns the solution and whether the ridge was needed.
fn filter_solve(
    dps: &DMatrix<Complex64>,
    rhs: &DMatrix<Complex64>,
) -> Result<(DMatrix<Complex64>, bool)> {
    if let Some(sol) = dps.clone().lu().solve(rhs) {
        if sol.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Ok((sol, false));
        }
    }
    let p = dps.nrows() as f64;
    let tr: f64 = (0..dps.nrows()).map(|i| dps[(i, i)].re).sum();
    let ridge = 1e-12 * tr.abs().max(1e-300) / p;
    let mut reg = dps.clone();
    for i in 0..dps.nrows() {
        reg[(i, i)] += Complex64::new(ridge, 0.0);
    }
    let sol = reg
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::Numerical("filter solve failed even with ridge".into()))?;
    Ok((sol, true))
}

/// Result of the coefficient-domain Wiener filter.
pub struct DenoisedCoeffs {
    pub coeffs: CoeffBlocks,
    /// True when any per-frequency solve needed the ridge fallback.
    pub ridge_warning: bool,
}

/// Wiener-filter prewhitened coefficients (not centered at k = 0; the mean
/// term consumes the raw zero-frequency block). `mean` must live in the same
/// basis as `coeffs`: its coefficients are the abar vector.
pub fn wiener_denoise(
    coeffs: &CoeffBlocks,
    final_cov: &[DMatrix<Complex64>],
    rm: &RecolorMatrices,
    mean_coeffs: &[f64],
) -> Result<DenoisedCoeffs> {
    let n = coeffs.n_images();
    let mut out = coeffs.clone();
    let mut warned = false;
    for (k, a) in coeffs.blocks.iter().enumerate() {
        let p_k = a.nrows();
        if mean_coeffs.len() != coeffs.blocks[0].nrows() {
            return Err(Error::InvalidArgument(
                "mean coefficient vector does not match the k = 0 block".into(),
            ));
        }
        let s = &final_cov[k];
        let d = rm.d_complex(k);
        let b = rm.b_complex(k);
        let dps = &d + s;
        let ba = &b * a;
        let (x, w1) = filter_solve(&dps, &ba)?;
        let mut ahat = s * x;
        warned |= w1;
        if k == 0 {
            let abar = DMatrix::<Complex64>::from_fn(p_k, 1, |q, _| {
                Complex64::new(mean_coeffs[q], 0.0)
            });
            let (y, w2) = filter_solve(&dps, &abar)?;
            let dy = &d * y;
            warned |= w2;
            for i in 0..n {
                for q in 0..p_k {
                    ahat[(q, i)] += dy[(q, 0)];
                }
            }
        }
        out.blocks[k] = ahat;
    }
    Ok(DenoisedCoeffs {
        coeffs: out,
        ridge_warning: warned,
    })
}

/// Full denoising pass: prewhiten with the model's mean, expand, filter,
/// reconstruct. Output pixels vanish outside the support disk.
pub fn denoise_stack(stack: &ImageStack, model: &SepcaModel) -> Result<ImageStack> {
    let whitened = homogenize(stack, &model.mean_white)?;
    let coeffs = expand(&whitened, &model.basis)?;
    let den = wiener_denoise(
        &coeffs,
        &model.scaled.blocks,
        &model.recolor,
        &model.mean_coeffs,
    )?;
    reconstruct(&den.coeffs, &model.basis)
}

/// Empirical-best-linear-predictor baseline in pixel space:
/// Xhat_i = mean + S_s [S_s + (1-eps) diag(mean) + eps m I]^{-1} (Y_i - mean)
/// with m the average of the mean vector.
pub fn eblp_denoise_cartesian(
    stack: &ImageStack,
    s_s: &DMatrix<f64>,
    mean: &[f64],
    epsilon: f64,
) -> Result<ImageStack> {
    let p = stack.l * stack.l;
    if s_s.nrows() != p || mean.len() != p {
        return Err(Error::InvalidArgument(
            "EBLP filter dimensions do not match the stack".into(),
        ));
    }
    let m = mean.iter().sum::<f64>() / p as f64;
    let mut reg = s_s.clone();
    for i in 0..p {
        reg[(i, i)] += (1.0 - epsilon) * mean[i] + epsilon * m;
    }
    let lu = reg.lu();
    let mut out = ImageStack::zeros(stack.n, stack.l, StackKind::Intensity);
    let mut rhs = nalgebra::DVector::<f64>::zeros(p);
    for i in 0..stack.n {
        let img = stack.image(i);
        for j in 0..p {
            rhs[j] = img[j] - mean[j];
        }
        let x = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("EBLP filter system is singular".into()))?;
        let fx = s_s * x;
        let dst = out.image_mut(i);
        for j in 0..p {
            dst[j] = mean[j] + fx[j];
        }
    }
    Ok(out)
}

/// PCA-projection baseline: mean-subtract, project onto the top
/// `n_components` sample eigenimages, add the mean back.
pub fn pca_project_denoise(stack: &ImageStack, n_components: usize) -> Result<ImageStack> {
    let p = stack.l * stack.l;
    let n = stack.n;
    if n == 0 {
        return Err(Error::InvalidArgument("empty stack".into()));
    }
    let mean = stack.mean_image();
    let mut data = DMatrix::<f64>::zeros(p, n);
    for i in 0..n {
        let img = stack.image(i);
        for j in 0..p {
            data[(j, i)] = img[j] - mean[j];
        }
    }
    let r = n_components.min(p).min(n);
    let mut out = ImageStack::zeros(n, stack.l, StackKind::Intensity);
    if r == 0 {
        for i in 0..n {
            out.image_mut(i).copy_from_slice(&mean);
        }
        return Ok(out);
    }
    // eigenvectors of the smaller Gram side
    // components with (numerically) zero variance carry no signal and their
    // eigenvectors are noise; stop at the first one
    let usable = |vals: &[f64]| -> usize {
        let top = vals.first().copied().unwrap_or(0.0).max(0.0);
        vals.iter()
            .take(r)
            .filter(|&&l| l > 1e-12 * top.max(1e-300))
            .count()
    };
    let proj = if n <= p {
        let gram = data.transpose() * &data; // n x n
        let eig = crate::eigh::sym_eigen(&gram, true)?;
        let q = eig.vectors.as_ref().unwrap();
        let ru = usable(&eig.values);
        let mut u = DMatrix::<f64>::zeros(p, ru);
        for col in 0..ru {
            let ui = &data * q.column(col) / eig.values[col].sqrt();
            u.set_column(col, &ui);
        }
        u
    } else {
        let gram = &data * data.transpose(); // p x p
        let eig = crate::eigh::sym_eigen(&gram, true)?;
        let q = eig.vectors.as_ref().unwrap();
        let ru = usable(&eig.values);
        let mut u = DMatrix::<f64>::zeros(p, ru);
        for col in 0..ru {
            u.set_column(col, &q.column(col));
        }
        u
    };
    let coords = proj.transpose() * &data; // r x n
    let recon = proj * coords; // p x n
    for i in 0..n {
        let dst = out.image_mut(i);
        for j in 0..p {
            dst[j] = mean[j] + recon[(j, i)];
        }
    }
    Ok(out)
}

/// Largest eigenvalue of the Wiener filter S (D + S)^{-1} for PSD S, D.
///
/// This is the filter's gain in the (D + S) metric: the similar Hermitian
/// form L^{-1} S L^{-H} (with L L^H = D + S) has spectrum in [0, 1], so the
/// filter never amplifies any signal direction. (Its plain Euclidean
/// operator norm is not so bounded when S and D do not commute.)
pub fn filter_operator_norm(s: &DMatrix<Complex64>, d: &DMatrix<Complex64>) -> Result<f64> {
    let dps = d + s;
    let chol = dps
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("D + S is not positive definite".into()))?;
    let l = chol.l();
    let m1 = l
        .solve_lower_triangular(s)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let h = l
        .solve_lower_triangular(&m1.adjoint())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let (vals, _) = crate::covariance::hermitian_eigen(&h)?;
    Ok(vals.first().copied().unwrap_or(0.0).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisParams, FbBasis};
    use crate::mean::rotinv_mean;
    use crate::recolor::recolor_matrices;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk() -> FbBasis {
        FbBasis::build(BasisParams::new(0.15, 14, 32).unwrap()).unwrap()
    }

    fn desk_recolor(basis: &FbBasis) -> (crate::mean::RotInvMean, RecolorMatrices) {
        // smooth positive mean profile from the first radial function
        let mut cb = CoeffBlocks::zeros_like(basis, 1);
        cb.blocks[0][(0, 0)] = Complex64::new(1.0, 0.0);
        let img = reconstruct(&cb, basis).unwrap();
        let mut stack = ImageStack::zeros(1, 32, StackKind::Intensity);
        stack.image_mut(0).copy_from_slice(img.image(0));
        let mean = rotinv_mean(&stack, basis).unwrap();
        let rm = recolor_matrices(&mean, basis).unwrap();
        (mean, rm)
    }

    fn zero_cov(basis: &FbBasis) -> Vec<DMatrix<Complex64>> {
        (0..=basis.k_max)
            .map(|k| DMatrix::zeros(basis.p(k), basis.p(k)))
            .collect()
    }

    #[test]
    fn zero_signal_covariance_collapses_to_mean() {
        let b = desk();
        let (_mean, rm) = desk_recolor(&b);
        let coeffs = crate::transform::tests::random_coeffs(&b, 4, 3);
        let abar: Vec<f64> = vec![0.3, -0.1, 0.05];
        let den = wiener_denoise(&coeffs, &zero_cov(&b), &rm, &abar).unwrap();
        for k in 1..=b.k_max {
            assert!(den.coeffs.blocks[k].iter().all(|z| z.norm() == 0.0));
        }
        for i in 0..4 {
            for q in 0..b.p(0) {
                let z = den.coeffs.blocks[0][(q, i)];
                assert!((z.re - abar[q]).abs() <= 1e-12 && z.im.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn vanishing_noise_limit_passes_recolored_coefficients() {
        let b = desk();
        let coeffs = crate::transform::tests::random_coeffs(&b, 2, 5);
        // S_s invertible, D -> 0: filter tends to the identity on B A
        let mut s = Vec::new();
        let mut bm = Vec::new();
        let mut dm = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for k in 0..=b.k_max {
            let p = b.p(k);
            let a = DMatrix::<f64>::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
            let psd = &a * a.transpose() + DMatrix::identity(p, p);
            s.push(psd.map(|v| Complex64::new(v, 0.0)));
            let c = DMatrix::<f64>::from_fn(p, p, |_, _| rng.gen_range(-0.5..0.5));
            bm.push(&c + c.transpose());
            dm.push(DMatrix::<f64>::identity(p, p) * 1e-14);
        }
        let rm = RecolorMatrices { b: bm, d: dm };
        let den = wiener_denoise(&coeffs, &s, &rm, &vec![0.0; b.p(0)]).unwrap();
        for k in 0..=b.k_max {
            let want = rm.b_complex(k) * &coeffs.blocks[k];
            let err = (&den.coeffs.blocks[k] - &want)
                .iter()
                .map(|z| z.norm())
                .fold(0.0f64, f64::max);
            assert!(err <= 1e-10, "noiseless limit broken at k={k}: {err}");
        }
    }

    #[test]
    fn matches_dense_inverse_oracle() {
        let b = desk();
        let (_mean, rm) = desk_recolor(&b);
        let coeffs = crate::transform::tests::random_coeffs(&b, 3, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s: Vec<DMatrix<Complex64>> = (0..=b.k_max)
            .map(|k| {
                let p = b.p(k);
                let a = DMatrix::<f64>::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
                (&a * a.transpose()).map(|v| Complex64::new(v, 0.0))
            })
            .collect();
        let abar: Vec<f64> = (0..b.p(0)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let den = wiener_denoise(&coeffs, &s, &rm, &abar).unwrap();
        for k in 0..=b.k_max {
            let p = b.p(k);
            let dps = rm.d_complex(k) + &s[k];
            let inv = dps
                .try_inverse()
                .expect("well-conditioned test block");
            let mut want = &s[k] * &inv * rm.b_complex(k) * &coeffs.blocks[k];
            if k == 0 {
                let abar_v =
                    DMatrix::<Complex64>::from_fn(p, 1, |q, _| Complex64::new(abar[q], 0.0));
                let mterm = rm.d_complex(0) * &inv * abar_v;
                for i in 0..3 {
                    for q in 0..p {
                        want[(q, i)] += mterm[(q, 0)];
                    }
                }
            }
            let err = (&den.coeffs.blocks[k] - &want)
                .iter()
                .map(|z| z.norm())
                .fold(0.0f64, f64::max);
            assert!(err <= 1e-10, "dense oracle mismatch at k={k}: {err}");
        }
    }

    #[test]
    fn filter_is_affine_in_the_coefficients() {
        let b = desk();
        let (_mean, rm) = desk_recolor(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s: Vec<DMatrix<Complex64>> = (0..=b.k_max)
            .map(|k| {
                let p = b.p(k);
                let a = DMatrix::<f64>::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
                (&a * a.transpose()).map(|v| Complex64::new(v, 0.0))
            })
            .collect();
        let abar: Vec<f64> = (0..b.p(0)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = crate::transform::tests::random_coeffs(&b, 1, 21);
        let y = crate::transform::tests::random_coeffs(&b, 1, 22);
        let mut xy = x.clone();
        for k in 0..=b.k_max {
            xy.blocks[k] += &y.blocks[k];
        }
        let zero = CoeffBlocks::zeros_like(&b, 1);
        let dx = wiener_denoise(&x, &s, &rm, &abar).unwrap().coeffs;
        let dy = wiener_denoise(&y, &s, &rm, &abar).unwrap().coeffs;
        let dxy = wiener_denoise(&xy, &s, &rm, &abar).unwrap().coeffs;
        let d0 = wiener_denoise(&zero, &s, &rm, &abar).unwrap().coeffs;
        for k in 0..=b.k_max {
            let lhs = &dx.blocks[k] + &dy.blocks[k] - &d0.blocks[k];
            let err = (&lhs - &dxy.blocks[k])
                .iter()
                .map(|z| z.norm())
                .fold(0.0f64, f64::max);
            assert!(err <= 1e-10, "affinity broken at k={k}: {err}");
        }
    }

    #[test]
    fn filter_gain_never_exceeds_one() {
        let b = desk();
        let (_mean, rm) = desk_recolor(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for k in 0..=b.k_max {
            let p = b.p(k);
            let a = DMatrix::<f64>::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
            let s = (&a * a.transpose()).map(|v| Complex64::new(v, 0.0));
            let d = rm.d_complex(k);
            let norm = filter_operator_norm(&s, &d).unwrap();
            assert!((0.0..=1.0 + 1e-6).contains(&norm), "filter gain {norm} at k={k}");
        }
    }

    #[test]
    fn eblp_mean_parameter() {
        // m on a constant mean of 4 is 4; with S_s = 0 every image collapses
        // to the mean for any epsilon
        let l = 4usize;
        let p = l * l;
        let mut stack = ImageStack::zeros(3, l, StackKind::Counts);
        for v in stack.pixels_mut() {
            *v = 7.0;
        }
        let mean = vec![4.0; p];
        let s = DMatrix::<f64>::zeros(p, p);
        let den = eblp_denoise_cartesian(&stack, &s, &mean, 1.0).unwrap();
        assert!(den.pixels().iter().all(|&v| (v - 4.0).abs() <= 1e-12));
    }

    #[test]
    fn eblp_matches_dense_oracle() {
        let l = 4usize;
        let p = l * l;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut stack = ImageStack::zeros(2, l, StackKind::Counts);
        for v in stack.pixels_mut() {
            *v = rng.gen_range(0.0..5.0);
        }
        let mean: Vec<f64> = (0..p).map(|_| rng.gen_range(0.5..2.0)).collect();
        let a = DMatrix::<f64>::from_fn(p, p, |_, _| rng.gen_range(-0.3..0.3));
        let s = &a * a.transpose();
        let eps = 0.1;
        let den = eblp_denoise_cartesian(&stack, &s, &mean, eps).unwrap();
        let m = mean.iter().sum::<f64>() / p as f64;
        let mut reg = s.clone();
        for i in 0..p {
            reg[(i, i)] += (1.0 - eps) * mean[i] + eps * m;
        }
        let inv = reg.try_inverse().unwrap();
        for i in 0..2 {
            let img = stack.image(i);
            let y = nalgebra::DVector::from_fn(p, |j, _| img[j] - mean[j]);
            let want = &s * &inv * y;
            let got = den.image(i);
            for j in 0..p {
                assert!((got[j] - (mean[j] + want[j])).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn pca_projection_extremes() {
        let l = 4usize;
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut stack = ImageStack::zeros(6, l, StackKind::Intensity);
        for v in stack.pixels_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mean = stack.mean_image();
        let none = pca_project_denoise(&stack, 0).unwrap();
        for i in 0..6 {
            for (a, b) in none.image(i).iter().zip(&mean) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        let full = pca_project_denoise(&stack, 16).unwrap();
        for (a, b) in full.pixels().iter().zip(stack.pixels()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn pca_projection_denoises_rank_one_data() {
        let l = 4usize;
        let p = l * l;
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let u: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut clean = ImageStack::zeros(40, l, StackKind::Intensity);
        for i in 0..40 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            for (d, &uv) in clean.image_mut(i).iter_mut().zip(&u) {
                *d = 3.0 * z * uv;
            }
        }
        let mut noisy = clean.clone();
        for v in noisy.pixels_mut() {
            *v += 0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let den = pca_project_denoise(&noisy, 1).unwrap();
        let mse = |a: &ImageStack, b: &ImageStack| {
            a.pixels()
                .iter()
                .zip(b.pixels())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
        };
        assert!(mse(&den, &clean) < mse(&noisy, &clean));
    }
}
