//! Cartesian baselines: plain PCA, ePCA (homogenize / shrink / recolor /
//! scale in pixel space), and steerable PCA without the Poisson treatment.
//!
//! These exist for the comparison harness; the pixel-space covariance work
//! limits them to small grids (L <= 32 keeps p = L^2 at 1024).

use nalgebra::DMatrix;

use crate::eigh::sym_eigen;
use num_complex::Complex64;

use crate::covariance::{block_covariance, center_zero_frequency, BlockCovariance};
use crate::error::{Error, Result};
use crate::image::ImageStack;
use crate::model::MEAN_BAND_LIMIT;
use crate::rank::permutation_rank;
use crate::shrink::{cosine_sq, shrink_eigenvalue};
use crate::transform::{expand, CoeffBlocks};

/// Hard cap on the Cartesian dimension; beyond this the dense p x p work
/// is no longer desk-scale.
pub const MAX_CARTESIAN_SIDE: usize = 32;

fn data_matrix(stack: &ImageStack) -> DMatrix<f64> {
    let p = stack.l * stack.l;
    let mut m = DMatrix::<f64>::zeros(p, stack.n);
    for i in 0..stack.n {
        for (j, &v) in stack.image(i).iter().enumerate() {
            m[(j, i)] = v;
        }
    }
    m
}

fn check_side(stack: &ImageStack) -> Result<()> {
    if stack.l > MAX_CARTESIAN_SIDE {
        return Err(Error::InvalidArgument(format!(
            "Cartesian baseline limited to L <= {MAX_CARTESIAN_SIDE}, got {}",
            stack.l
        )));
    }
    Ok(())
}

/// Raw sample covariance of the stack (pixel space).
pub fn sample_covariance(stack: &ImageStack) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_side(stack)?;
    let mut data = data_matrix(stack);
    let p = data.nrows();
    let n = data.ncols();
    let mean: Vec<f64> = (0..p)
        .map(|i| data.row(i).iter().sum::<f64>() / n as f64)
        .collect();
    for j in 0..n {
        for i in 0..p {
            data[(i, j)] -= mean[i];
        }
    }
    let cov = &data * data.transpose() / n as f64;
    Ok((mean, cov))
}

/// Plain PCA baseline: permutation-rank truncated sample covariance.
pub struct PcaBaseline {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub rank: usize,
}

pub fn pca_baseline(stack: &ImageStack, seed: u64) -> Result<PcaBaseline> {
    check_side(stack)?;
    let mut data = data_matrix(stack);
    let p = data.nrows();
    let n = data.ncols();
    let mean: Vec<f64> = (0..p)
        .map(|i| data.row(i).iter().sum::<f64>() / n as f64)
        .collect();
    for j in 0..n {
        for i in 0..p {
            data[(i, j)] -= mean[i];
        }
    }
    let rank = permutation_rank(&data, 0.1, 30, seed)?.rank;
    let cov = &data * data.transpose() / n as f64;
    let eig = sym_eigen(&cov, true)?;
    let q = eig.vectors.as_ref().unwrap();
    let mut trunc = DMatrix::<f64>::zeros(p, p);
    for i in 0..rank.min(p) {
        let lam = eig.values[i];
        let v = q.column(i);
        for a in 0..p {
            for b in 0..p {
                trunc[(a, b)] += lam * v[a] * v[b];
            }
        }
    }
    Ok(PcaBaseline {
        mean,
        covariance: trunc,
        rank,
    })
}

/// Cartesian ePCA baseline: diagonal homogenization by the sample mean,
/// permutation-rank selection, eigenvalue shrinkage, recoloring and scaling.
pub struct EpcaBaseline {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub rank: usize,
}

pub fn epca_baseline(stack: &ImageStack, seed: u64) -> Result<EpcaBaseline> {
    check_side(stack)?;
    let mut data = data_matrix(stack);
    let p = data.nrows();
    let n = data.ncols();
    let mean: Vec<f64> = (0..p)
        .map(|i| data.row(i).iter().sum::<f64>() / n as f64)
        .collect();
    // homogenize: divide rows by sqrt(mean) where positive
    let root_inv: Vec<f64> = mean
        .iter()
        .map(|&m| if m > 0.0 { 1.0 / m.sqrt() } else { 0.0 })
        .collect();
    for j in 0..n {
        for i in 0..p {
            data[(i, j)] *= root_inv[i];
        }
    }
    let zbar: Vec<f64> = (0..p)
        .map(|i| data.row(i).iter().sum::<f64>() / n as f64)
        .collect();
    for j in 0..n {
        for i in 0..p {
            data[(i, j)] -= zbar[i];
        }
    }
    let rank = permutation_rank(&data, 0.1, 30, seed)?.rank;
    let s_h = &data * data.transpose() / n as f64;
    let eig = sym_eigen(&s_h, true)?;
    let evecs = eig.vectors.as_ref().unwrap();
    let gamma = p as f64 / n as f64;
    let tr_d_over_p = mean.iter().sum::<f64>() / p as f64;
    let sqrt_mean: Vec<f64> = mean.iter().map(|&m| m.max(0.0).sqrt()).collect();

    // recolored spike directions (diag recoloring keeps them explicit)
    let mut kept = 0usize;
    let mut cov = DMatrix::<f64>::zeros(p, p);
    let mut vhe = Vec::new();
    let mut ells = Vec::new();
    for i in 0..rank.min(p) {
        let ell = shrink_eigenvalue(eig.values[i], gamma);
        if ell <= 0.0 {
            continue;
        }
        let u = evecs.column(i);
        let v: Vec<f64> = (0..p).map(|a| sqrt_mean[a] * u[a]).collect();
        vhe.push(v);
        ells.push(ell);
    }
    // eigen-structure of sum ell v v^T via its small Gram matrix
    let r = vhe.len();
    if r > 0 {
        let mut vm = DMatrix::<f64>::zeros(p, r);
        for (c, v) in vhe.iter().enumerate() {
            for a in 0..p {
                vm[(a, c)] = v[a];
            }
        }
        let dl = DMatrix::<f64>::from_fn(r, r, |i, j| if i == j { ells[i] } else { 0.0 });
        let small = dl.map(|v| v.sqrt()) * vm.transpose() * &vm * dl.map(|v| v.sqrt());
        let seig = sym_eigen(&small, true)?;
        let svecs = seig.vectors.as_ref().unwrap();
        for pos in 0..r {
            let t = seig.values[pos].max(0.0);
            if t <= 0.0 {
                continue;
            }
            // lift back to pixel space: w = V sqrt(L) y / sqrt(t) has norm 1
            let y = svecs.column(pos);
            let mut w = vec![0.0; p];
            for c in 0..r {
                let f = ells[c].sqrt() * y[c];
                for a in 0..p {
                    w[a] += vm[(a, c)] * f;
                }
            }
            let wn: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if wn <= 0.0 {
                continue;
            }
            // recolored eigenvalues pair index-by-index with the shrunken ones
            let ell = ells[pos.min(r - 1)];
            let c2 = cosine_sq(ell, gamma);
            let s2 = 1.0 - c2;
            if c2 <= 0.0 {
                continue;
            }
            let tau = tr_d_over_p * ell / t;
            let num = 1.0 - s2 * tau;
            if num <= 0.0 {
                continue;
            }
            let alpha = num / c2;
            kept += 1;
            for a in 0..p {
                for b in 0..p {
                    cov[(a, b)] += alpha * t * (w[a] / wn) * (w[b] / wn);
                }
            }
        }
    }
    Ok(EpcaBaseline {
        mean,
        covariance: cov,
        rank: kept,
    })
}

/// Steerable PCA baseline on raw counts: expansion, per-frequency covariance
/// with the noise variance normalized out, Marchenko-Pastur shrinkage. No
/// homogenization or recoloring.
pub struct SpcaBaseline {
    pub coeffs: CoeffBlocks,
    pub mean_coeffs: Vec<f64>,
    pub blocks: Vec<DMatrix<Complex64>>,
    pub cov: BlockCovariance,
    pub rank: usize,
    pub noise_variance: f64,
}

pub fn spca_baseline(stack: &ImageStack, basis: &crate::basis::FbBasis) -> Result<SpcaBaseline> {
    let coeffs = expand(stack, basis)?;
    let centered = center_zero_frequency(&coeffs);
    let cov = block_covariance(&centered, true)?;
    // noise variance of raw Poisson counts ~ mean count over the disk
    let mean = stack.mean_image();
    let l = stack.l;
    let half = (l / 2) as f64;
    let r_sup = basis.params.support_radius as f64;
    let mut acc = 0.0;
    let mut cnt = 0usize;
    for ix in 0..l {
        for iy in 0..l {
            let r = (ix as f64 - half).hypot(iy as f64 - half);
            if r <= r_sup {
                acc += mean[ix * l + iy];
                cnt += 1;
            }
        }
    }
    let sigma2 = (acc / cnt.max(1) as f64).max(1e-300);
    let mut blocks = Vec::with_capacity(cov.blocks.len());
    let mut rank = 0usize;
    for k in 0..cov.blocks.len() {
        let p_k = cov.blocks[k].nrows();
        let gamma = cov.gammas[k];
        let mut s = DMatrix::<Complex64>::zeros(p_k, p_k);
        for i in 0..p_k {
            let lam = cov.eigenvalues[k][i] / sigma2;
            let ell = shrink_eigenvalue(lam, gamma) * sigma2;
            if ell > 0.0 {
                rank += 1;
                let u = cov.eigenvectors[k].column(i);
                for a in 0..p_k {
                    for b in 0..p_k {
                        s[(a, b)] += u[a] * u[b].conj() * ell;
                    }
                }
            }
        }
        blocks.push(s);
    }
    let mean_coeffs: Vec<f64> = {
        let mean_stack =
            ImageStack::from_pixels(1, l, crate::image::StackKind::Intensity, mean)?;
        let cb = expand(&mean_stack, basis)?;
        (0..basis.p(0)).map(|q| cb.blocks[0][(q, 0)].re).collect()
    };
    Ok(SpcaBaseline {
        coeffs,
        mean_coeffs,
        blocks,
        cov,
        rank,
        noise_variance: sigma2,
    })
}

/// sPCA denoising: project the centered coefficients of each image onto the
/// retained eigencomponents per frequency, then add the mean back.
pub fn spca_denoise(base: &SpcaBaseline, basis: &crate::basis::FbBasis) -> Result<ImageStack> {
    let mut filtered = base.coeffs.clone();
    let n = filtered.n_images();
    for k in 0..=basis.k_max {
        let p_k = basis.p(k);
        // project onto eigenvectors whose shrunken mass survived
        let mut cols = Vec::new();
        for i in 0..p_k {
            let lam = base.cov.eigenvalues[k][i] / base.noise_variance;
            if shrink_eigenvalue(lam, base.cov.gammas[k]) > 0.0 {
                cols.push(i);
            }
        }
        let mut centered = filtered.blocks[k].clone();
        let mut mean_col = vec![Complex64::new(0.0, 0.0); p_k];
        if k == 0 {
            for q in 0..p_k {
                let m: Complex64 = centered.row(q).iter().sum::<Complex64>() / n as f64;
                mean_col[q] = m;
                for i in 0..n {
                    centered[(q, i)] -= m;
                }
            }
        }
        let mut proj = DMatrix::<Complex64>::zeros(p_k, p_k);
        for &i in &cols {
            let u = base.cov.eigenvectors[k].column(i);
            for a in 0..p_k {
                for b in 0..p_k {
                    proj[(a, b)] += u[a] * u[b].conj();
                }
            }
        }
        let mut out = &proj * centered;
        if k == 0 {
            for q in 0..p_k {
                for i in 0..n {
                    out[(q, i)] += mean_col[q];
                }
            }
        }
        filtered.blocks[k] = out;
    }
    crate::transform::reconstruct(&filtered, basis)
}

/// The k = 0 full-Nyquist basis used when a baseline needs the support
/// radius but no band limit was estimated.
pub fn default_mean_band_limit() -> f64 {
    MEAN_BAND_LIMIT
}
