//! Per-frequency sample covariance blocks, their eigendecompositions, and
//! eigenvalue shrinkage.
//!
//! With the zero-frequency coefficients centered, the rotationally invariant
//! homogenized sample covariance is block diagonal over angular frequencies,
//! with `S^(k) = (1/n) Re{ A^(k) A^(k)* }` when reflections are included in
//! the group average (the entrywise real part is exactly the average over
//! the two reflection classes) and `S^(k) = (1/n) A^(k) A^(k)*` without
//! them. The aspect ratios are `gamma_0 = p_0/n` and `gamma_k = p_k/(2n)`
//! for k > 0 (complex coefficients carry two real samples each).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::shrink::shrink_eigenvalue;
use crate::transform::CoeffBlocks;

/// Subtract the per-row mean of the zero-frequency block; k > 0 blocks pass
/// through unchanged.
pub fn center_zero_frequency(coeffs: &CoeffBlocks) -> CoeffBlocks {
    let mut out = coeffs.clone();
    let a0 = &mut out.blocks[0];
    let n = a0.ncols() as f64;
    for q in 0..a0.nrows() {
        let mean: Complex64 = a0.row(q).iter().sum::<Complex64>() / n;
        for i in 0..a0.ncols() {
            a0[(q, i)] -= mean;
        }
    }
    out
}

/// Hermitian covariance blocks with attached eigendecompositions
/// (eigenvalues descending).
#[derive(Debug, Clone)]
pub struct BlockCovariance {
    pub blocks: Vec<DMatrix<Complex64>>,
    pub eigenvalues: Vec<Vec<f64>>,
    pub eigenvectors: Vec<DMatrix<Complex64>>,
    /// gamma_0 = p_0/n, gamma_k = p_k/(2n) for k > 0.
    pub gammas: Vec<f64>,
    pub n_samples: usize,
}

impl BlockCovariance {
    pub fn k_max(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Rebuild a block covariance around externally assembled blocks,
    /// recomputing eigendecompositions and keeping the aspect ratios.
    pub fn from_blocks(
        blocks: Vec<DMatrix<Complex64>>,
        gammas: Vec<f64>,
        n_samples: usize,
    ) -> Result<Self> {
        let mut eigenvalues = Vec::with_capacity(blocks.len());
        let mut eigenvectors = Vec::with_capacity(blocks.len());
        for b in &blocks {
            let (vals, vecs) = hermitian_eigen(b)?;
            eigenvalues.push(vals);
            eigenvectors.push(vecs);
        }
        Ok(Self {
            blocks,
            eigenvalues,
            eigenvectors,
            gammas,
            n_samples,
        })
    }
}

/// Per-frequency sample covariance of (centered) coefficient blocks.
pub fn block_covariance(coeffs: &CoeffBlocks, include_reflections: bool) -> Result<BlockCovariance> {
    let n = coeffs.n_images();
    if n == 0 {
        return Err(Error::InvalidArgument("no images".into()));
    }
    let mut blocks = Vec::with_capacity(coeffs.blocks.len());
    let mut gammas = Vec::with_capacity(coeffs.blocks.len());
    for (k, a) in coeffs.blocks.iter().enumerate() {
        let p_k = a.nrows();
        // (1/n) A A^*
        let mut s = DMatrix::<Complex64>::zeros(p_k, p_k);
        s.gemm(
            Complex64::new(1.0 / n as f64, 0.0),
            a,
            &a.adjoint(),
            Complex64::new(0.0, 0.0),
        );
        if include_reflections {
            // averaging over reflections keeps only the real part
            for z in s.iter_mut() {
                *z = Complex64::new(z.re, 0.0);
            }
        } else {
            // enforce exact Hermitian symmetry against roundoff
            let sh = (s.clone() + s.adjoint()) * Complex64::new(0.5, 0.0);
            s = sh;
        }
        blocks.push(s);
        gammas.push(if k == 0 {
            p_k as f64 / n as f64
        } else {
            p_k as f64 / (2.0 * n as f64)
        });
    }
    BlockCovariance::from_blocks(blocks, gammas, n)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
///
/// Real-symmetric inputs go straight to the real solver; genuinely complex
/// ones are embedded as the 2p x 2p real symmetric matrix [[X, -Y], [Y, X]],
/// whose spectrum duplicates each eigenvalue with eigenvector pairs
/// (x, y) ~ v = x + i y and (-y, x) ~ i v. A greedy complex Gram-Schmidt
/// pass keeps one representative per pair.
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let p = m.nrows();
    if p != m.ncols() {
        return Err(Error::InvalidArgument("matrix not square".into()));
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let herm_err = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] - m[(j, i)].conj()).norm())
        .fold(0.0f64, f64::max);
    if herm_err > 1e-9 * scale.max(1.0) {
        return Err(Error::Numerical(format!(
            "matrix is not Hermitian (asymmetry {herm_err:.3e})"
        )));
    }
    let imag_max = m.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
    if imag_max <= 1e-14 * scale.max(1.0) {
        // real symmetric path
        let mut re = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                re[(i, j)] = 0.5 * (m[(i, j)].re + m[(j, i)].re);
            }
        }
        let eig = crate::eigh::sym_eigen(&re, true)?;
        let q = eig.vectors.as_ref().unwrap();
        let mut vecs = DMatrix::<Complex64>::zeros(p, p);
        for col in 0..p {
            for r in 0..p {
                vecs[(r, col)] = Complex64::new(q[(r, col)], 0.0);
            }
        }
        return Ok((eig.values, vecs));
    }

    // complex Hermitian: real embedding
    let mut big = DMatrix::<f64>::zeros(2 * p, 2 * p);
    for i in 0..p {
        for j in 0..p {
            let z = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            big[(i, j)] = z.re;
            big[(i, j + p)] = -z.im;
            big[(i + p, j)] = z.im;
            big[(i + p, j + p)] = z.re;
        }
    }
    let eig = crate::eigh::sym_eigen(&big, true)?;
    let q = eig.vectors.as_ref().unwrap();

    let mut vals = Vec::with_capacity(p);
    let mut vecs = DMatrix::<Complex64>::zeros(p, p);
    let mut kept: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(p);
    for idx in 0..2 * p {
        if kept.len() == p {
            break;
        }
        let lambda = eig.values[idx];
        let mut v = nalgebra::DVector::<Complex64>::zeros(p);
        for r in 0..p {
            v[r] = Complex64::new(q[(r, idx)], q[(r + p, idx)]);
        }
        // remove components along representatives already kept
        for u in &kept {
            let proj: Complex64 = u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            let vv = v.clone() - u * proj;
            v = vv;
        }
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.5 {
            let vn = v / Complex64::new(norm, 0.0);
            vals.push(lambda);
            kept.push(vn);
        }
    }
    if kept.len() != p {
        return Err(Error::Numerical(
            "failed to extract a full complex eigenbasis from the real embedding".into(),
        ));
    }
    for (col, v) in kept.iter().enumerate() {
        for r in 0..p {
            vecs[(r, col)] = v[r];
        }
    }
    Ok((vals, vecs))
}

/// Shrunken covariance blocks plus the retained spike data.
#[derive(Debug, Clone)]
pub struct ShrunkenBlocks {
    /// S^(k) with eigenvalues replaced by the shrinker output.
    pub blocks: Vec<DMatrix<Complex64>>,
    /// Shrunken eigenvalues per block (descending, only the positive ones).
    pub ell: Vec<Vec<f64>>,
    /// Eigenvectors of the homogenized blocks (all columns).
    pub eigenvectors: Vec<DMatrix<Complex64>>,
    /// Number of spikes above the Marchenko-Pastur edge per block.
    pub spike_ranks: Vec<usize>,
    pub gammas: Vec<f64>,
    pub n_samples: usize,
}

/// Apply the eigenvalue shrinker to every block.
pub fn shrink_block(cov: &BlockCovariance) -> ShrunkenBlocks {
    let mut blocks = Vec::with_capacity(cov.blocks.len());
    let mut ells = Vec::with_capacity(cov.blocks.len());
    let mut ranks = Vec::with_capacity(cov.blocks.len());
    for k in 0..cov.blocks.len() {
        let gamma = cov.gammas[k];
        let p_k = cov.blocks[k].nrows();
        let ell: Vec<f64> = cov.eigenvalues[k]
            .iter()
            .map(|&l| shrink_eigenvalue(l, gamma))
            .take_while(|&e| e > 0.0)
            .collect();
        let r_k = ell.len();
        let mut s = DMatrix::<Complex64>::zeros(p_k, p_k);
        for (i, &e) in ell.iter().enumerate() {
            let u = cov.eigenvectors[k].column(i);
            for a in 0..p_k {
                for b in 0..p_k {
                    s[(a, b)] += u[a] * u[b].conj() * e;
                }
            }
        }
        blocks.push(s);
        ells.push(ell);
        ranks.push(r_k);
    }
    ShrunkenBlocks {
        blocks,
        ell: ells,
        eigenvectors: cov.eigenvectors.clone(),
        spike_ranks: ranks,
        gammas: cov.gammas.clone(),
        n_samples: cov.n_samples,
    }
}
