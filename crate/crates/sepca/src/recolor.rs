//! Recoloring (heterogenization) and eigenvalue scaling.
//!
//! Homogenization divides images by `sqrt(fbar)`, so after shrinkage the
//! covariance must be conjugated back. In the steerable basis, multiplication
//! by a radial function is block diagonal over angular frequencies; the
//! recoloring matrix per frequency is the weighted radial Gram matrix
//!
//! ```text
//! B^(k)_{q1 q2} = 2 pi sum_j sqrt(fbar(r_j)) G_{k,q1}(r_j) G_{k,q2}(r_j) r_j w(r_j),
//! ```
//!
//! where the `2 pi` is the angular part of the plane integral over the disk
//! and the profiles are real, making `B` real symmetric. `D^(k)` is the same
//! Gram with weight `fbar` instead of `sqrt(fbar)`; it plays the role of the
//! noise covariance of recolored coefficients.
//!
//! After recoloring, each retained component is rescaled by
//! `alpha = (1 - s^2 tau) / c^2` with `tau = (tr D / p_k) * ell / t`, which
//! undoes the bias from the imperfect sample-population eigenvector overlap;
//! components with non-positive `alpha` are dropped.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::basis::FbBasis;
use crate::covariance::{BlockCovariance, ShrunkenBlocks};
use crate::error::Result;
use crate::mean::RotInvMean;
use crate::shrink::cosine_sq;

/// Per-frequency recoloring matrices B^(k) and D^(k) (real symmetric).
#[derive(Debug, Clone)]
pub struct RecolorMatrices {
    pub b: Vec<DMatrix<f64>>,
    pub d: Vec<DMatrix<f64>>,
}

impl RecolorMatrices {
    pub fn b_complex(&self, k: usize) -> DMatrix<Complex64> {
        self.b[k].map(|v| Complex64::new(v, 0.0))
    }

    pub fn d_complex(&self, k: usize) -> DMatrix<Complex64> {
        self.d[k].map(|v| Complex64::new(v, 0.0))
    }
}

/// Quadrature evaluation of the recoloring Gram matrices on the basis's
/// radial rule, with fbar taken from the rotationally invariant mean.
pub fn recolor_matrices(mean: &RotInvMean, basis: &FbBasis) -> Result<RecolorMatrices> {
    let nodes = &basis.radial_nodes.nodes;
    let weights = &basis.radial_nodes.weights;
    let fbar = mean.profile_at_radii(nodes);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut b = Vec::with_capacity(basis.k_max + 1);
    let mut d = Vec::with_capacity(basis.k_max + 1);
    for k in 0..=basis.k_max {
        let g = basis.radial_table(k); // p_k x n_r
        let p_k = g.nrows();
        let mut bk = DMatrix::<f64>::zeros(p_k, p_k);
        let mut dk = DMatrix::<f64>::zeros(p_k, p_k);
        for j in 0..nodes.len() {
            let rw = nodes[j] * weights[j] * two_pi;
            let wb = fbar[j].sqrt() * rw;
            let wd = fbar[j] * rw;
            for q1 in 0..p_k {
                let g1 = g[(q1, j)];
                for q2 in q1..p_k {
                    let prod = g1 * g[(q2, j)];
                    bk[(q1, q2)] += wb * prod;
                    dk[(q1, q2)] += wd * prod;
                }
            }
        }
        for q1 in 0..p_k {
            for q2 in 0..q1 {
                bk[(q1, q2)] = bk[(q2, q1)];
                dk[(q1, q2)] = dk[(q2, q1)];
            }
        }
        b.push(bk);
        d.push(dk);
    }
    Ok(RecolorMatrices { b, d })
}

/// Conjugate shrunken blocks with the recoloring matrices:
/// S_he^(k) = B^(k)* S^(k) B^(k).
pub fn recolor_block(shrunken: &ShrunkenBlocks, rm: &RecolorMatrices) -> Result<BlockCovariance> {
    let mut blocks = Vec::with_capacity(shrunken.blocks.len());
    for (k, s) in shrunken.blocks.iter().enumerate() {
        let b = rm.b_complex(k);
        // B is real symmetric, so B* = B^T = B
        blocks.push(&b * s * &b);
    }
    BlockCovariance::from_blocks(blocks, shrunken.gammas.clone(), shrunken.n_samples)
}

/// Final scaled covariance blocks S_s^(k) plus per-component diagnostics.
#[derive(Debug, Clone)]
pub struct ScaledBlocks {
    pub blocks: Vec<DMatrix<Complex64>>,
    /// Scaling factors for the retained components, per block.
    pub alphas: Vec<Vec<f64>>,
    /// Components kept after the alpha > 0 filter, per block.
    pub kept_ranks: Vec<usize>,
    pub gammas: Vec<f64>,
    pub n_samples: usize,
}

impl ScaledBlocks {
    pub fn total_rank(&self) -> usize {
        self.kept_ranks.iter().sum()
    }

    pub fn as_block_covariance(&self) -> Result<BlockCovariance> {
        BlockCovariance::from_blocks(self.blocks.clone(), self.gammas.clone(), self.n_samples)
    }
}

/// Scale the recolored blocks. The i-th recolored eigenpair (t_i, v_i) is
/// matched index-by-index (descending) with the i-th shrunken eigenvalue
/// ell_i; alpha_i = (1 - s^2 tau_i)/c^2 when positive and c^2 > 0, else the
/// component is dropped.
pub fn scale_block(
    recolored: &BlockCovariance,
    rm: &RecolorMatrices,
    shrunken: &ShrunkenBlocks,
) -> Result<ScaledBlocks> {
    let mut blocks = Vec::with_capacity(recolored.blocks.len());
    let mut alphas = Vec::with_capacity(recolored.blocks.len());
    let mut kept = Vec::with_capacity(recolored.blocks.len());
    for k in 0..recolored.blocks.len() {
        let p_k = recolored.blocks[k].nrows();
        let gamma = recolored.gammas[k];
        let tr_d_over_p = rm.d[k].trace() / p_k as f64;
        let r_k = shrunken.spike_ranks[k];
        let mut s = DMatrix::<Complex64>::zeros(p_k, p_k);
        let mut al = Vec::with_capacity(r_k);
        let mut n_kept = 0usize;
        for i in 0..r_k {
            let t_i = recolored.eigenvalues[k][i];
            let ell_i = shrunken.ell[k][i];
            let c2 = cosine_sq(ell_i, gamma);
            let s2 = 1.0 - c2;
            let alpha = if t_i > 0.0 && c2 > 0.0 {
                let tau = tr_d_over_p * ell_i / t_i;
                let num = 1.0 - s2 * tau;
                if num > 0.0 {
                    num / c2
                } else {
                    0.0
                }
            } else {
                0.0
            };
            al.push(alpha);
            if alpha > 0.0 {
                n_kept += 1;
                // v_i carries its norm: v v* has weight t_i
                let v = recolored.eigenvectors[k].column(i);
                for a in 0..p_k {
                    for bdx in 0..p_k {
                        s[(a, bdx)] += v[a] * v[bdx].conj() * (alpha * t_i);
                    }
                }
            }
        }
        blocks.push(s);
        alphas.push(al);
        kept.push(n_kept);
    }
    Ok(ScaledBlocks {
        blocks,
        alphas,
        kept_ranks: kept,
        gammas: recolored.gammas.clone(),
        n_samples: recolored.n_samples,
    })
}
