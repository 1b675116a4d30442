//! Component-count selection.
//!
//! Two rank estimators are provided: a permutation bootstrap for Cartesian
//! data matrices (shuffling each column destroys linear structure while
//! preserving the noise marginals; the top singular values of the shuffled
//! replicates calibrate a detection threshold), and the Marchenko-Pastur
//! edge count used for the steerable per-frequency blocks.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Outcome of the permutation bootstrap.
#[derive(Debug, Clone)]
pub struct RankEstimate {
    pub rank: usize,
    /// Detection threshold: the ceil((1-rho) n_perm)-th smallest replicate
    /// top singular value.
    pub threshold: f64,
    pub rho: f64,
    pub n_permutations: usize,
}

/// Top singular value via Lanczos on M^T M with full reorthogonalization.
/// Deterministic for a fixed seed; 48 iterations are ample for the ~1e-6
/// relative accuracy the order statistics need.
fn top_singular_value(m: &DMatrix<f64>, seed: u64) -> f64 {
    let n = m.ncols();
    let iters = 48.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::<f64>::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    v /= v.norm();
    let mut basis: Vec<DVector<f64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    for i in 0..iters {
        let w0 = m * &basis[i];
        let mut w = m.transpose() * w0;
        if i > 0 {
            w -= &basis[i - 1] * betas[i - 1];
        }
        let a = basis[i].dot(&w);
        alphas.push(a);
        w -= &basis[i] * a;
        // full reorthogonalization keeps the tridiagonal honest
        for u in &basis {
            let p = u.dot(&w);
            w -= u * p;
        }
        let b = w.norm();
        if b < 1e-12 {
            break;
        }
        betas.push(b);
        w /= b;
        basis.push(w);
    }
    // largest eigenvalue of the tridiagonal via bisection-free symmetric eig
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    crate::eigh::sym_eigen(&t, false)
        .map(|e| e.values.first().copied().unwrap_or(0.0))
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt()
}

/// All singular values above `threshold`, counted through the eigenvalues of
/// the smaller Gram matrix.
fn count_singular_above(m: &DMatrix<f64>, threshold: f64) -> usize {
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let t2 = threshold * threshold;
    match crate::eigh::sym_eigen(&gram, false) {
        Ok(eig) => eig.values.iter().filter(|&&l| l > t2).count(),
        Err(_) => 0,
    }
}

/// Permutation-bootstrap rank estimate on a mean-subtracted p x n matrix.
/// Each replicate permutes every column independently; the threshold is the
/// ceil((1-rho) n_perm)-th order statistic of the replicate top singular
/// values, and the rank counts data singular values above it.
pub fn permutation_rank(
    data: &DMatrix<f64>,
    rho: f64,
    n_perm: usize,
    seed: u64,
) -> Result<RankEstimate> {
    if n_perm < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 permutation replicates, got {n_perm}"
        )));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1], got {rho}"
        )));
    }
    let (p, n) = (data.nrows(), data.ncols());
    let mut tops = Vec::with_capacity(n_perm);
    let mut perm = DMatrix::<f64>::zeros(p, n);
    let mut idx: Vec<usize> = (0..p).collect();
    for t in 0..n_perm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(t as u64 + 1)));
        for j in 0..n {
            idx.iter_mut().enumerate().for_each(|(i, v)| *v = i);
            idx.shuffle(&mut rng);
            for i in 0..p {
                perm[(i, j)] = data[(idx[i], j)];
            }
        }
        tops.push(top_singular_value(&perm, seed ^ 0xabcd_1234 ^ t as u64));
    }
    tops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ord = ((1.0 - rho) * n_perm as f64).ceil() as usize;
    let threshold = tops[ord.clamp(1, n_perm) - 1];
    let rank = count_singular_above(data, threshold);
    Ok(RankEstimate {
        rank,
        threshold,
        rho,
        n_permutations: n_perm,
    })
}

/// Number of eigenvalues above the Marchenko-Pastur bulk edge
/// (1 + sqrt(gamma))^2.
pub fn mp_edge_rank(eigenvalues: &[f64], gamma: f64) -> usize {
    let edge = (1.0 + gamma.sqrt()).powi(2);
    eigenvalues.iter().filter(|&&l| l > edge).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(p: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::<f64>::from_fn(p, n, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        // mean-subtract across columns
        for i in 0..p {
            let mean: f64 = m.row(i).iter().sum::<f64>() / n as f64;
            for j in 0..n {
                m[(i, j)] -= mean;
            }
        }
        m
    }

    #[test]
    fn lanczos_matches_full_svd() {
        let m = noise(40, 120, 7);
        let top = top_singular_value(&m, 99);
        let svd = m.clone().svd(false, false);
        let want = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        assert!(
            (top - want).abs() <= 1e-8 * want,
            "lanczos {top} vs svd {want}"
        );
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let m = DMatrix::<f64>::zeros(20, 50);
        let est = permutation_rank(&m, 0.1, 12, 0).unwrap();
        assert_eq!(est.rank, 0);
    }

    #[test]
    fn too_few_replicates_rejected() {
        let m = noise(10, 20, 1);
        assert!(permutation_rank(&m, 0.1, 9, 0).is_err());
    }

    #[test]
    fn pure_noise_rank_is_mostly_zero() {
        let mut zero = 0;
        let runs = 40;
        for s in 0..runs as u64 {
            let m = noise(30, 150, 100 + s);
            let est = permutation_rank(&m, 0.1, 20, 17 + s).unwrap();
            zero += (est.rank == 0) as usize;
        }
        // ~rho of runs flag a spurious component by construction
        assert!(zero * 10 >= runs * 8, "only {zero}/{runs} null runs");
    }

    #[test]
    fn strong_spike_is_detected() {
        let mut hits = 0;
        let runs = 20;
        for s in 0..runs as u64 {
            let mut m = noise(30, 150, 500 + s);
            let mut rng = ChaCha8Rng::seed_from_u64(900 + s);
            let u: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let un: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            for j in 0..150 {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                // spike ~10x the noise edge
                for i in 0..30 {
                    m[(i, j)] += 10.0 * ((150.0_f64).sqrt() + (30.0_f64).sqrt()) / 150.0_f64.sqrt()
                        * u[i] / un
                        * z;
                }
            }
            let est = permutation_rank(&m, 0.1, 20, 31 + s).unwrap();
            hits += (est.rank >= 1) as usize;
        }
        assert!(hits * 20 >= runs * 19, "spike detected in {hits}/{runs}");
    }

    #[test]
    fn row_reordering_leaves_estimate_distribution() {
        // the permutation null is exchangeable over rows: reversing the rows
        // and rerunning with the same seed yields the same rank
        let m = noise(25, 80, 3);
        let mut rev = DMatrix::<f64>::zeros(25, 80);
        for i in 0..25 {
            for j in 0..80 {
                rev[(i, j)] = m[(24 - i, j)];
            }
        }
        let a = permutation_rank(&m, 0.1, 16, 5).unwrap();
        let b = permutation_rank(&rev, 0.1, 16, 5).unwrap();
        assert_eq!(a.rank, b.rank);
    }

    #[test]
    fn mp_edge_examples() {
        assert_eq!(mp_edge_rank(&[1.0, 1.0, 1.0], 1.0), 0);
        assert_eq!(mp_edge_rank(&[5.0, 3.9], 1.0), 1);
        assert_eq!(mp_edge_rank(&[2.26, 2.24], 0.25), 1);
    }

    #[test]
    fn mp_edge_monotone_in_eigenvalues() {
        let base = [3.0, 2.0, 1.0];
        let r0 = mp_edge_rank(&base, 0.5);
        let bumped = [3.5, 2.9, 1.0];
        assert!(mp_edge_rank(&bumped, 0.5) >= r0);
    }
}
