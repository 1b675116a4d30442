//! Rotation invariant covariance kernel on the Cartesian grid.
//!
//! Given per-frequency blocks S^(k), the pixel-domain covariance kernel is
//!
//! ```text
//! K(x, x') = G_0(r)^T S^(0) G_0(r')
//!            + 2 sum_{k>=1} Re[ e^{i k (phi - phi')} G_k(r)^T S^(k) G_k(r') ],
//! ```
//!
//! where `G_k(r)` stacks the real radial profiles at radius r. The i^{+-k}
//! phases of the basis cancel between the two factors, and the angular
//! dependence enters only through `phi - phi'`, so the kernel is exactly
//! invariant under a common rotation of both arguments. Points outside the
//! support disk map to zero.

use nalgebra::DMatrix;
use crate::basis::FbBasis;
use crate::covariance::BlockCovariance;
use crate::error::Result;

/// Evaluate the kernel on a list of Cartesian points (in pixel coordinates
/// relative to the grid center). Returns a real symmetric matrix.
pub fn covariance_kernel(
    cov: &BlockCovariance,
    basis: &FbBasis,
    points: &[(f64, f64)],
) -> Result<DMatrix<f64>> {
    let m = points.len();
    let r_sup = basis.params.support_radius as f64;
    let inside: Vec<bool> = points
        .iter()
        .map(|&(x, y)| x.hypot(y) <= r_sup)
        .collect();
    let radii: Vec<f64> = points.iter().map(|&(x, y)| x.hypot(y)).collect();
    let phis: Vec<f64> = points.iter().map(|&(x, y)| y.atan2(x)).collect();

    let mut out = DMatrix::<f64>::zeros(m, m);
    for k in 0..=basis.k_max.min(cov.k_max()) {
        // radial factor: E real (p_k x m), columns zero outside the disk
        let mut e = basis.profiles_at(k, &radii)?;
        for (col, &ok) in inside.iter().enumerate() {
            if !ok {
                for q in 0..e.nrows() {
                    e[(q, col)] = 0.0;
                }
            }
        }
        let s = &cov.blocks[k];
        let s_re = s.map(|z| z.re);
        let s_im = s.map(|z| z.im);
        let m_re = e.transpose() * &s_re * &e;
        let needs_im = s_im.iter().any(|&v| v.abs() > 0.0);
        let m_im = if needs_im {
            Some(e.transpose() * &s_im * &e)
        } else {
            None
        };
        if k == 0 {
            out += &m_re;
        } else {
            for a in 0..m {
                for b in 0..m {
                    let dphi = k as f64 * (phis[a] - phis[b]);
                    let (s_, c_) = dphi.sin_cos();
                    // 2 Re[(m_re + i m_im)(cos + i sin)]
                    let mut v = m_re[(a, b)] * c_;
                    if let Some(mi) = &m_im {
                        v -= mi[(a, b)] * s_;
                    }
                    out[(a, b)] += 2.0 * v;
                }
            }
        }
    }
    // exact symmetrization against roundoff
    for a in 0..m {
        for b in 0..a {
            let v = 0.5 * (out[(a, b)] + out[(b, a)]);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// Kernel over the full L x L pixel grid, as an L^2 x L^2 matrix in row-major
/// pixel order (rows/cols outside the disk are zero).
pub fn covariance_kernel_grid(cov: &BlockCovariance, basis: &FbBasis) -> Result<DMatrix<f64>> {
    let l = basis.params.image_size;
    let half = (l / 2) as f64;
    let points: Vec<(f64, f64)> = (0..l * l)
        .map(|p| ((p / l) as f64 - half, (p % l) as f64 - half))
        .collect();
    covariance_kernel(cov, basis, &points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisParams, FbBasis};
    use num_complex::Complex64;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk() -> FbBasis {
        FbBasis::build(BasisParams::new(0.15, 14, 32).unwrap()).unwrap()
    }

    fn random_psd_cov(basis: &FbBasis, seed: u64) -> BlockCovariance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<_> = (0..=basis.k_max)
            .map(|k| {
                let p = basis.p(k);
                let a = DMatrix::<f64>::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
                (&a * a.transpose()).map(|v| Complex64::new(v, 0.0))
            })
            .collect();
        BlockCovariance::from_blocks(blocks, vec![0.5; basis.k_max + 1], 10).unwrap()
    }

    #[test]
    fn zero_blocks_give_zero_kernel() {
        let b = desk();
        let blocks: Vec<_> = (0..=b.k_max)
            .map(|k| DMatrix::<Complex64>::zeros(b.p(k), b.p(k)))
            .collect();
        let cov = BlockCovariance::from_blocks(blocks, vec![0.5; b.k_max + 1], 10).unwrap();
        let pts = [(0.0, 0.0), (3.0, 4.0), (-2.0, 1.0)];
        let ker = covariance_kernel(&cov, &b, &pts).unwrap();
        assert!(ker.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kernel_is_rotation_invariant() {
        let b = desk();
        let cov = random_psd_cov(&b, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let r1 = rng.gen_range(0.0..13.0);
            let r2 = rng.gen_range(0.0..13.0);
            let p1 = rng.gen_range(0.0..std::f64::consts::TAU);
            let p2 = rng.gen_range(0.0..std::f64::consts::TAU);
            let alpha = rng.gen_range(0.0..std::f64::consts::TAU);
            let pts = [
                (r1 * p1.cos(), r1 * p1.sin()),
                (r2 * p2.cos(), r2 * p2.sin()),
                (r1 * (p1 + alpha).cos(), r1 * (p1 + alpha).sin()),
                (r2 * (p2 + alpha).cos(), r2 * (p2 + alpha).sin()),
            ];
            let ker = covariance_kernel(&cov, &b, &pts).unwrap();
            assert!(
                (ker[(0, 1)] - ker[(2, 3)]).abs() <= 1e-8,
                "kernel moved under rotation: {} vs {}",
                ker[(0, 1)],
                ker[(2, 3)]
            );
        }
    }

    #[test]
    fn zero_frequency_rank_one_kernel_is_radial() {
        let b = desk();
        let mut blocks: Vec<_> = (0..=b.k_max)
            .map(|k| DMatrix::<Complex64>::zeros(b.p(k), b.p(k)))
            .collect();
        blocks[0][(1, 1)] = Complex64::new(1.0, 0.0);
        let cov = BlockCovariance::from_blocks(blocks, vec![0.5; b.k_max + 1], 10).unwrap();
        let pts = [
            (5.0, 0.0),
            (0.0, 5.0),
            (-3.0, 4.0), // also radius 5
            (7.0, 0.0),
        ];
        let ker = covariance_kernel(&cov, &b, &pts).unwrap();
        assert!((ker[(0, 3)] - ker[(1, 3)]).abs() <= 1e-10);
        assert!((ker[(0, 3)] - ker[(2, 3)]).abs() <= 1e-10);
        // and equals the explicit rank-one product
        let g = |r: f64| b.radial_profile(0, 1, r).unwrap();
        assert!((ker[(0, 3)] - g(5.0) * g(7.0)).abs() <= 1e-12);
    }

    #[test]
    fn points_outside_disk_are_zero() {
        let b = desk();
        let cov = random_psd_cov(&b, 8);
        let pts = [(20.0, 0.0), (1.0, 1.0)];
        let ker = covariance_kernel(&cov, &b, &pts).unwrap();
        assert_eq!(ker[(0, 0)], 0.0);
        assert_eq!(ker[(0, 1)], 0.0);
        assert!(ker[(1, 1)] != 0.0);
    }
}
