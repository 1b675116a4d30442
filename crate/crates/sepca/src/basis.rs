//! Truncated steerable Fourier-Bessel basis.
//!
//! The basis elements in the Fourier disk of radius `c` (the band limit) are
//!
//! ```text
//! psi_{k,q}(xi, theta) = N_{k,q} J_k(R_{k,q} xi / c) e^{i k theta},   xi <= c,
//! N_{k,q} = 1 / (c sqrt(pi) |J_{k+1}(R_{k,q})|),
//! ```
//!
//! indexed by angular frequency `k` and radial index `q`, where `R_{k,q}` is
//! the q-th positive root of `J_k`. To avoid aliasing on images supported in
//! a disk of radius `R` pixels, only pairs with `R_{k,q+1} <= 2 pi c R` are
//! retained. The inverse Fourier transform of `psi_{k,q}` factors into a
//! radial profile times `e^{i k phi}`; the radial profile is
//!
//! ```text
//! g_{k,q}(r) = i^{-k} * 2 c sqrt(pi) (-1)^q R_{k,q} J_k(2 pi c r)
//!              / ((2 pi c r)^2 - R_{k,q}^2),
//! ```
//!
//! a fixed unit phase `i^{-k}` times a real function of the radius. Within a
//! fixed `k`, products `g conj(g)` are real, which keeps all downstream
//! covariance blocks real symmetric. For negative `k` the profile is defined
//! by conjugation, `g_{-k,q} = conj(g_{k,q})`.
//!
//! Quadrature sizes follow the sampling rule n_xi = ceil(4 c R) Gauss-Legendre
//! nodes on `[0, c]`, n_theta = ceil(16 c R) uniform angles, and n_r = n_xi
//! Gauss-Legendre nodes on `[0, R]` for real-domain radial integrals.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bessel::{bessel_j, bessel_roots, gauss_legendre, QuadratureRule};
use crate::error::{Error, Result};

/// Geometry of the basis: band limit (cycles/pixel), support radius and
/// image side, both in pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BasisParams {
    pub band_limit: f64,
    pub support_radius: usize,
    pub image_size: usize,
}

impl BasisParams {
    pub fn new(band_limit: f64, support_radius: usize, image_size: usize) -> Result<Self> {
        let p = Self {
            band_limit,
            support_radius,
            image_size,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band_limit > 0.0 && self.band_limit <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "band limit must lie in (0, 0.5], got {}",
                self.band_limit
            )));
        }
        if self.image_size < 2 || self.image_size % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "image size must be even and >= 2, got {}",
                self.image_size
            )));
        }
        if self.support_radius < 1 || 2 * self.support_radius > self.image_size {
            return Err(Error::InvalidArgument(format!(
                "support radius must satisfy 1 <= R <= L/2, got R = {}, L = {}",
                self.support_radius, self.image_size
            )));
        }
        Ok(())
    }
}

/// The truncated Fourier-Bessel basis with its quadrature grids and
/// precomputed radial tables. Immutable after construction.
#[derive(Debug, Clone)]
pub struct FbBasis {
    pub params: BasisParams,
    /// Largest angular frequency with at least one retained radial index.
    pub k_max: usize,
    /// Retained roots per angular frequency; `roots[k].len() == p_k`.
    pub roots: Vec<Vec<f64>>,
    /// Normalization factors N_{k,q}, same shape as `roots`.
    pub normalizers: Vec<Vec<f64>>,
    /// Gauss-Legendre rule on [0, c] with n_xi = ceil(4 c R) nodes.
    pub fourier_nodes: QuadratureRule,
    /// Number of uniform angular samples, n_theta = ceil(16 c R).
    pub n_theta: usize,
    /// Gauss-Legendre rule on [0, R] with n_r = n_xi nodes.
    pub radial_nodes: QuadratureRule,
    /// Per k: p_k x n_xi table of N_{k,q} J_k(R_{k,q} xi_j / c).
    fourier_table: Vec<DMatrix<f64>>,
    /// Per k: p_k x n_r table of the real radial profiles at the r_j nodes.
    radial_table: Vec<DMatrix<f64>>,
}

/// The unit phase i^{-k} attached to the radial profile of frequency k >= 0.
pub fn phase_ik(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

impl FbBasis {
    /// Enumerate all (k, q) admitted by the sampling criterion and build the
    /// quadrature grids and radial tables. Deterministic for fixed params.
    pub fn build(params: BasisParams) -> Result<Self> {
        params.validate()?;
        let c = params.band_limit;
        let r_sup = params.support_radius as f64;
        let threshold = 2.0 * std::f64::consts::PI * c * r_sup;

        let mut roots: Vec<Vec<f64>> = Vec::new();
        let mut k = 0u32;
        loop {
            let all = bessel_roots(k, threshold)?;
            // keep q only when the next root also falls under the threshold
            let p_k = all.len().saturating_sub(1);
            if p_k == 0 {
                break;
            }
            roots.push(all[..p_k].to_vec());
            k += 1;
        }
        if roots.is_empty() {
            return Err(Error::EmptyBasis {
                c,
                r: params.support_radius,
            });
        }
        let k_max = roots.len() - 1;

        let mut normalizers = Vec::with_capacity(roots.len());
        for (k, rk) in roots.iter().enumerate() {
            let mut nk = Vec::with_capacity(rk.len());
            for &root in rk {
                let j_next = bessel_j(k as u32 + 1, root)?;
                nk.push(1.0 / (c * std::f64::consts::PI.sqrt() * j_next.abs()));
            }
            normalizers.push(nk);
        }

        let n_xi = (4.0 * c * r_sup).ceil() as usize;
        let n_theta = (16.0 * c * r_sup).ceil() as usize;
        let fourier_nodes = gauss_legendre(n_xi, 0.0, c)?;
        let radial_nodes = gauss_legendre(n_xi, 0.0, r_sup)?;

        let mut basis = Self {
            params,
            k_max,
            roots,
            normalizers,
            fourier_nodes,
            n_theta,
            radial_nodes,
            fourier_table: Vec::new(),
            radial_table: Vec::new(),
        };
        for k in 0..=k_max {
            let p_k = basis.p(k);
            let mut ftab = DMatrix::zeros(p_k, n_xi);
            for q in 0..p_k {
                for (j, &xi) in basis.fourier_nodes.nodes.iter().enumerate() {
                    ftab[(q, j)] = basis.normalizers[k][q]
                        * bessel_j(k as u32, basis.roots[k][q] * xi / c)?;
                }
            }
            basis.fourier_table.push(ftab);
            let rj: Vec<f64> = basis.radial_nodes.nodes.clone();
            basis.radial_table.push(basis.profiles_at(k, &rj)?);
        }
        Ok(basis)
    }

    /// A k = 0 only basis, used for the rotationally invariant mean. The
    /// retained radial indices still follow the sampling criterion for the
    /// given band limit.
    pub fn zero_frequency(band_limit: f64, support_radius: usize, image_size: usize) -> Result<Self> {
        let params = BasisParams::new(band_limit, support_radius, image_size)?;
        let c = params.band_limit;
        let r_sup = params.support_radius as f64;
        let threshold = 2.0 * std::f64::consts::PI * c * r_sup;
        let all = bessel_roots(0, threshold)?;
        let p0 = all.len().saturating_sub(1);
        if p0 == 0 {
            return Err(Error::EmptyBasis {
                c,
                r: params.support_radius,
            });
        }
        let roots = vec![all[..p0].to_vec()];
        let mut nk = Vec::with_capacity(p0);
        for &root in &roots[0] {
            nk.push(1.0 / (c * std::f64::consts::PI.sqrt() * bessel_j(1, root)?.abs()));
        }
        let n_xi = (4.0 * c * r_sup).ceil() as usize;
        let n_theta = (16.0 * c * r_sup).ceil() as usize;
        let fourier_nodes = gauss_legendre(n_xi, 0.0, c)?;
        let radial_nodes = gauss_legendre(n_xi, 0.0, r_sup)?;
        let mut basis = Self {
            params,
            k_max: 0,
            roots,
            normalizers: vec![nk],
            fourier_nodes,
            n_theta,
            radial_nodes,
            fourier_table: Vec::new(),
            radial_table: Vec::new(),
        };
        let mut ftab = DMatrix::zeros(p0, n_xi);
        for q in 0..p0 {
            for (j, &xi) in basis.fourier_nodes.nodes.iter().enumerate() {
                ftab[(q, j)] =
                    basis.normalizers[0][q] * bessel_j(0, basis.roots[0][q] * xi / c)?;
            }
        }
        basis.fourier_table.push(ftab);
        let rj = basis.radial_nodes.nodes.clone();
        basis.radial_table.push(basis.profiles_at(0, &rj)?);
        Ok(basis)
    }

    /// Number of retained radial indices at angular frequency |k|.
    pub fn p(&self, k: usize) -> usize {
        self.roots[k].len()
    }

    /// Total number of components over k = -k_max..k_max.
    pub fn total_dim(&self) -> usize {
        self.p(0) + 2 * (1..=self.k_max).map(|k| self.p(k)).sum::<usize>()
    }

    /// N_{k,q} J_k(R_{k,q} xi_j / c) at the Fourier quadrature nodes.
    pub fn fourier_table(&self, k: usize) -> &DMatrix<f64> {
        &self.fourier_table[k]
    }

    /// Real radial profiles at the [0, R] quadrature nodes.
    pub fn radial_table(&self, k: usize) -> &DMatrix<f64> {
        &self.radial_table[k]
    }

    /// Real radial profile of g_{k,q} (the i^{-k} phase stripped), for k >= 0
    /// and 1-based q is not used here: q is the 0-based radial index.
    pub fn radial_profile(&self, k: usize, q: usize, r: f64) -> Result<f64> {
        if k > self.k_max || q >= self.p(k) {
            return Err(Error::IndexOutOfRange {
                k: k as i64,
                q: q + 1,
            });
        }
        let c = self.params.band_limit;
        let root = self.roots[k][q];
        let x = 2.0 * std::f64::consts::PI * c * r;
        // (-1)^q with q counted 1-based as in the defining formula
        let sign = if (q + 1) % 2 == 0 { 1.0 } else { -1.0 };
        let front = 2.0 * c * std::f64::consts::PI.sqrt() * sign * root;
        let val = if (x - root).abs() < 1e-4 {
            // removable singularity: series of J_k about the root
            let jp = 0.5 * (self.j_signed(k as i64 - 1, root)? - bessel_j(k as u32 + 1, root)?);
            let jpp = -jp / root;
            let jppp = -jp * (root * root - (k * k) as f64 - 2.0) / (root * root);
            let d = x - root;
            (jp + 0.5 * jpp * d + jppp * d * d / 6.0) / (x + root)
        } else {
            bessel_j(k as u32, x)? / ((x - root) * (x + root))
        };
        Ok(front * val)
    }

    fn j_signed(&self, k: i64, x: f64) -> Result<f64> {
        if k >= 0 {
            bessel_j(k as u32, x)
        } else {
            // J_{-1} = -J_1 (only k = -1 is ever needed here)
            Ok(-bessel_j((-k) as u32, x)?)
        }
    }

    /// Real radial profiles for all q at frequency k, evaluated at `radii`;
    /// returns a p_k x radii.len() matrix.
    pub fn profiles_at(&self, k: usize, radii: &[f64]) -> Result<DMatrix<f64>> {
        let p_k = self.p(k);
        let mut out = DMatrix::zeros(p_k, radii.len());
        for q in 0..p_k {
            for (j, &r) in radii.iter().enumerate() {
                out[(q, j)] = self.radial_profile(k, q, r)?;
            }
        }
        Ok(out)
    }

    /// Complex radial part g_{k,q}(r) of the inverse Fourier transform of
    /// psi_{k,q}, with the i^{-k} phase convention; negative k by conjugation.
    pub fn radial_function(&self, k: i64, q: usize, r: f64) -> Result<Complex64> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "radial_function: bad radius {r}"
            )));
        }
        let ka = k.unsigned_abs() as usize;
        if ka > self.k_max || q >= self.p(ka) {
            return Err(Error::IndexOutOfRange { k, q: q + 1 });
        }
        let g = phase_ik(ka) * self.radial_profile(ka, q, r)?;
        Ok(if k < 0 { g.conj() } else { g })
    }
}
