//! Image stack <-> Fourier-Bessel coefficient transforms.
//!
//! The forward path samples the discrete Fourier transform of each image on
//! a polar quadrature grid,
//!
//! ```text
//! F(I)(xi_j, theta_l) = (1/2R) sum_{i1,i2 = -R}^{R-1} I(i1, i2)
//!                       e^{-2 pi i xi_j (i1 cos theta_l + i2 sin theta_l)},
//! ```
//!
//! reduces each concentric circle to angular harmonics, and projects onto the
//! radial basis functions with the Gauss-Legendre weights `xi_j w(xi_j)`:
//!
//! ```text
//! a_{k,q} = 2R sum_j N_{k,q} J_k(R_{k,q} xi_j / c)
//!           [ (2 pi / n_theta) sum_l F(I)(xi_j, theta_l) e^{-i k theta_l} ]
//!           xi_j w(xi_j).
//! ```
//!
//! The `2R` prefactor undoes the unitary-DFT normalization of `F(I)` so that
//! the map image -> coefficients is nearly norm-preserving. Only k >= 0 is
//! stored; real images have `a_{-k,q} = conj(a_{k,q})`.
//!
//! The inverse path evaluates the truncated expansion on the Cartesian grid,
//!
//! ```text
//! X(x, y) = sum_q a_{0,q} G_{0,q}(r) +
//!           2 Re sum_{k>=1} i^k e^{i k phi} sum_q a_{k,q} G_{k,q}(r),
//! ```
//!
//! with `G` the real radial profiles (`g_{k,q} = i^{-k} G_{k,q}`), and zeroes
//! every pixel outside the support disk r <= R.
//!
//! Under counter-clockwise rotation by alpha the coefficients pick up the
//! phase e^{-i k alpha}; under reflection about the y axis they conjugate.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::{phase_ik, BasisParams, FbBasis};
use crate::error::{Error, Result};
use crate::image::{ImageStack, StackKind};

const IMAGE_CHUNK: usize = 2048;
const NODE_CHUNK: usize = 64;

/// Per-frequency coefficient matrices A^(k), each p_k x n, for k = 0..k_max.
#[derive(Debug, Clone)]
pub struct CoeffBlocks {
    pub params: BasisParams,
    pub blocks: Vec<DMatrix<Complex64>>,
}

impl CoeffBlocks {
    pub fn k_max(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn n_images(&self) -> usize {
        self.blocks[0].ncols()
    }

    pub fn zeros_like(basis: &FbBasis, n: usize) -> Self {
        Self {
            params: basis.params,
            blocks: (0..=basis.k_max)
                .map(|k| DMatrix::zeros(basis.p(k), n))
                .collect(),
        }
    }

    /// Squared coefficient norm counting negative frequencies, i.e.
    /// |A0|^2 + 2 sum_{k>0} |Ak|^2.
    pub fn norm_sq(&self) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let s: f64 = a.iter().map(|z| z.norm_sqr()).sum();
                if k == 0 {
                    s
                } else {
                    2.0 * s
                }
            })
            .sum()
    }
}

fn check_geometry(stack: &ImageStack, basis: &FbBasis) -> Result<()> {
    if stack.l != basis.params.image_size {
        return Err(Error::InvalidArgument(format!(
            "stack side {} does not match basis image size {}",
            stack.l, basis.params.image_size
        )));
    }
    Ok(())
}

/// Nonuniform Fourier samples of one image on the basis polar grid,
/// returned as an n_xi x n_theta matrix.
pub fn polar_fourier_samples(
    image: &[f64],
    basis: &FbBasis,
) -> Result<DMatrix<Complex64>> {
    let l = basis.params.image_size;
    if image.len() != l * l {
        return Err(Error::InvalidArgument(format!(
            "image has {} pixels, expected {}",
            image.len(),
            l * l
        )));
    }
    let r_sup = basis.params.support_radius;
    let w = 2 * r_sup;
    let n_xi = basis.fourier_nodes.nodes.len();
    let n_theta = basis.n_theta;
    let mut out = DMatrix::zeros(n_xi, n_theta);
    let offset = l / 2 - r_sup;
    let mut u = vec![Complex64::new(0.0, 0.0); w];
    let mut v = vec![Complex64::new(0.0, 0.0); w];
    for (j, &xi) in basis.fourier_nodes.nodes.iter().enumerate() {
        for li in 0..n_theta {
            let theta = 2.0 * std::f64::consts::PI * li as f64 / n_theta as f64;
            let c1 = xi * theta.cos();
            let c2 = xi * theta.sin();
            for a in 0..w {
                let x = a as f64 - r_sup as f64;
                let (s1, c1c) = (-2.0 * std::f64::consts::PI * c1 * x).sin_cos();
                u[a] = Complex64::new(c1c, s1);
                let (s2, c2c) = (-2.0 * std::f64::consts::PI * c2 * x).sin_cos();
                v[a] = Complex64::new(c2c, s2);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..w {
                let mut row = Complex64::new(0.0, 0.0);
                let base = (a + offset) * l + offset;
                for b in 0..w {
                    row += v[b] * image[base + b];
                }
                acc += u[a] * row;
            }
            out[(j, li)] = acc / (2.0 * r_sup as f64);
        }
    }
    Ok(out)
}

/// Expand a stack into per-frequency coefficient blocks.
pub fn expand(stack: &ImageStack, basis: &FbBasis) -> Result<CoeffBlocks> {
    check_geometry(stack, basis)?;
    let l = stack.l;
    let r_sup = basis.params.support_radius;
    let w = 2 * r_sup;
    let wn = w * w;
    let n = stack.n;
    let n_xi = basis.fourier_nodes.nodes.len();
    let n_theta = basis.n_theta;
    let n_nodes = n_xi * n_theta;
    let offset = l / 2 - r_sup;
    let two_pi = 2.0 * std::f64::consts::PI;

    // weighted radial projection tables, rows scaled by 2R * xi_j w_j later
    let mut blocks: Vec<DMatrix<Complex64>> = (0..=basis.k_max)
        .map(|k| DMatrix::zeros(basis.p(k), n))
        .collect();

    // node coefficients c1, c2 per node
    let mut c1s = vec![0.0; n_nodes];
    let mut c2s = vec![0.0; n_nodes];
    for j in 0..n_xi {
        let xi = basis.fourier_nodes.nodes[j];
        for li in 0..n_theta {
            let theta = two_pi * li as f64 / n_theta as f64;
            c1s[j * n_theta + li] = xi * theta.cos();
            c2s[j * n_theta + li] = xi * theta.sin();
        }
    }
    // angular phases e^{-i k theta_l} * (2 pi / n_theta)
    let ang: Vec<Vec<Complex64>> = (0..=basis.k_max)
        .map(|k| {
            (0..n_theta)
                .map(|li| {
                    let th = two_pi * (k * li) as f64 / n_theta as f64;
                    Complex64::new(th.cos(), -th.sin()) * (two_pi / n_theta as f64)
                })
                .collect()
        })
        .collect();

    // radial projection tables with weights 2R xi_j w_j, per frequency
    let jw: Vec<DMatrix<f64>> = (0..=basis.k_max)
        .map(|k| {
            let jt = basis.fourier_table(k);
            let p_k = basis.p(k);
            let mut m = DMatrix::<f64>::zeros(p_k, n_xi);
            for q in 0..p_k {
                for j in 0..n_xi {
                    m[(q, j)] = jt[(q, j)]
                        * basis.fourier_nodes.nodes[j]
                        * basis.fourier_nodes.weights[j]
                        * 2.0
                        * r_sup as f64;
                }
            }
            m
        })
        .collect();

    // independent image chunks, stitched back in order
    let chunk_starts: Vec<usize> = (0..n).step_by(IMAGE_CHUNK).collect();
    let chunk_results: Vec<Vec<DMatrix<Complex64>>> = chunk_starts
        .par_iter()
        .map(|&col0| {
            let ic = (n - col0).min(IMAGE_CHUNK);
            // window matrix, pixels x images
            let mut wmat = DMatrix::<f64>::zeros(wn, ic);
            for i in 0..ic {
                let img = stack.image(col0 + i);
                for a in 0..w {
                    let base = (a + offset) * l + offset;
                    for b in 0..w {
                        wmat[(a * w + b, i)] = img[base + b];
                    }
                }
            }
            let mut kre = DMatrix::<f64>::zeros(NODE_CHUNK, wn);
            let mut kim = DMatrix::<f64>::zeros(NODE_CHUNK, wn);
            let mut fre = DMatrix::<f64>::zeros(n_nodes, ic);
            let mut fim = DMatrix::<f64>::zeros(n_nodes, ic);
            let mut node0 = 0;
            while node0 < n_nodes {
                let nc = (n_nodes - node0).min(NODE_CHUNK);
                for t in 0..nc {
                    let node = node0 + t;
                    let (c1, c2) = (c1s[node], c2s[node]);
                    for a in 0..w {
                        let x = a as f64 - r_sup as f64;
                        let (su, cu) = (-two_pi * c1 * x).sin_cos();
                        for b in 0..w {
                            let y = b as f64 - r_sup as f64;
                            let (sv, cv) = (-two_pi * c2 * y).sin_cos();
                            kre[(t, a * w + b)] = (cu * cv - su * sv) / (2.0 * r_sup as f64);
                            kim[(t, a * w + b)] = (cu * sv + su * cv) / (2.0 * r_sup as f64);
                        }
                    }
                }
                let kre_v = kre.view((0, 0), (nc, wn));
                let kim_v = kim.view((0, 0), (nc, wn));
                fre.view_mut((node0, 0), (nc, ic))
                    .gemm(1.0, &kre_v, &wmat, 0.0);
                fim.view_mut((node0, 0), (nc, ic))
                    .gemm(1.0, &kim_v, &wmat, 0.0);
                node0 += nc;
            }

            // per-frequency angular reduction then radial projection
            let mut out = Vec::with_capacity(basis.k_max + 1);
            for k in 0..=basis.k_max {
                let p_k = basis.p(k);
                let mut fk_re = DMatrix::<f64>::zeros(n_xi, ic);
                let mut fk_im = DMatrix::<f64>::zeros(n_xi, ic);
                for j in 0..n_xi {
                    for li in 0..n_theta {
                        let ph = ang[k][li];
                        let row = j * n_theta + li;
                        for i in 0..ic {
                            let (fr, fi) = (fre[(row, i)], fim[(row, i)]);
                            fk_re[(j, i)] += ph.re * fr - ph.im * fi;
                            fk_im[(j, i)] += ph.re * fi + ph.im * fr;
                        }
                    }
                }
                let are = &jw[k] * &fk_re;
                let aim = &jw[k] * &fk_im;
                let mut blk = DMatrix::<Complex64>::zeros(p_k, ic);
                for q in 0..p_k {
                    for i in 0..ic {
                        blk[(q, i)] = Complex64::new(are[(q, i)], aim[(q, i)]);
                    }
                }
                out.push(blk);
            }
            out
        })
        .collect();

    for (chunk_idx, &col0) in chunk_starts.iter().enumerate() {
        for k in 0..=basis.k_max {
            let blk = &chunk_results[chunk_idx][k];
            for q in 0..basis.p(k) {
                for i in 0..blk.ncols() {
                    blocks[k][(q, col0 + i)] = blk[(q, i)];
                }
            }
        }
    }

    Ok(CoeffBlocks {
        params: basis.params,
        blocks,
    })
}

/// Disk pixel bookkeeping shared by reconstruction and kernel evaluation.
struct DiskGrid {
    /// flat pixel index, unique-radius id, angle
    pixels: Vec<(usize, usize, f64)>,
    radii: Vec<f64>,
}

fn disk_grid(l: usize, r_sup: usize) -> DiskGrid {
    let half = (l / 2) as f64;
    let mut radii: Vec<f64> = Vec::new();
    let mut ids = std::collections::BTreeMap::<u64, usize>::new();
    let mut pixels = Vec::new();
    for ix in 0..l {
        let x = ix as f64 - half;
        for iy in 0..l {
            let y = iy as f64 - half;
            let r = x.hypot(y);
            if r <= r_sup as f64 {
                let key = r.to_bits();
                let id = *ids.entry(key).or_insert_with(|| {
                    radii.push(r);
                    radii.len() - 1
                });
                pixels.push((ix * l + iy, id, y.atan2(x)));
            }
        }
    }
    DiskGrid { pixels, radii }
}

/// Evaluate the truncated expansion on the Cartesian grid. Pixels outside the
/// support disk are zero. Output images are real by conjugate symmetry.
pub fn reconstruct(coeffs: &CoeffBlocks, basis: &FbBasis) -> Result<ImageStack> {
    if coeffs.params != basis.params {
        return Err(Error::InvalidArgument(
            "coefficient blocks belong to a different basis".into(),
        ));
    }
    let l = basis.params.image_size;
    let n = coeffs.n_images();
    let grid = disk_grid(l, basis.params.support_radius);
    let n_rad = grid.radii.len();

    // radial profiles at the unique radii, per k
    let mut gtabs = Vec::with_capacity(basis.k_max + 1);
    for k in 0..=basis.k_max {
        gtabs.push(basis.profiles_at(k, &grid.radii)?);
    }
    // i^k e^{i k phi} per pixel and k >= 1
    let mut phases: Vec<Vec<(f64, f64)>> = Vec::with_capacity(basis.k_max + 1);
    phases.push(Vec::new());
    for k in 1..=basis.k_max {
        let ik = phase_ik(k).conj(); // i^{+k}
        let ph = grid
            .pixels
            .iter()
            .map(|&(_, _, phi)| {
                let (s, c) = (k as f64 * phi).sin_cos();
                (ik.re * c - ik.im * s, ik.re * s + ik.im * c)
            })
            .collect();
        phases.push(ph);
    }

    let mut out = ImageStack::zeros(n, l, StackKind::Intensity);
    let chunk_starts: Vec<usize> = (0..n).step_by(IMAGE_CHUNK).collect();
    let pieces: Vec<Vec<f64>> = chunk_starts
        .par_iter()
        .map(|&col0| {
            let ic = (n - col0).min(IMAGE_CHUNK);
            let mut piece = vec![0.0; ic * l * l];
            // k = 0 term: values depend on radius only
            let a0 = &coeffs.blocks[0];
            let p0 = a0.nrows();
            let mut a0re = DMatrix::<f64>::zeros(ic, p0);
            for i in 0..ic {
                for q in 0..p0 {
                    a0re[(i, q)] = a0[(q, col0 + i)].re;
                }
            }
            let mut vals0 = DMatrix::<f64>::zeros(ic, n_rad);
            vals0.gemm(1.0, &a0re, &gtabs[0], 0.0);
            for i in 0..ic {
                let img = &mut piece[i * l * l..(i + 1) * l * l];
                for &(pix, rid, _) in &grid.pixels {
                    img[pix] = vals0[(i, rid)];
                }
            }
            for k in 1..=basis.k_max {
                let ak = &coeffs.blocks[k];
                let p_k = ak.nrows();
                let mut akre = DMatrix::<f64>::zeros(ic, p_k);
                let mut akim = DMatrix::<f64>::zeros(ic, p_k);
                for i in 0..ic {
                    for q in 0..p_k {
                        let z = ak[(q, col0 + i)];
                        akre[(i, q)] = z.re;
                        akim[(i, q)] = z.im;
                    }
                }
                let cre = &akre * &gtabs[k];
                let cim = &akim * &gtabs[k];
                for i in 0..ic {
                    let img = &mut piece[i * l * l..(i + 1) * l * l];
                    for (p_idx, &(pix, rid, _)) in grid.pixels.iter().enumerate() {
                        let (phr, phi_) = phases[k][p_idx];
                        img[pix] += 2.0 * (phr * cre[(i, rid)] - phi_ * cim[(i, rid)]);
                    }
                }
            }
            piece
        })
        .collect();
    for (chunk_idx, &col0) in chunk_starts.iter().enumerate() {
        let piece = &pieces[chunk_idx];
        let dst = &mut out.pixels_mut()[col0 * l * l..col0 * l * l + piece.len()];
        dst.copy_from_slice(piece);
    }
    Ok(out)
}

/// Smallest integer radius R whose r-weighted cumulative rotationally
/// averaged sample mean reaches `fraction` of the total.
pub fn estimate_support_radius(stack: &ImageStack, fraction: f64) -> Result<usize> {
    if stack.n == 0 {
        return Err(Error::InvalidArgument("empty stack".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let l = stack.l;
    let half = (l / 2) as f64;
    let mean = stack.mean_image();
    let n_bins = l / 2 + 1;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for ix in 0..l {
        let x = ix as f64 - half;
        for iy in 0..l {
            let y = iy as f64 - half;
            let bin = x.hypot(y).round() as usize;
            if bin < n_bins {
                sums[bin] += mean[ix * l + iy];
                counts[bin] += 1;
            }
        }
    }
    let mut total = 0.0;
    let mut mass = vec![0.0; n_bins];
    for b in 0..n_bins {
        if counts[b] > 0 {
            let avg = (sums[b] / counts[b] as f64).max(0.0);
            mass[b] = avg * b as f64;
            total += mass[b];
        }
    }
    if total <= 0.0 {
        return Err(Error::DegenerateInput(
            "sample mean has no positive radial mass".into(),
        ));
    }
    let mut cum = 0.0;
    for (b, m) in mass.iter().enumerate() {
        cum += m;
        if cum >= fraction * total {
            return Ok(b.max(1).min(l / 2));
        }
    }
    Ok(l / 2)
}

/// Result of the band-limit estimate: the chosen band limit, and whether the
/// whitened spectrum was statistically indistinguishable from the flat noise
/// floor (in which case `band_limit` is the smallest admissible value).
#[derive(Debug, Clone, Copy)]
pub struct BandLimitEstimate {
    pub band_limit: f64,
    pub flat_spectrum: bool,
}

/// Band-limit estimation cap: only this many images feed the spectrum.
pub const BAND_LIMIT_MAX_IMAGES: usize = 512;

/// Estimate the band limit of a prewhitened stack from its mean radial power
/// spectrum. The spectrum is normalized per live pixel so a unit-variance
/// whitened noise floor sits at 1; the floor actually subtracted is the
/// leveled-off tail (at least 1). Bins whose excess is within 4 standard
/// errors of the floor are treated as noise. The band limit is the smallest
/// c whose cumulative excess (with the xi Jacobian) reaches `fraction` of
/// the total.
pub fn estimate_band_limit(stack: &ImageStack, fraction: f64) -> Result<BandLimitEstimate> {
    if stack.n == 0 {
        return Err(Error::InvalidArgument("empty stack".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let l = stack.l;
    let half = (l / 2) as f64;
    let n_use = stack.n.min(BAND_LIMIT_MAX_IMAGES);

    // live support: pixels touched by any of the images used
    let mut live = vec![false; l * l];
    for i in 0..n_use {
        for (lv, &v) in live.iter_mut().zip(stack.image(i)) {
            *lv = *lv || v != 0.0;
        }
    }
    let mut r_live = 0.0f64;
    let mut n_live = 0usize;
    for ix in 0..l {
        for iy in 0..l {
            if live[ix * l + iy] {
                n_live += 1;
                let r = (ix as f64 - half).hypot(iy as f64 - half);
                r_live = r_live.max(r);
            }
        }
    }
    if n_live == 0 {
        return Err(Error::DegenerateInput("stack is identically zero".into()));
    }
    let r_win = (r_live.ceil() as usize).clamp(2, l / 2);
    let w = 2 * r_win;
    let offset = l / 2 - r_win;

    // mean power over the window DFT, unitary per live pixel
    let mut power = vec![0.0; w * w];
    let mut ew = DMatrix::<Complex64>::zeros(w, w);
    for m in 0..w {
        for a in 0..w {
            let th = -2.0 * std::f64::consts::PI * (m * a) as f64 / w as f64;
            ew[(m, a)] = Complex64::new(th.cos(), th.sin());
        }
    }
    let mut win = DMatrix::<Complex64>::zeros(w, w);
    for i in 0..n_use {
        let img = stack.image(i);
        for a in 0..w {
            for b in 0..w {
                win[(a, b)] = Complex64::new(img[(a + offset) * l + (b + offset)], 0.0);
            }
        }
        let f = &ew * &win * ew.transpose();
        for (p, z) in power.iter_mut().zip(f.iter()) {
            *p += z.norm_sqr();
        }
    }
    let norm = 1.0 / (n_use as f64 * n_live as f64);
    for p in &mut power {
        *p *= norm;
    }

    // radial binning over [0, 0.5]
    let n_bins = w;
    let bw = 0.5 / n_bins as f64;
    let mut bin_sum = vec![0.0; n_bins];
    let mut bin_cnt = vec![0usize; n_bins];
    for m1 in 0..w {
        let f1 = if m1 <= w / 2 {
            m1 as f64 / w as f64
        } else {
            m1 as f64 / w as f64 - 1.0
        };
        for m2 in 0..w {
            let f2 = if m2 <= w / 2 {
                m2 as f64 / w as f64
            } else {
                m2 as f64 / w as f64 - 1.0
            };
            let fr = f1.hypot(f2);
            let bin = (fr / bw) as usize;
            if bin < n_bins {
                // column-major iteration order of DMatrix: index (a, b) at a + b*w
                bin_sum[bin] += power[m2 * w + m1];
                bin_cnt[bin] += 1;
            }
        }
    }

    // leveled-off floor from the top non-empty bins, at least the unit floor
    let filled: Vec<usize> = (0..n_bins).filter(|&b| bin_cnt[b] > 0).collect();
    let tail: Vec<f64> = filled
        .iter()
        .rev()
        .take(8)
        .map(|&b| bin_sum[b] / bin_cnt[b] as f64)
        .collect();
    let mut tail_sorted = tail.clone();
    tail_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let floor = tail_sorted
        .get(tail_sorted.len() / 2)
        .copied()
        .unwrap_or(1.0)
        .max(1.0);

    let mut excess = vec![0.0; n_bins];
    let mut total = 0.0;
    for &b in &filled {
        let mean_p = bin_sum[b] / bin_cnt[b] as f64;
        let se = (4.0 / (n_use as f64 * bin_cnt[b] as f64)).sqrt();
        let e = mean_p - floor;
        if e > 4.0 * se {
            let center = (b as f64 + 0.5) * bw;
            excess[b] = e * center;
            total += excess[b];
        }
    }
    // smallest admissible band limit: the second root of J_0 must fit
    let c_min = (5.520078110286311 / (2.0 * std::f64::consts::PI * r_win as f64)).min(0.5);
    if total <= 0.0 {
        return Ok(BandLimitEstimate {
            band_limit: c_min,
            flat_spectrum: true,
        });
    }
    let mut cum = 0.0;
    let mut c_hat = 0.5;
    for b in 0..n_bins {
        cum += excess[b];
        if cum >= fraction * total {
            c_hat = (b as f64 + 0.5) * bw;
            break;
        }
    }
    Ok(BandLimitEstimate {
        band_limit: c_hat.clamp(c_min, 0.5),
        flat_spectrum: false,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::basis::BasisParams;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk() -> FbBasis {
        FbBasis::build(BasisParams::new(0.15, 14, 32).unwrap()).unwrap()
    }

    /// Random coefficients with a mild spectral decay; the retained radial
    /// indices at the aliasing boundary carry the largest basis-truncation
    /// error, so flat spectra overstate round-trip error relative to any
    /// band-concentrated image ensemble.
    pub(crate) fn random_coeffs(basis: &FbBasis, n: usize, seed: u64) -> CoeffBlocks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let thr = 2.0 * std::f64::consts::PI
            * basis.params.band_limit
            * basis.params.support_radius as f64;
        let mut cb = CoeffBlocks::zeros_like(basis, n);
        for k in 0..=basis.k_max {
            for q in 0..basis.p(k) {
                let damp = (-2.0 * (basis.roots[k][q] / thr).powi(2)).exp();
                for i in 0..n {
                    let re = damp * rng.gen_range(-1.0..1.0);
                    let im = if k == 0 {
                        0.0
                    } else {
                        damp * rng.gen_range(-1.0..1.0)
                    };
                    cb.blocks[k][(q, i)] = Complex64::new(re, im);
                }
            }
        }
        cb
    }

    /// Literal double-loop evaluation of the polar Fourier sum.
    fn brute_force_sample(image: &[f64], l: usize, r_sup: usize, xi: f64, theta: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let half = l / 2;
        for i1 in -(r_sup as i64)..r_sup as i64 {
            for i2 in -(r_sup as i64)..r_sup as i64 {
                let v = image[((i1 + half as i64) as usize) * l + (i2 + half as i64) as usize];
                let ph = -2.0
                    * std::f64::consts::PI
                    * xi
                    * (theta.cos() * i1 as f64 + theta.sin() * i2 as f64);
                acc += Complex64::new(ph.cos(), ph.sin()) * v;
            }
        }
        acc / (2.0 * r_sup as f64)
    }

    #[test]
    fn zero_image_gives_zero_grid() {
        let b = desk();
        let img = vec![0.0; 32 * 32];
        let grid = polar_fourier_samples(&img, &b).unwrap();
        assert!(grid.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn delta_at_center_gives_constant() {
        let b = desk();
        let l = 32;
        let mut img = vec![0.0; l * l];
        img[(l / 2) * l + l / 2] = 1.0; // coordinate (0, 0)
        let grid = polar_fourier_samples(&img, &b).unwrap();
        let want = 1.0 / (2.0 * 14.0);
        for z in grid.iter() {
            assert!((z.re - want).abs() < 1e-14 && z.im.abs() < 1e-14);
        }
    }

    #[test]
    fn matches_brute_force_double_loop() {
        // bigger-than-support 8x8 content inside a desk-sized frame
        let b = FbBasis::build(BasisParams::new(0.4, 4, 8).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grid = polar_fourier_samples(&img, &b).unwrap();
        for (j, &xi) in b.fourier_nodes.nodes.iter().enumerate() {
            for li in 0..b.n_theta {
                let theta = 2.0 * std::f64::consts::PI * li as f64 / b.n_theta as f64;
                let want = brute_force_sample(&img, 8, 4, xi, theta);
                let got = grid[(j, li)];
                assert!((got - want).norm() <= 1e-12, "node ({j}, {li})");
            }
        }
    }

    #[test]
    fn expand_uses_same_samples_as_single_image_path() {
        let b = desk();
        let cb = random_coeffs(&b, 2, 3);
        let stack = reconstruct(&cb, &b).unwrap();
        let grid = polar_fourier_samples(stack.image(1), &b).unwrap();
        // reduce the grid exactly as expand does and compare coefficients
        let coeffs = expand(&stack, &b).unwrap();
        let k = 1usize;
        let n_theta = b.n_theta;
        let mut a_direct = Complex64::new(0.0, 0.0);
        let q = 0usize;
        for (j, &xi) in b.fourier_nodes.nodes.iter().enumerate() {
            let mut fk = Complex64::new(0.0, 0.0);
            for li in 0..n_theta {
                let th = 2.0 * std::f64::consts::PI * (k * li) as f64 / n_theta as f64;
                fk += grid[(j, li)] * Complex64::new(th.cos(), -th.sin());
            }
            fk *= 2.0 * std::f64::consts::PI / n_theta as f64;
            a_direct += b.fourier_table(k)[(q, j)] * fk * xi * b.fourier_nodes.weights[j] * 28.0;
        }
        assert!((coeffs.blocks[k][(q, 1)] - a_direct).norm() < 1e-12);
    }

    #[test]
    fn zero_stack_expands_to_zero_blocks() {
        let b = desk();
        let stack = ImageStack::zeros(3, 32, StackKind::Intensity);
        let cb = expand(&stack, &b).unwrap();
        assert!(cb.blocks.iter().all(|m| m.iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn single_basis_function_coefficient_recovery() {
        // larger c R so the basis-truncation tail is small
        let b = FbBasis::build(BasisParams::new(0.3, 30, 64).unwrap()).unwrap();
        let (k0, q0) = (2usize, 0usize);
        let mut cb = CoeffBlocks::zeros_like(&b, 1);
        cb.blocks[k0][(q0, 0)] = Complex64::new(1.0, 0.0);
        let stack = reconstruct(&cb, &b).unwrap();
        let rec = expand(&stack, &b).unwrap();
        for k in 0..=b.k_max {
            for q in 0..b.p(k) {
                let got = rec.blocks[k][(q, 0)];
                if k == k0 && q == q0 {
                    assert!((got - Complex64::new(1.0, 0.0)).norm() <= 1e-3);
                } else {
                    assert!(got.norm() <= 1e-3, "leakage at ({k},{q}) = {got}");
                }
            }
        }
    }

    #[test]
    fn round_trip_on_basis_span() {
        let b = desk();
        let cb = random_coeffs(&b, 10, 11);
        let stack = reconstruct(&cb, &b).unwrap();
        let back = reconstruct(&expand(&stack, &b).unwrap(), &b).unwrap();
        let num: f64 = stack
            .pixels()
            .iter()
            .zip(back.pixels())
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt();
        let den: f64 = stack.pixels().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den <= 1e-2, "round trip rel error {}", num / den);
    }

    #[test]
    fn zero_coefficients_reconstruct_to_zero() {
        let b = desk();
        let cb = CoeffBlocks::zeros_like(&b, 2);
        let stack = reconstruct(&cb, &b).unwrap();
        assert!(stack.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_frequency_reconstruction_is_circularly_symmetric() {
        let b = desk();
        let mut cb = CoeffBlocks::zeros_like(&b, 1);
        cb.blocks[0][(1, 0)] = Complex64::new(1.0, 0.0);
        let stack = reconstruct(&cb, &b).unwrap();
        let l = 32;
        let img = stack.image(0);
        // pixels at equal radius must agree
        let v1 = img[(l / 2 + 3) * l + l / 2]; // (3, 0)
        let v2 = img[(l / 2) * l + l / 2 + 3]; // (0, 3)
        let v3 = img[(l / 2 - 3) * l + l / 2]; // (-3, 0)
        assert!((v1 - v2).abs() < 1e-10 && (v1 - v3).abs() < 1e-10);
        // outside the disk everything is zero
        assert_eq!(img[0], 0.0);
    }

    #[test]
    fn expansion_is_linear() {
        let b = desk();
        let ca = random_coeffs(&b, 1, 21);
        let cbb = random_coeffs(&b, 1, 22);
        let sa = reconstruct(&ca, &b).unwrap();
        let sb = reconstruct(&cbb, &b).unwrap();
        let mut sum = sa.clone();
        for (o, &v) in sum.pixels_mut().iter_mut().zip(sb.pixels()) {
            *o = 2.0 * *o + 3.0 * v;
        }
        let ea = expand(&sa, &b).unwrap();
        let eb = expand(&sb, &b).unwrap();
        let es = expand(&sum, &b).unwrap();
        for k in 0..=b.k_max {
            for q in 0..b.p(k) {
                let want = ea.blocks[k][(q, 0)] * 2.0 + eb.blocks[k][(q, 0)] * 3.0;
                assert!((es.blocks[k][(q, 0)] - want).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn near_unitarity_on_basis_span() {
        let b = desk();
        let cb = random_coeffs(&b, 5, 31);
        let stack = reconstruct(&cb, &b).unwrap();
        let coeffs = expand(&stack, &b).unwrap();
        let ratio = coeffs.norm_sq() / stack.pixels().iter().map(|v| v * v).sum::<f64>();
        assert!(
            (ratio - 1.0).abs() <= 1e-2,
            "norm ratio {ratio} deviates from 1"
        );
    }

    #[test]
    fn rotation_phases_coefficients() {
        // smooth band limit so bilinear interpolation error stays small
        let b = FbBasis::build(BasisParams::new(0.05, 28, 64).unwrap()).unwrap();
        let cb = random_coeffs(&b, 1, 41);
        let stack = reconstruct(&cb, &b).unwrap();
        let a1 = expand(&stack, &b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let alpha = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let rot = crate::image::rotate_bilinear(stack.image(0), 64, alpha);
            let rs = ImageStack::from_pixels(1, 64, StackKind::Intensity, rot).unwrap();
            let a2 = expand(&rs, &b).unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..=b.k_max {
                let ph = Complex64::new(0.0, -(k as f64) * alpha).exp();
                for q in 0..b.p(k) {
                    num += (a2.blocks[k][(q, 0)] - a1.blocks[k][(q, 0)] * ph).norm_sqr();
                    den += a1.blocks[k][(q, 0)].norm_sqr();
                }
            }
            assert!(
                num.sqrt() <= 1e-2 * den.sqrt(),
                "rotation equivariance error {}",
                num.sqrt() / den.sqrt()
            );
        }
    }

    #[test]
    fn reflection_conjugates_coefficients() {
        let b = desk();
        let cb = random_coeffs(&b, 1, 51);
        let stack = reconstruct(&cb, &b).unwrap();
        let a1 = expand(&stack, &b).unwrap();
        let refl = crate::image::reflect_y(stack.image(0), 32);
        let rs = ImageStack::from_pixels(1, 32, StackKind::Intensity, refl).unwrap();
        let a2 = expand(&rs, &b).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..=b.k_max {
            for q in 0..b.p(k) {
                num += (a2.blocks[k][(q, 0)] - a1.blocks[k][(q, 0)].conj()).norm_sqr();
                den += a1.blocks[k][(q, 0)].norm_sqr();
            }
        }
        assert!(num.sqrt() <= 1e-2 * den.sqrt());
    }

    #[test]
    fn support_radius_of_a_disk() {
        let l = 32;
        let mut img = vec![0.0; l * l];
        for ix in 0..l {
            for iy in 0..l {
                let r = ((ix as f64 - 16.0).powi(2) + (iy as f64 - 16.0).powi(2)).sqrt();
                if r <= 10.0 {
                    img[ix * l + iy] = 1.0;
                }
            }
        }
        let stack = ImageStack::from_pixels(1, l, StackKind::Intensity, img).unwrap();
        assert_eq!(estimate_support_radius(&stack, 0.999).unwrap(), 10);
    }

    #[test]
    fn support_radius_two_rings_matches_cumulative_oracle() {
        let l = 32;
        let mut img = vec![0.0; l * l];
        for ix in 0..l {
            for iy in 0..l {
                let r = ((ix as f64 - 16.0).powi(2) + (iy as f64 - 16.0).powi(2)).sqrt();
                if (2.0..3.0).contains(&r) || (11.0..12.5).contains(&r) {
                    img[ix * l + iy] = 1.0;
                }
            }
        }
        let stack = ImageStack::from_pixels(1, l, StackKind::Intensity, img.clone()).unwrap();
        let got = estimate_support_radius(&stack, 0.999).unwrap();
        // independent cumulative oracle over rounded radial bins
        let mut mass = vec![0.0; 17];
        let mut cnt = vec![0usize; 17];
        for ix in 0..l {
            for iy in 0..l {
                let r = ((ix as f64 - 16.0).powi(2) + (iy as f64 - 16.0).powi(2)).sqrt();
                let b = r.round() as usize;
                if b < 17 {
                    mass[b] += img[ix * l + iy];
                    cnt[b] += 1;
                }
            }
        }
        let m: Vec<f64> = (0..17)
            .map(|b| {
                if cnt[b] > 0 {
                    (mass[b] / cnt[b] as f64) * b as f64
                } else {
                    0.0
                }
            })
            .collect();
        let tot: f64 = m.iter().sum();
        let mut cum = 0.0;
        let mut want = 16;
        for (b, v) in m.iter().enumerate() {
            cum += v;
            if cum >= 0.999 * tot {
                want = b;
                break;
            }
        }
        assert_eq!(got, want);
        assert_eq!(got, 12, "outer ring radius");
    }

    #[test]
    fn support_radius_rejects_zero_mean() {
        let stack = ImageStack::zeros(2, 16, StackKind::Counts);
        assert!(matches!(
            estimate_support_radius(&stack, 0.999),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn band_limit_flat_for_pure_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let l = 32;
        let n = 300;
        let mut stack = ImageStack::zeros(n, l, StackKind::Intensity);
        for v in stack.pixels_mut() {
            *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let est = estimate_band_limit(&stack, 0.999).unwrap();
        assert!(est.flat_spectrum, "pure noise must raise the flat flag");
    }

    #[test]
    fn band_limit_recovers_synthetic_band() {
        // band-limited signal below xi = 0.1 plus unit noise
        let b = FbBasis::build(BasisParams::new(0.1, 14, 32).unwrap()).unwrap();
        let n = 400;
        let cb = random_coeffs(&b, n, 99);
        let mut stack = reconstruct(&cb, &b).unwrap();
        // scale signal well above the noise floor
        for v in stack.pixels_mut() {
            *v *= 10.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for v in stack.pixels_mut() {
            *v += rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let est = estimate_band_limit(&stack, 0.999).unwrap();
        assert!(!est.flat_spectrum);
        assert!(
            (0.08..=0.12).contains(&est.band_limit),
            "estimated c = {}",
            est.band_limit
        );
    }
}
