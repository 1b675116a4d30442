//! Dense symmetric eigensolver: Householder tridiagonalization followed by
//! implicit-shift QL iteration.
//!
//! nalgebra's `SymmetricEigen` intermittently returns NaN eigenvalues on
//! large rank-deficient matrices (heavily clustered zero eigenvalues), which
//! the pixel-space covariance baselines hit constantly, so the crate carries
//! its own solver. Values-only mode skips the eigenvector accumulation and
//! is several times faster.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues (descending) and, optionally, the matching orthonormal
/// eigenvector columns of a real symmetric matrix.
pub struct SymEigh {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

/// Householder reduction to tridiagonal form (d: diagonal, e: off-diagonal);
/// when `accumulate` is set, `a` is overwritten with the orthogonal Q.
fn tridiagonalize(a: &mut DMatrix<f64>, accumulate: bool) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i;
        let mut h = 0.0;
        if l > 1 {
            let scale: f64 = (0..l).map(|k| a[(i, k)].abs()).sum();
            if scale == 0.0 {
                e[i] = a[(i, l - 1)];
            } else {
                for k in 0..l {
                    a[(i, k)] /= scale;
                    h += a[(i, k)] * a[(i, k)];
                }
                let mut f = a[(i, l - 1)];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[(i, l - 1)] = f - g;
                f = 0.0;
                for j in 0..l {
                    if accumulate {
                        a[(j, i)] = a[(i, j)] / h;
                    }
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[(j, k)] * a[(i, k)];
                    }
                    for k in (j + 1)..l {
                        g += a[(k, j)] * a[(i, k)];
                    }
                    e[j] = g / h;
                    f += e[j] * a[(i, j)];
                }
                let hh = f / (h + h);
                for j in 0..l {
                    let f = a[(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[(j, k)] -= f * e[k] + g * a[(i, k)];
                    }
                }
            }
        } else {
            e[i] = a[(i, l - 1)];
        }
        d[i] = h;
    }
    if accumulate {
        d[0] = 0.0;
    }
    e[0] = 0.0;
    for i in 0..n {
        if accumulate {
            if d[i] != 0.0 {
                for j in 0..i {
                    let mut g = 0.0;
                    for k in 0..i {
                        g += a[(i, k)] * a[(k, j)];
                    }
                    for k in 0..i {
                        a[(k, j)] -= g * a[(k, i)];
                    }
                }
            }
            d[i] = a[(i, i)];
            a[(i, i)] = 1.0;
            for j in 0..i {
                a[(j, i)] = 0.0;
                a[(i, j)] = 0.0;
            }
        } else {
            d[i] = a[(i, i)];
        }
    }
    (d, e)
}

/// Implicit-shift QL on a tridiagonal (d, e); rotations go into `z` when
/// present.
fn tql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut DMatrix<f64>>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            // find a negligible off-diagonal element
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd + f64::MIN_POSITIVE {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::Numerical(
                    "symmetric QL iteration failed to converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let sgn = if g >= 0.0 { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + sgn);
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            let mut i = m;
            let mut underflowed = false;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflowed = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(zm) = z.as_deref_mut() {
                    let nrows = zm.nrows();
                    for k in 0..nrows {
                        f = zm[(k, i + 1)];
                        zm[(k, i + 1)] = s * zm[(k, i)] + c * f;
                        zm[(k, i)] = c * zm[(k, i)] - s * f;
                    }
                }
            }
            if underflowed {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Eigendecomposition of a real symmetric matrix; set `want_vectors` for the
/// orthonormal eigenvectors. Input asymmetry is averaged away.
pub fn sym_eigen(m: &DMatrix<f64>, want_vectors: bool) -> Result<SymEigh> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidArgument("matrix not square".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entries".into()));
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    let (mut d, mut e) = tridiagonalize(&mut a, want_vectors);
    if want_vectors {
        tql(&mut d, &mut e, Some(&mut a))?;
    } else {
        tql(&mut d, &mut e, None)?;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| d[y].partial_cmp(&d[x]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let vectors = if want_vectors {
        let mut q = DMatrix::<f64>::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            for r in 0..n {
                q[(r, col)] = a[(r, i)];
            }
        }
        Some(q)
    } else {
        None
    };
    Ok(SymEigh { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reassemble(vals: &[f64], vecs: &DMatrix<f64>) -> DMatrix<f64> {
        let n = vals.len();
        let mut out = DMatrix::<f64>::zeros(n, n);
        for (i, &l) in vals.iter().enumerate() {
            let v = vecs.column(i);
            for a in 0..n {
                for b in 0..n {
                    out[(a, b)] += l * v[a] * v[b];
                }
            }
        }
        out
    }

    #[test]
    fn random_symmetric_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1usize, 2, 3, 7, 20, 60] {
            let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let s = (&a + a.transpose()) * 0.5;
            let eig = sym_eigen(&s, true).unwrap();
            let rec = reassemble(&eig.values, eig.vectors.as_ref().unwrap());
            let err = (&rec - &s).norm();
            assert!(err <= 1e-10 * s.norm().max(1.0), "n={n} err {err}");
            for w in eig.values.windows(2) {
                assert!(w[0] >= w[1]);
            }
            // orthogonality
            let q = eig.vectors.unwrap();
            let qq = q.transpose() * &q;
            let id_err = (&qq - DMatrix::<f64>::identity(n, n)).norm();
            assert!(id_err <= 1e-10, "orthogonality {id_err}");
        }
    }

    #[test]
    fn values_only_matches_vectors_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40;
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let s = &a * a.transpose();
        let v1 = sym_eigen(&s, false).unwrap().values;
        let v2 = sym_eigen(&s, true).unwrap().values;
        for (a, b) in v1.iter().zip(&v2) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn rank_deficient_with_zero_rows_is_stable() {
        // the shape that breaks nalgebra: large Gram with many exact zeros
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, n) = (300, 50);
        let mut m = DMatrix::<f64>::zeros(p, n);
        for j in 0..n {
            for i in 0..p {
                // zero out two thirds of the rows entirely
                if i % 3 == 0 {
                    m[(i, j)] = rng.sample(rand_distr::StandardNormal);
                }
            }
        }
        let g = &m * m.transpose();
        let eig = sym_eigen(&g, true).unwrap();
        assert!(eig.values.iter().all(|v| v.is_finite()));
        let nonzero = eig.values.iter().filter(|&&v| v > 1e-9).count();
        assert!(nonzero <= n);
        let rec = reassemble(&eig.values, eig.vectors.as_ref().unwrap());
        assert!((&rec - &g).norm() <= 1e-8 * g.norm());
    }

    #[test]
    fn diagonal_matrix_is_immediate() {
        let d = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_vec(vec![
            3.0, -1.0, 2.0, 0.0,
        ]));
        let eig = sym_eigen(&d, true).unwrap();
        assert_eq!(eig.values, vec![3.0, 2.0, 0.0, -1.0]);
    }
}
