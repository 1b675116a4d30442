//! Bessel functions of the first kind, their positive roots, and
//! Gauss-Legendre quadrature.
//!
//! These are the numerical substrate for the Fourier-Bessel basis: the basis
//! functions are `J_k(R_{k,q} xi / c)` where `R_{k,q}` is the q-th positive
//! root of `J_k`, and all radial integrals are evaluated with Gauss-Legendre
//! rules.
//!
//! `J_k(x)` is evaluated by the ascending power series for small arguments
//! and by three-term recurrences elsewhere: forward from `J_0, J_1` when
//! `x > k` (stable in the oscillatory regime), backward Miller recurrence
//! with sum normalization when `x <= k`. The two branches agree to ~1e-13
//! in their overlap band.

use crate::error::{Error, Result};

/// Largest order the evaluator is exercised/tested for; the sampling
/// criterion for images up to L = 512 stays well below this.
pub const MAX_ORDER: u32 = 1024;

const SERIES_CUTOFF: f64 = 12.0;
const ASYMPTOTIC_CUTOFF: f64 = 18.0;

/// J_0 and J_1 by ascending series, accurate for |x| <= ~18.
fn j01_series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    // J_0
    let mut term = 1.0;
    let mut sum0 = 1.0;
    for m in 1..=40u32 {
        term *= -q / ((m * m) as f64);
        sum0 += term;
        if term.abs() < 1e-18 * sum0.abs().max(1.0) {
            break;
        }
    }
    // J_1
    let mut term = 0.5 * x;
    let mut sum1 = term;
    for m in 1..=40u32 {
        term *= -q / ((m * (m + 1)) as f64);
        sum1 += term;
        if term.abs() < 1e-18 * sum1.abs().max(1.0) {
            break;
        }
    }
    (sum0, sum1)
}

/// J_0 and J_1 by the Hankel asymptotic expansion, accurate for x >= ~17.
fn j01_asymptotic(x: f64) -> (f64, f64) {
    // J_nu(x) ~ sqrt(2/(pi x)) [ P_nu(x) cos(chi) - Q_nu(x) sin(chi) ],
    // chi = x - (nu/2 + 1/4) pi. Terms of P/Q decrease until the optimal
    // truncation point; we stop as soon as they stop decreasing.
    fn pq(nu: f64, x: f64) -> (f64, f64) {
        let mu = 4.0 * nu * nu;
        let ix8 = 1.0 / (8.0 * x);
        let mut p = 1.0;
        let mut q = 0.0;
        let mut term = 1.0;
        let mut prev = f64::INFINITY;
        for m in 1..=30u32 {
            let k = (2 * m - 1) as f64;
            term *= (mu - (2.0 * k - 1.0).powi(2)) * ix8 / k;
            let t_q = term;
            term *= (mu - (2.0 * k + 1.0).powi(2)) * ix8 / (k + 1.0);
            let t_p = term;
            if m % 2 == 1 {
                q += t_q;
                p -= t_p;
            } else {
                q -= t_q;
                p += t_p;
            }
            let mag = t_p.abs().max(t_q.abs());
            if mag < 1e-17 || mag > prev {
                break;
            }
            prev = mag;
        }
        (p, q)
    }
    let amp = (2.0 / (std::f64::consts::PI * x)).sqrt();
    let (p0, q0) = pq(0.0, x);
    let chi0 = x - std::f64::consts::FRAC_PI_4;
    let (p1, q1) = pq(1.0, x);
    let chi1 = x - 3.0 * std::f64::consts::FRAC_PI_4;
    (
        amp * (p0 * chi0.cos() - q0 * chi0.sin()),
        amp * (p1 * chi1.cos() - q1 * chi1.sin()),
    )
}

fn j01(x: f64) -> (f64, f64) {
    if x < SERIES_CUTOFF {
        j01_series(x)
    } else if x < ASYMPTOTIC_CUTOFF {
        // neither the series (cancellation) nor the asymptotics (truncation)
        // reach 1e-13 here; the normalized backward recurrence does
        (miller(0, x), miller(1, x))
    } else {
        j01_asymptotic(x)
    }
}

/// Backward Miller recurrence: J_k(x) for 0 < x <= k, normalized with
/// J_0 + 2 sum_m J_{2m} = 1.
fn miller(order: u32, x: f64) -> f64 {
    let k = order as usize;
    let start = (k.max(x as usize)) + (2.0 * (x + 10.0).sqrt()) as usize + 18;
    let mut jp = 0.0_f64;
    let mut j = 1e-300_f64;
    let mut target = 0.0;
    let mut norm = 0.0;
    for m in (0..=start).rev() {
        let jm = (2.0 * (m as f64 + 1.0) / x) * j - jp;
        jp = j;
        j = jm;
        if m == k {
            target = j;
        }
        if m % 2 == 0 {
            norm += if m == 0 { j } else { 2.0 * j };
        }
        if j.abs() > 1e250 {
            jp /= 1e250;
            j /= 1e250;
            target /= 1e250;
            norm /= 1e250;
        }
    }
    target / norm
}

/// Bessel function of the first kind of integer order.
///
/// Accurate to better than 1e-12 absolute throughout the argument ranges
/// exercised by the sampling criterion.
pub fn bessel_j(order: u32, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bessel_j: non-finite argument {x}"
        )));
    }
    if x < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bessel_j: negative argument {x}"
        )));
    }
    if order > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "bessel_j: order {order} exceeds supported maximum {MAX_ORDER}"
        )));
    }
    if x == 0.0 {
        return Ok(if order == 0 { 1.0 } else { 0.0 });
    }
    let (j0, j1) = j01(x);
    Ok(match order {
        0 => j0,
        1 => j1,
        _ => {
            if x > order as f64 {
                // forward recurrence, stable for x > k
                let mut jm = j0;
                let mut j = j1;
                for m in 1..order {
                    let jn = (2.0 * m as f64 / x) * j - jm;
                    jm = j;
                    j = jn;
                }
                j
            } else {
                miller(order, x)
            }
        }
    })
}

/// All positive roots of `J_order` in `(0, upper_bound]`.
///
/// Sign-change scan with step pi/4 (roots are separated by at least ~pi in
/// the oscillatory regime), refined by bisection to 1e-12. Roots of `J_k`
/// all lie above `k`, so the scan starts there.
pub fn bessel_roots(order: u32, upper_bound: f64) -> Result<Vec<f64>> {
    if !upper_bound.is_finite() || upper_bound <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "bessel_roots: bad upper bound {upper_bound}"
        )));
    }
    let step = std::f64::consts::FRAC_PI_4;
    let mut roots = Vec::new();
    let mut x0 = if order == 0 { 1e-9 } else { order as f64 };
    let mut f0 = bessel_j(order, x0)?;
    while x0 < upper_bound {
        let x1 = (x0 + step).min(upper_bound);
        let f1 = bessel_j(order, x1)?;
        if f0 == 0.0 {
            // landed exactly on a root during the scan
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi) = (x0, x1);
            let mut flo = f0;
            while hi - lo > 1e-13 {
                let mid = 0.5 * (lo + hi);
                let fm = bessel_j(order, mid)?;
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                } else if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
        if x1 >= upper_bound {
            break;
        }
    }
    roots.retain(|&r| r <= upper_bound);
    Ok(roots)
}

/// Table of Bessel roots per order, capped by a common threshold.
#[derive(Debug, Clone)]
pub struct BesselRootTable {
    pub max_order: u32,
    pub threshold: f64,
    /// roots[k] holds the ascending positive roots of J_k up to `threshold`.
    pub roots: Vec<Vec<f64>>,
}

impl BesselRootTable {
    /// Roots of J_0..J_max_order up to `threshold`. Immutable once built.
    pub fn build(max_order: u32, threshold: f64) -> Result<Self> {
        let mut roots = Vec::with_capacity(max_order as usize + 1);
        for k in 0..=max_order {
            roots.push(bessel_roots(k, threshold)?);
        }
        Ok(Self {
            max_order,
            threshold,
            roots,
        })
    }
}

/// A quadrature rule on a real interval.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub interval: (f64, f64),
}

impl QuadratureRule {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss-Legendre rule with `n_points` nodes on `[a, b]`; exact for
/// polynomials of degree <= 2 n_points - 1.
pub fn gauss_legendre(n_points: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if n_points == 0 {
        return Err(Error::InvalidArgument(
            "gauss_legendre: need at least one node".into(),
        ));
    }
    if !(a < b) {
        return Err(Error::InvalidArgument(format!(
            "gauss_legendre: empty interval [{a}, {b}]"
        )));
    }
    let n = n_points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Newton iteration on P_n over the half interval; nodes are symmetric.
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence: (m+1) P_{m+1} = (2m+1) x P_m - m P_{m-1}
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 1..n {
                let p2 = ((2 * j + 1) as f64 * x * p1 - j as f64 * p0) / (j + 1) as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for i in 0..n {
        nodes[i] = mid + half * nodes[i];
        weights[i] *= half;
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        interval: (a, b),
    })
}
