//! Spiked-model eigenvalue maps.
//!
//! For white noise of unit variance and aspect ratio gamma = p/n, a population
//! spike ell is visible in the sample spectrum only above the phase
//! transition ell > sqrt(gamma); the sample eigenvalue then concentrates at
//! the spike forward map. Inverting that map on eigenvalues above the
//! Marchenko-Pastur edge (1 + sqrt(gamma))^2 gives the shrinker, and the
//! cosine forward map gives the asymptotic squared correlation between the
//! sample and population eigenvectors.

/// Sample eigenvalue an above-transition spike `ell` converges to:
/// (1 + ell)(1 + gamma/ell) for ell > sqrt(gamma), else the bulk edge.
pub fn spike_forward(ell: f64, gamma: f64) -> f64 {
    debug_assert!(ell >= 0.0 && gamma > 0.0);
    if ell > gamma.sqrt() {
        (1.0 + ell) * (1.0 + gamma / ell)
    } else {
        let s = gamma.sqrt();
        (1.0 + s) * (1.0 + s)
    }
}

/// Inverse of the spike forward map above the Marchenko-Pastur edge; zero at
/// or below the edge.
pub fn shrink_eigenvalue(lambda: f64, gamma: f64) -> f64 {
    debug_assert!(gamma > 0.0);
    let edge = {
        let s = gamma.sqrt();
        (1.0 + s) * (1.0 + s)
    };
    if lambda > edge {
        let b = lambda - 1.0 - gamma;
        0.5 * (b + (b * b - 4.0 * gamma).max(0.0).sqrt())
    } else {
        0.0
    }
}

/// Asymptotic squared cosine between sample and population eigenvectors:
/// (1 - gamma/ell^2) / (1 + gamma/ell) above the transition, else 0.
pub fn cosine_sq(ell: f64, gamma: f64) -> f64 {
    debug_assert!(ell >= 0.0 && gamma > 0.0);
    if ell > gamma.sqrt() {
        (1.0 - gamma / (ell * ell)) / (1.0 + gamma / ell)
    } else {
        0.0
    }
}
