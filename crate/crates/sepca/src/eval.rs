//! Error metrics and the method-comparison harness.
//!
//! `run_comparison` draws shared input stacks per sample size and runs each
//! requested method on the same data, reporting covariance errors against
//! the known ground truth, denoising MSE, estimated ranks and wall time.
//! Rows go to CSV (`method,n,seed,op_err,fro_err,mse,rank_total,wall_ms`),
//! aggregates to JSON.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baseline::{epca_baseline, pca_baseline, spca_baseline, spca_denoise};
use crate::denoise::{denoise_stack, eblp_denoise_cartesian, pca_project_denoise};
use crate::error::{Error, Result};
use crate::image::ImageStack;
use crate::kernel::covariance_kernel_grid;
use crate::model::{estimate, EstimateOptions, Param};
use crate::synth::{poisson_observe, GroundTruthModel};

/// Operator and Frobenius norms of (estimate - truth).
pub fn covariance_error(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<(f64, f64)> {
    if estimate.shape() != truth.shape() {
        return Err(Error::InvalidArgument(
            "covariance shapes do not match".into(),
        ));
    }
    let diff = estimate - truth;
    let fro = diff.norm();
    // symmetric difference: spectral norm is the largest |eigenvalue|
    let sym = (&diff + diff.transpose()) * 0.5;
    let eig = crate::eigh::sym_eigen(&sym, false)?;
    let op = eig.values.iter().map(|l| l.abs()).fold(0.0f64, f64::max);
    Ok((op, fro))
}

/// MSE = (p n)^{-1} sum_i |Xhat_i - X_i|^2 with p = L^2 pixels.
pub fn mse(denoised: &ImageStack, clean: &ImageStack) -> Result<f64> {
    if denoised.n != clean.n || denoised.l != clean.l {
        return Err(Error::InvalidArgument("stack shapes do not match".into()));
    }
    let total: f64 = denoised
        .pixels()
        .iter()
        .zip(clean.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(total / (denoised.n as f64 * (denoised.l * denoised.l) as f64))
}

/// Methods the harness knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Spca,
    Epca,
    Sepca,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pca" => Ok(Self::Pca),
            "spca" => Ok(Self::Spca),
            "epca" => Ok(Self::Epca),
            "sepca" => Ok(Self::Sepca),
            other => Err(Error::InvalidArgument(format!("unknown method {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Pca => "pca",
            Self::Spca => "spca",
            Self::Epca => "epca",
            Self::Sepca => "sepca",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonConfig {
    pub methods: Vec<Method>,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Evaluate covariance errors (costs a dense L^2 x L^2 truth kernel).
    pub covariance_errors: bool,
}

/// One (method, n, seed) measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub n: usize,
    pub seed: u64,
    pub op_err: f64,
    pub fro_err: f64,
    pub mse: f64,
    pub rank_total: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub n: usize,
    pub median_mse: f64,
    pub mse_range: (f64, f64),
    pub median_fro_err: f64,
    pub fro_err_range: (f64, f64),
    pub median_rank: f64,
}

/// Full comparison output: per-cell rows plus per-(method, n) aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub rows: Vec<ReportRow>,
    pub summary: Vec<MethodSummary>,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Run every (method, n, seed) cell; methods share the stacks drawn per
/// (n, seed).
pub fn run_comparison(
    model: &GroundTruthModel,
    config: &ComparisonConfig,
) -> Result<PipelineReport> {
    let truth = if config.covariance_errors {
        Some(model.true_covariance_grid()?)
    } else {
        None
    };
    let opts = EstimateOptions {
        support_radius: Param::Fixed(model.basis.params.support_radius),
        band_limit: Param::Fixed(model.basis.params.band_limit),
        include_reflections: true,
    };
    let mut rows = Vec::new();
    for &n in &config.n_grid {
        for &seed in &config.seeds {
            let clean = model.draw_clean_stack(n, seed)?;
            let counts = poisson_observe(&clean, seed ^ 0x7061_7273)?;
            for &method in &config.methods {
                let t0 = Instant::now();
                let (cov_est, denoised, rank_total): (Option<DMatrix<f64>>, ImageStack, usize) =
                    match method {
                        Method::Sepca => {
                            let m = estimate(&counts, &opts)?;
                            let cov = if truth.is_some() {
                                Some(covariance_kernel_grid(
                                    &m.scaled.as_block_covariance()?,
                                    &m.basis,
                                )?)
                            } else {
                                None
                            };
                            let den = denoise_stack(&counts, &m)?;
                            (cov, den, m.total_rank())
                        }
                        Method::Epca => {
                            let base = epca_baseline(&counts, seed ^ 0xe9ca)?;
                            let den = eblp_denoise_cartesian(
                                &counts,
                                &base.covariance,
                                &base.mean,
                                0.1,
                            )?;
                            let cov = truth.as_ref().map(|_| base.covariance.clone());
                            (cov, den, base.rank)
                        }
                        Method::Pca => {
                            let base = pca_baseline(&counts, seed ^ 0x9ca)?;
                            let den = pca_project_denoise(&counts, base.rank)?;
                            let cov = truth.as_ref().map(|_| base.covariance.clone());
                            (cov, den, base.rank)
                        }
                        Method::Spca => {
                            let base = spca_baseline(&counts, &model.basis)?;
                            let den = spca_denoise(&base, &model.basis)?;
                            let cov = if truth.is_some() {
                                let bc = crate::covariance::BlockCovariance::from_blocks(
                                    base.blocks.clone(),
                                    base.cov.gammas.clone(),
                                    n,
                                )?;
                                Some(covariance_kernel_grid(&bc, &model.basis)?)
                            } else {
                                None
                            };
                            (cov, den, base.rank)
                        }
                    };
                let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
                let (op_err, fro_err) = match (&truth, &cov_est) {
                    (Some(t), Some(c)) => covariance_error(c, t)?,
                    _ => (f64::NAN, f64::NAN),
                };
                rows.push(ReportRow {
                    method: method.name().into(),
                    n,
                    seed,
                    op_err,
                    fro_err,
                    mse: mse(&denoised, &clean)?,
                    rank_total,
                    wall_ms,
                });
            }
        }
    }
    // aggregates
    let mut summary = Vec::new();
    for &method in &config.methods {
        for &n in &config.n_grid {
            let cell: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| r.method == method.name() && r.n == n)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let mut mses: Vec<f64> = cell.iter().map(|r| r.mse).collect();
            let mut fros: Vec<f64> = cell.iter().map(|r| r.fro_err).collect();
            let mut ranks: Vec<f64> = cell.iter().map(|r| r.rank_total as f64).collect();
            let mse_range = (
                mses.iter().cloned().fold(f64::INFINITY, f64::min),
                mses.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            );
            let fro_range = (
                fros.iter().cloned().fold(f64::INFINITY, f64::min),
                fros.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            );
            summary.push(MethodSummary {
                method: method.name().into(),
                n,
                median_mse: median(&mut mses),
                mse_range,
                median_fro_err: median(&mut fros),
                fro_err_range: fro_range,
                median_rank: median(&mut ranks),
            });
        }
    }
    Ok(PipelineReport { rows, summary })
}

impl PipelineReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("method,n,seed,op_err,fro_err,mse,rank_total,wall_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method, r.n, r.seed, r.op_err, r.fro_err, r.mse, r.rank_total, r.wall_ms
            ));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::StackKind;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn covariance_error_trivial_cases() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let (op, fro) = covariance_error(&a, &a).unwrap();
        assert_eq!((op, fro), (0.0, 0.0));
        let z = DMatrix::<f64>::zeros(4, 4);
        let i4 = DMatrix::<f64>::identity(4, 4);
        let (op, fro) = covariance_error(&i4, &z).unwrap();
        assert!((op - 1.0).abs() <= 1e-15 && (fro - 2.0).abs() <= 1e-15);
    }

    #[test]
    fn covariance_error_matches_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::<f64>::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let b = DMatrix::<f64>::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let sa = &a + a.transpose();
        let sb = &b + b.transpose();
        let (op, fro) = covariance_error(&sa, &sb).unwrap();
        let diff = &sa - &sb;
        let svd = diff.clone().svd(false, false);
        let want_op = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        assert!((op - want_op).abs() <= 1e-12);
        assert!((fro - diff.norm()).abs() <= 1e-12);
    }

    #[test]
    fn mse_examples() {
        let mut a = ImageStack::zeros(2, 4, StackKind::Intensity);
        let b = a.clone();
        assert_eq!(mse(&a, &b).unwrap(), 0.0);
        for v in a.pixels_mut() {
            *v += 0.5;
        }
        assert!((mse(&a, &b).unwrap() - 0.25).abs() <= 1e-15);
        // random pair vs a double loop
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut x = ImageStack::zeros(3, 4, StackKind::Intensity);
        let mut y = ImageStack::zeros(3, 4, StackKind::Intensity);
        for v in x.pixels_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in y.pixels_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut want = 0.0;
        for i in 0..3 {
            for p in 0..16 {
                let d = x.image(i)[p] - y.image(i)[p];
                want += d * d;
            }
        }
        want /= 48.0;
        assert!((mse(&x, &y).unwrap() - want).abs() <= 1e-14);
    }

    #[test]
    fn comparison_smoke_single_cell() {
        let model = crate::synth::GroundTruthModel::desk_preset(1).unwrap();
        let report = run_comparison(
            &model,
            &ComparisonConfig {
                methods: vec![Method::Sepca],
                n_grid: vec![60],
                seeds: vec![3],
                covariance_errors: false,
            },
        )
        .unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].method, "sepca");
        assert!(report.rows[0].mse.is_finite());
    }

    #[test]
    fn report_determinism() {
        let model = crate::synth::GroundTruthModel::desk_preset(1).unwrap();
        let cfg = ComparisonConfig {
            methods: vec![Method::Sepca],
            n_grid: vec![40],
            seeds: vec![5],
            covariance_errors: false,
        };
        let a = run_comparison(&model, &cfg).unwrap();
        let b = run_comparison(&model, &cfg).unwrap();
        assert_eq!(a.rows[0].mse.to_bits(), b.rows[0].mse.to_bits());
        assert_eq!(a.rows[0].rank_total, b.rows[0].rank_total);
    }
}
