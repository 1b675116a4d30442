//! Steerable ePCA: rotationally invariant covariance estimation and
//! Wiener-type denoising for photon-limited (Poisson count) image stacks.
//!
//! The estimator expands images in a truncated Fourier-Bessel basis, where
//! in-plane rotation acts as a per-frequency phase. Poisson heteroscedastic
//! noise is handled by homogenization against the rotationally invariant
//! sample mean; per-frequency covariance blocks are cleaned by
//! Marchenko-Pastur eigenvalue shrinkage, recolored back to the original
//! variance structure, and rescaled to undo eigenvector-inconsistency bias.
//! The result is a rotationally invariant covariance kernel on the pixel
//! grid and an affine coefficient-domain denoiser.
//!
//! Entry points:
//! - [`model::estimate`] runs the full pipeline on a count stack.
//! - [`denoise::denoise_stack`] applies a trained model.
//! - [`synth::GroundTruthModel`] generates Poisson data with exactly known
//!   rotationally invariant covariance.
//! - [`eval::run_comparison`] reproduces the method comparisons on synthetic
//!   data.
//!
//! The `sepca` binary wires these into `generate`, `estimate`, `denoise`,
//! `evaluate` and `bench` subcommands; the `examples/` directory holds one
//! runnable example per capability.

pub mod baseline;
pub mod basis;
pub mod bessel;
pub mod covariance;
pub mod denoise;
pub mod eigh;
pub mod error;
pub mod eval;
pub mod image;
pub mod kernel;
pub mod mean;
pub mod model;
pub mod rank;
pub mod recolor;
pub mod shrink;
pub mod synth;
pub mod transform;

pub use basis::{BasisParams, FbBasis};
pub use error::{Error, Result};
pub use image::{ImageStack, StackKind};
pub use model::{estimate, EstimateOptions, Param, SepcaModel};
pub use synth::{poisson_observe, GroundTruthModel};
pub use transform::{expand, reconstruct, CoeffBlocks};
