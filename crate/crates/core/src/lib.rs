//! Online Bayesian change-point detection for sequences summarised by discrete
//! latent-class posteriors.
//!
//! Each step supplies a posterior `p(z_t | x_t)` over `K` classes. It is turned
//! into a pseudo-observation, either the MAP class or a count vector of `S`
//! draws, and fed to a run-length recursion whose per-hypothesis model is a
//! Dirichlet–multinomial. The MAP run length is then thresholded to produce
//! change-point detections.
//!
//! The numeric core ([`dirichlet`], [`sampler`], [`engine`]) is generic over
//! the scalar type through [`Scalar`]. The aliases below fix it to `f64`,
//! which is what the rest of the crate (and the CLI) uses.

pub mod detector;
pub mod dirichlet;
pub mod engine;
mod error;
pub mod metrics;
pub mod provider;
pub mod sampler;
mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::{log_sum_exp, Scalar};

pub use dirichlet::CountVector;
pub use metrics::{DetectionEvent, EvalReport};
pub use sampler::SeededRng;
pub use synthetic::{GroundTruth, SyntheticConfig};

/// Dirichlet concentration vector in double precision.
pub type DirichletParams = dirichlet::DirichletParams<f64>;
/// Latent-class posterior in double precision.
pub type CategoricalPosterior = sampler::CategoricalPosterior<f64>;
/// Constant hazard in double precision.
pub type Hazard = engine::Hazard<f64>;
/// Run-length recursion state in double precision.
pub type RunLengthState = engine::RunLengthState<f64>;
/// Normalised run-length posterior in double precision.
pub type RunLengthPosterior = engine::RunLengthPosterior<f64>;

/// Single-precision variants, mainly useful for memory-bound streams.
pub type DirichletParams32 = dirichlet::DirichletParams<f32>;
pub type CategoricalPosterior32 = sampler::CategoricalPosterior<f32>;
pub type RunLengthState32 = engine::RunLengthState<f32>;
