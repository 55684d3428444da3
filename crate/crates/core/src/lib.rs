//! Dominant-feature identification for geostatistical point data.
//!
//! The pipeline reconstructs a latent Gaussian field from noisy observations
//! by conditional simulation, decomposes it into scale-dependent details with
//! a Matérn-correlation smoother, flags credibly positive or negative regions
//! per detail, estimates per-detail covariance parameters and linear driver
//! effects by maximum likelihood, and checks the result with spatial block
//! cross-validation.

pub mod attributes;
pub mod bessel;
pub mod covariance;
pub mod credibility;
pub mod dataio;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod optimize;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod scalespace;
pub mod simstudy;
pub mod validation;

pub use covariance::{DistanceMetric, Location, MaternParams};
pub use error::{Error, Result};
