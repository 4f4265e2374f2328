//! Mean estimators with sub-Gaussian deviation guarantees for heavy-tailed
//! multivariate data.
//!
//! Building blocks, from the bottom up:
//!
//! - [`scalar_mom`]: median and median-of-means for real samples.
//! - [`sphere_cover`]: gamma-covers of the unit sphere.
//! - [`spherical`]: directional median-of-means over a 1/2-cover and a
//!   feasible point of the resulting polytope.
//! - [`covariance`]: quadratic-form median-of-means and a PSD matrix
//!   consistent with it.
//! - [`splitter`]: data-driven orthogonal decomposition into nearly
//!   spherical subspaces.
//! - [`geomedian`]: Weiszfeld geometric median and the geometric
//!   median-of-means estimator.
//! - [`hybrid`]: the full estimator combining all of the above.
//! - [`distributions`]: seeded samplers with exact ground truth.
//! - [`harness`]: Monte Carlo experiments and CSV/JSON reports.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod covariance;
pub mod distributions;
pub mod error;
pub mod geomedian;
pub mod harness;
pub mod hybrid;
pub mod rng;
pub mod sample;
pub mod scalar_mom;
pub mod sphere_cover;
pub mod spherical;
pub mod splitter;

pub use error::{EstimateError, Result};
pub use sample::SampleSet;
