//! Estimator for nearly spherical distributions.
//!
//! Each direction `w` of a 1/2-cover gets a median-of-means estimate of
//! `w^T mu` at level `delta / 8^d`. The estimate is any point whose projections
//! agree with all of them up to a common halfwidth; finding one is a convex
//! feasibility problem, solved here by relaxed projections onto the most
//! violated slab (a Polyak subgradient step on the max-violation function).

use std::sync::Arc;

use crate::covariance::{self, CovarianceOptions};
use crate::error::{EstimateError, Result};
use crate::sample::{dot, SampleSet};
use crate::scalar_mom::{check_delta, median_of_means};
use crate::sphere_cover::{cached_cover, Cover};

pub const COVER_GAMMA: f64 = 0.5;

/// Inflation applied to the top eigenvalue of the fitted covariance.
pub const LAMBDA_INFLATION: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub iterations: usize,
    /// Feasibility tolerance relative to the halfwidth.
    pub rel_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            iterations: 5000,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Polytope {
    pub cover: Arc<Cover>,
    /// Directional median-of-means values, one per cover direction.
    pub centers: Vec<f64>,
    pub halfwidth: f64,
    pub delta: f64,
    pub lambda: f64,
    pub n: usize,
    /// Coordinate-wise median-of-means at the per-direction level.
    pub initializer: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphericalEstimate {
    pub value: Vec<f64>,
    pub feasible: bool,
    /// Largest directional violation `max_w |m(w) - w^T x|` at the final iterate.
    pub residual: f64,
    pub bound: f64,
    pub iterations: usize,
}

/// Per-direction confidence `delta / 8^d`.
pub fn per_direction_delta(delta: f64, d: usize) -> f64 {
    (delta.ln() - d as f64 * 8f64.ln()).exp()
}

pub fn directional_mom(samples: &SampleSet, w: &[f64], delta_eff: f64) -> Result<f64> {
    Ok(median_of_means(&samples.project(w), delta_eff)?.value)
}

/// `2e * sqrt(2 lambda ln(e 8^d / delta) / n)`.
pub fn polytope_halfwidth(lambda: f64, n: usize, d: usize, delta: f64) -> f64 {
    let log_term = 1.0 + d as f64 * 8f64.ln() - delta.ln();
    2.0 * std::f64::consts::E * (2.0 * lambda * log_term / n as f64).sqrt()
}

/// `8e * sqrt(2 lambda (d ln 8 + ln(e/delta)) / n)`.
pub fn spherical_error_bound(lambda: f64, d: usize, n: usize, delta: f64) -> f64 {
    let log_term = d as f64 * 8f64.ln() + 1.0 - delta.ln();
    8.0 * std::f64::consts::E * (2.0 * lambda * log_term / n as f64).sqrt()
}

pub fn build_polytope(
    samples: &SampleSet,
    lambda: f64,
    delta: f64,
    cover: Arc<Cover>,
) -> Result<Polytope> {
    let d = samples.dim();
    if (cover.gamma - COVER_GAMMA).abs() > 1e-12 || cover.dim != d {
        return Err(EstimateError::InvalidParameter(format!(
            "polytope needs a 1/2-cover of dimension {d}, got gamma={} d={}",
            cover.gamma, cover.dim
        )));
    }
    if !(lambda >= 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(EstimateError::InvalidParameter(format!(
            "need lambda >= 0 and delta in (0,1), got lambda={lambda} delta={delta}"
        )));
    }
    let n = samples.len();
    let delta_eff = per_direction_delta(delta, d);
    check_delta(delta_eff, n).map_err(|_| EstimateError::SampleTooSmall { n, d, delta })?;

    let centers = cover
        .directions
        .iter()
        .map(|w| directional_mom(samples, w, delta_eff))
        .collect::<Result<Vec<_>>>()?;
    let initializer = (0..d)
        .map(|j| Ok(median_of_means(&samples.column(j), delta_eff)?.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(Polytope {
        cover,
        centers,
        halfwidth: polytope_halfwidth(lambda, n, d, delta),
        delta,
        lambda,
        n,
        initializer,
    })
}

impl Polytope {
    pub fn dim(&self) -> usize {
        self.cover.dim
    }

    /// `(max_w |w^T x - m(w)|, index, signed residual)`.
    fn worst(&self, x: &[f64]) -> (f64, usize, f64) {
        let mut worst = (f64::NEG_INFINITY, 0, 0.0);
        for (i, (w, m)) in self.cover.directions.iter().zip(&self.centers).enumerate() {
            let r = dot(w, x) - m;
            if r.abs() > worst.0 {
                worst = (r.abs(), i, r);
            }
        }
        worst
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        self.worst(x).0
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x) <= self.halfwidth + tol
    }

    /// Absolute feasibility tolerance for the given options.
    pub fn tolerance(&self, opts: &SolverOptions) -> f64 {
        let scale = self.centers.iter().fold(0.0f64, |a, m| a.max(m.abs()));
        opts.rel_tol * self.halfwidth + 1e-12 * (1.0 + scale)
    }
}

pub fn find_feasible_point(polytope: &Polytope, opts: &SolverOptions) -> SphericalEstimate {
    find_feasible_point_from(polytope, &polytope.initializer, opts)
}

pub fn find_feasible_point_from(
    polytope: &Polytope,
    start: &[f64],
    opts: &SolverOptions,
) -> SphericalEstimate {
    const RELAX: f64 = 1.5;
    const DEPTH: f64 = 0.05;
    let d = polytope.dim();
    let hw = polytope.halfwidth;
    let tol = polytope.tolerance(opts);
    let bound = spherical_error_bound(polytope.lambda, d, polytope.n, polytope.delta);

    let mut x = start.to_vec();
    let mut iterations = 0;
    let (mut f, mut idx, mut r) = polytope.worst(&x);
    while f > hw + tol && iterations < opts.iterations {
        // relaxed step onto the violated face, at most DEPTH * hw inside it
        let excess = f - hw;
        let step = (RELAX * excess).min(excess + DEPTH * hw);
        let w = &polytope.cover.directions[idx];
        let sign = r.signum();
        for (xi, wi) in x.iter_mut().zip(w) {
            *xi -= sign * step * wi;
        }
        iterations += 1;
        (f, idx, r) = polytope.worst(&x);
    }
    if f <= hw + tol {
        SphericalEstimate {
            value: x,
            feasible: true,
            residual: f,
            bound,
            iterations,
        }
    } else {
        SphericalEstimate {
            value: vec![0.0; d],
            feasible: false,
            residual: f,
            bound,
            iterations,
        }
    }
}

/// Builds the 1/2-cover, the polytope and a feasible point in one go.
pub fn estimate_spherical(samples: &SampleSet, lambda: f64, delta: f64) -> Result<SphericalEstimate> {
    estimate_spherical_with(samples, lambda, delta, &SolverOptions::default(), 0)
}

pub fn estimate_spherical_with(
    samples: &SampleSet,
    lambda: f64,
    delta: f64,
    opts: &SolverOptions,
    cover_seed: u64,
) -> Result<SphericalEstimate> {
    let cover = cached_cover(samples.dim(), COVER_GAMMA, cover_seed)?;
    let polytope = build_polytope(samples, lambda, delta, cover)?;
    Ok(find_feasible_point(&polytope, opts))
}

/// `1.1` times the top eigenvalue of the fitted covariance, an estimate of
/// `lambda_max` from above.
pub fn estimate_lambda_max(samples: &SampleSet, delta: f64, kurtosis: f64) -> Result<f64> {
    let opts = CovarianceOptions::for_dim(samples.dim());
    let fit = covariance::fit_covariance_from_samples(samples, delta, kurtosis, 1, &opts)?;
    let top = covariance::spectral_decompose(&fit.sigma_hat).values[0];
    Ok(LAMBDA_INFLATION * top)
}
