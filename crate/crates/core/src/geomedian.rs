//! Geometric median (modified Weiszfeld) and the block-means estimator built on it.

use serde::{Deserialize, Serialize};

use crate::error::{EstimateError, Result};
use crate::sample::{distance, SampleSet};
use crate::scalar_mom::{check_delta, choose_block_count, partition_indices};

pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_REL_TOL: f64 = 1e-10;
const COINCIDENCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoMedianResult {
    pub point: Vec<f64>,
    /// Sum of distances to the inputs.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn objective(points: &[Vec<f64>], y: &[f64]) -> f64 {
    points.iter().map(|p| distance(p, y)).sum()
}

/// Largest pairwise distance along the coordinate bounding box diagonal.
fn diameter(points: &[Vec<f64>]) -> f64 {
    let d = points[0].len();
    let mut lo = points[0].clone();
    let mut hi = points[0].clone();
    for p in points {
        for j in 0..d {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    distance(&lo, &hi)
}

fn coincidence_radius(points: &[Vec<f64>]) -> f64 {
    COINCIDENCE * diameter(points).max(1.0)
}

/// Splits the gradient of the objective at `y` into the pull of distinct
/// points and the count of inputs coinciding with `y`.
fn pull(points: &[Vec<f64>], y: &[f64], radius: f64) -> (Vec<f64>, Vec<f64>, f64, usize) {
    let d = y.len();
    let mut r = vec![0.0; d];
    let mut weighted = vec![0.0; d];
    let mut wsum = 0.0;
    let mut eta = 0;
    for p in points {
        let dist = distance(p, y);
        if dist <= radius {
            eta += 1;
            continue;
        }
        let w = 1.0 / dist;
        wsum += w;
        for j in 0..d {
            r[j] += (p[j] - y[j]) * w;
            weighted[j] += p[j] * w;
        }
    }
    (r, weighted, wsum, eta)
}

/// Norm of the smallest subgradient of the objective at `y`: zero certifies optimality.
pub fn subgradient_residual(points: &[Vec<f64>], y: &[f64]) -> f64 {
    let (r, _, _, eta) = pull(points, y, coincidence_radius(points));
    let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    (rn - eta as f64).max(0.0)
}

pub fn geometric_median(points: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<GeoMedianResult> {
    if points.is_empty() {
        return Err(EstimateError::EmptySample);
    }
    let d = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(EstimateError::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    let radius = coincidence_radius(points);
    let mut y = vec![0.0; d];
    for p in points {
        for j in 0..d {
            y[j] += p[j];
        }
    }
    y.iter_mut().for_each(|v| *v /= points.len() as f64);

    let mut best = (objective(points, &y), y.clone());
    for it in 1..=max_iter {
        let (r, weighted, wsum, eta) = pull(points, &y, radius);
        if wsum == 0.0 {
            return Ok(finish(points, y, it, true));
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if eta > 0 && rn <= eta as f64 {
            return Ok(finish(points, y, it, true));
        }
        let t: Vec<f64> = weighted.iter().map(|w| w / wsum).collect();
        let next: Vec<f64> = if eta == 0 {
            t
        } else {
            let a = eta as f64 / rn;
            t.iter().zip(&y).map(|(ti, yi)| (1.0 - a) * ti + a * yi).collect()
        };
        let step = distance(&next, &y);
        y = next;
        let f = objective(points, &y);
        if f < best.0 {
            best = (f, y.clone());
        }
        if step < tol {
            return Ok(finish(points, y, it, true));
        }
    }
    Ok(finish(points, best.1, max_iter, false))
}

/// Iterates that stall next to an input point are snapped onto it when that
/// point passes the optimality test.
fn finish(points: &[Vec<f64>], mut point: Vec<f64>, iterations: usize, converged: bool) -> GeoMedianResult {
    if let Some(nearest) = points
        .iter()
        .min_by(|a, b| distance(a, &point).total_cmp(&distance(b, &point)))
    {
        if subgradient_residual(points, nearest) == 0.0 && objective(points, nearest) <= objective(points, &point) {
            point = nearest.clone();
        }
    }
    GeoMedianResult {
        objective: objective(points, &point),
        point,
        iterations,
        converged,
    }
}

/// Geometric median with tolerance scaled to the data diameter.
pub fn geometric_median_default(points: &[Vec<f64>]) -> Result<GeoMedianResult> {
    if points.is_empty() {
        return Err(EstimateError::EmptySample);
    }
    let diam = diameter(points);
    let tol = if diam > 0.0 { DEFAULT_REL_TOL * diam } else { f64::MIN_POSITIVE };
    geometric_median(points, tol, DEFAULT_MAX_ITER)
}

/// Means of `b` contiguous blocks, sized as in the scalar estimator.
pub fn block_means(samples: &SampleSet, b: usize) -> Result<Vec<Vec<f64>>> {
    Ok(partition_indices(samples.len(), b)?
        .into_iter()
        .map(|r| samples.slice(r.start, r.end).mean())
        .collect())
}

pub fn minsker_estimator(samples: &SampleSet, delta: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(EstimateError::EmptySample);
    }
    check_delta(delta, samples.len())?;
    let b = choose_block_count(delta, samples.len())?;
    Ok(geometric_median_default(&block_means(samples, b)?)?.point)
}
