//! Browser bindings. Every export takes plain numbers or strings and returns a
//! JSON document; the page in `www/` draws it on a canvas.

use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use robust_mean::distributions::{DistributionSpec, Kind};
use robust_mean::geomedian::geometric_median_default;
use robust_mean::scalar_mom::{choose_block_count, median_of_means, mom_error_bound};
use robust_mean::sphere_cover::cached_cover;
use robust_mean::spherical::{build_polytope, find_feasible_point, SolverOptions, COVER_GAMMA};

const MAX_TRIALS: usize = 5000;
const MAX_N: usize = 100_000;
const MAX_SHOWN_POINTS: usize = 400;

#[derive(Serialize)]
struct TailReport {
    blocks: usize,
    radius: f64,
    mom: Vec<f64>,
    mean: Vec<f64>,
    mom_quantile: f64,
    mean_quantile: f64,
    mom_exceed: f64,
    mean_exceed: f64,
}

fn quantile(v: &mut [f64], q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1]
}

fn kind(dist: &str) -> Result<Kind, String> {
    dist.parse::<Kind>().map_err(|e| e.to_string())
}

/// Scalar errors of median-of-means and the sample mean over seeded trials.
pub fn tail_comparison(dist: &str, n: usize, delta: f64, trials: usize, seed: u64) -> Result<String, String> {
    if n > MAX_N || trials == 0 || trials > MAX_TRIALS {
        return Err(format!("need n <= {MAX_N} and 1 <= trials <= {MAX_TRIALS}"));
    }
    let spec = DistributionSpec::isotropic(kind(dist)?, 1).map_err(|e| e.to_string())?;
    let blocks = choose_block_count(delta, n).map_err(|e| e.to_string())?;
    let radius = mom_error_bound(1.0, n, delta).map_err(|e| e.to_string())?;
    let mut mom = Vec::with_capacity(trials);
    let mut mean = Vec::with_capacity(trials);
    for t in 0..trials {
        let xs = spec.sample_stream(n, seed, t as u64).map_err(|e| e.to_string())?.column(0);
        mom.push(median_of_means(&xs, delta).map_err(|e| e.to_string())?.value.abs());
        mean.push((xs.iter().sum::<f64>() / n as f64).abs());
    }
    let rate = |v: &[f64]| v.iter().filter(|&&e| e > radius).count() as f64 / v.len() as f64;
    let report = TailReport {
        blocks,
        radius,
        mom_exceed: rate(&mom),
        mean_exceed: rate(&mean),
        mom_quantile: quantile(&mut mom.clone(), 1.0 - delta),
        mean_quantile: quantile(&mut mean.clone(), 1.0 - delta),
        mom,
        mean,
    };
    Ok(serde_json::to_string(&report).expect("serializable"))
}

#[derive(Serialize)]
struct PolytopeView {
    points: Vec<[f64; 2]>,
    true_mean: [f64; 2],
    sample_mean: [f64; 2],
    directions: Vec<[f64; 2]>,
    centers: Vec<f64>,
    halfwidth: f64,
    estimate: [f64; 2],
    feasible: bool,
    iterations: usize,
}

/// A planar sample, the slab polytope of the spherical estimator and its solution.
pub fn polytope_view(dist: &str, n: usize, delta: f64, seed: u64) -> Result<String, String> {
    if n > MAX_N {
        return Err(format!("need n <= {MAX_N}"));
    }
    let mu = [1.0, 0.5];
    let mut spec = DistributionSpec::isotropic(kind(dist)?, 2).map_err(|e| e.to_string())?;
    spec.mean = mu.to_vec();
    let samples = spec.sample(n, seed).map_err(|e| e.to_string())?;
    let cover = cached_cover(2, COVER_GAMMA, 0).map_err(|e| e.to_string())?;
    let polytope = build_polytope(&samples, 1.0, delta, Arc::clone(&cover)).map_err(|e| e.to_string())?;
    let est = find_feasible_point(&polytope, &SolverOptions::default());
    let mean = samples.mean();
    let view = PolytopeView {
        points: samples.rows().take(MAX_SHOWN_POINTS).map(|r| [r[0], r[1]]).collect(),
        true_mean: mu,
        sample_mean: [mean[0], mean[1]],
        directions: cover.directions.iter().map(|w| [w[0], w[1]]).collect(),
        centers: polytope.centers.clone(),
        halfwidth: polytope.halfwidth,
        estimate: [est.value[0], est.value[1]],
        feasible: est.feasible,
        iterations: est.iterations,
    };
    Ok(serde_json::to_string(&view).expect("serializable"))
}

#[derive(Serialize)]
struct MedianView {
    point: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    centroid: Vec<f64>,
}

/// Geometric median of a JSON list of `[x, y]` points.
pub fn geometric_median_of(points_json: &str) -> Result<String, String> {
    let points: Vec<Vec<f64>> = serde_json::from_str(points_json).map_err(|e| e.to_string())?;
    let r = geometric_median_default(&points).map_err(|e| e.to_string())?;
    let d = points[0].len();
    let centroid = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / points.len() as f64)
        .collect();
    let view = MedianView {
        point: r.point,
        objective: r.objective,
        iterations: r.iterations,
        converged: r.converged,
        centroid,
    };
    Ok(serde_json::to_string(&view).expect("serializable"))
}

#[wasm_bindgen(js_name = tailComparison)]
pub fn tail_comparison_js(dist: &str, n: usize, delta: f64, trials: usize, seed: u32) -> Result<String, JsValue> {
    tail_comparison(dist, n, delta, trials, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = polytopeView)]
pub fn polytope_view_js(dist: &str, n: usize, delta: f64, seed: u32) -> Result<String, JsValue> {
    polytope_view(dist, n, delta, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = geometricMedian)]
pub fn geometric_median_js(points_json: &str) -> Result<String, JsValue> {
    geometric_median_of(points_json).map_err(|e| JsValue::from_str(&e))
}
