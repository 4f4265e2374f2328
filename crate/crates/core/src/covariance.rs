//! Robust covariance from quadratic forms.
//!
//! For each direction `u` of a gamma-cover, `u^T Sigma u` is estimated by the
//! median-of-means of the pair variables `(1/2)(u^T(X_i - X_{m/2+i}))^2`. A
//! PSD matrix consistent with all of these estimates is then selected from
//! the per-direction slabs `V(u)/(1+eps) <= u^T A u <= V(u)/(1-eps)`: the
//! least-squares fit with eigenvalues clamped if it already lies in every
//! slab, otherwise the largest-margin point of the slab polytope found by
//! linear programming, with PSD cuts added until the solution is PSD.

use std::sync::Arc;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{EstimateError, Result};
use crate::sample::{dot, SampleSet};
use crate::scalar_mom::median_of_means;
use crate::sphere_cover::{cached_cover, Cover};

/// Covering radius used for the covariance net at each dimension.
///
/// `1/100` is only affordable in one and two dimensions; coarser nets are
/// used above that.
pub fn default_gamma(d: usize) -> f64 {
    match d {
        0..=2 => 0.01,
        3 => 0.1,
        _ => 0.5,
    }
}

pub fn gamma_is_nominal(gamma: f64) -> bool {
    (gamma - 0.01).abs() < 1e-15
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceOptions {
    pub gamma: f64,
    pub cover_seed: u64,
    pub max_sweeps: usize,
}

impl CovarianceOptions {
    pub fn for_dim(d: usize) -> Self {
        Self {
            gamma: default_gamma(d),
            cover_seed: 0,
            max_sweeps: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadFormEstimates {
    pub cover: Arc<Cover>,
    pub values: Vec<f64>,
    /// Samples used (even).
    pub m: usize,
    pub delta_eff: f64,
}

#[derive(Debug, Clone)]
pub struct CovFit {
    pub sigma_hat: DMatrix<f64>,
    pub epsilon_m: f64,
    /// Every slab holds at the returned matrix.
    pub member: bool,
    /// Per-direction violation of the slab, relative to `V(u)`; zero when inside.
    pub residuals: Vec<f64>,
    /// PSD cuts on the LP path, projection sweeps on the fallback path.
    pub sweeps: usize,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Eigenvalues in nonincreasing order, clamped at zero.
    pub values: Vec<f64>,
    /// Matching orthonormal eigenvectors as columns.
    pub vectors: DMatrix<f64>,
}

fn pair_values(samples: &SampleSet, u: &[f64]) -> Result<Vec<f64>> {
    let m = samples.len() & !1;
    if m < 8 {
        return Err(EstimateError::InsufficientPairs { m: samples.len() });
    }
    let half = m / 2;
    Ok((0..half)
        .map(|i| {
            let diff = dot(samples.row(i), u) - dot(samples.row(half + i), u);
            0.5 * diff * diff
        })
        .collect())
}

/// Median-of-means estimate of `u^T Sigma u`; an odd last sample is dropped.
pub fn quad_form_mom(samples: &SampleSet, u: &[f64], delta_eff: f64) -> Result<f64> {
    let pairs = pair_values(samples, u)?;
    Ok(median_of_means(&pairs, delta_eff)?.value.max(0.0))
}

pub fn estimate_quad_forms(
    samples: &SampleSet,
    cover: Arc<Cover>,
    delta_eff: f64,
) -> Result<QuadFormEstimates> {
    if cover.dim != samples.dim() {
        return Err(EstimateError::DimensionMismatch {
            expected: samples.dim(),
            got: cover.dim,
        });
    }
    let values = cover
        .directions
        .iter()
        .map(|u| quad_form_mom(samples, u, delta_eff))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuadFormEstimates {
        cover,
        values,
        m: samples.len() & !1,
        delta_eff,
    })
}

/// Per-direction level `delta / (s (4/gamma)^d)`.
pub fn quad_form_delta(delta: f64, s: usize, d: usize, gamma: f64) -> f64 {
    (delta.ln() - (s as f64).ln() - Cover::ln_size_cap(d, gamma)).exp()
}

/// `4e * sqrt(K ln(s (4/gamma)^d / delta) / m)`.
pub fn epsilon_m(kurtosis: f64, m: usize, d: usize, s: usize, delta: f64, gamma: f64) -> f64 {
    let log_term = (s as f64).ln() + Cover::ln_size_cap(d, gamma) - delta.ln();
    4.0 * std::f64::consts::E * (kurtosis * log_term / m as f64).sqrt()
}

/// Admissible range of `u^T A u` given the estimate `v` and tolerance `eps`.
pub fn slab_bounds(v: f64, eps: f64) -> (f64, f64) {
    let hi = if eps < 1.0 { v / (1.0 - eps) } else { f64::INFINITY };
    (v / (1.0 + eps), hi)
}

fn features(u: &[f64]) -> Vec<f64> {
    let d = u.len();
    let mut f = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            f.push(if i == j { u[i] * u[i] } else { 2.0 * u[i] * u[j] });
        }
    }
    f
}

fn least_squares(est: &QuadFormEstimates) -> Result<DMatrix<f64>> {
    let d = est.cover.dim;
    let p = d * (d + 1) / 2;
    let needed = p;
    if est.cover.len() < needed {
        return Err(EstimateError::CoverNotIdentifying {
            directions: est.cover.len(),
            needed,
        });
    }
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for (u, v) in est.cover.directions.iter().zip(&est.values) {
        let f = DVector::from_vec(features(u));
        gram += &f * f.transpose();
        rhs += &f * *v;
    }
    let coef = gram
        .cholesky()
        .ok_or(EstimateError::CoverNotIdentifying {
            directions: est.cover.len(),
            needed,
        })?
        .solve(&rhs);
    Ok(unpack(d, coef.as_slice()))
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let t = a.transpose();
    *a += t;
    *a *= 0.5;
}

/// Nearest PSD matrix in Frobenius norm.
pub fn project_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

fn quad(a: &DMatrix<f64>, u: &[f64]) -> f64 {
    let d = u.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += u[i] * a[(i, j)] * u[j];
        }
    }
    s
}

fn slab_violations(
    a: &DMatrix<f64>,
    est: &QuadFormEstimates,
    eps: f64,
    abs_tol: f64,
) -> (bool, Vec<f64>) {
    let mut all = true;
    let residuals = est
        .cover
        .directions
        .iter()
        .zip(&est.values)
        .map(|(u, &v)| {
            let q = quad(a, u);
            let (lo, hi) = slab_bounds(v, eps);
            let excess = (lo - q).max(q - hi).max(0.0);
            if excess > abs_tol {
                all = false;
            }
            excess / v.max(f64::MIN_POSITIVE)
        })
        .collect();
    (all, residuals)
}

fn unpack(d: usize, coef: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            a[(i, j)] = coef[k];
            a[(j, i)] = coef[k];
            k += 1;
        }
    }
    a
}

const MAX_CUTS: usize = 50;

/// Largest-margin point of the slabs, values rescaled to unit maximum.
/// Returns the matrix and the number of PSD cuts, or `None` when the LP is
/// infeasible or the cuts do not settle.
fn margin_lp(est: &QuadFormEstimates, eps: f64, scale: f64) -> Option<(DMatrix<f64>, usize)> {
    let d = est.cover.dim;
    let p = d * (d + 1) / 2;
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<Variable> = (0..p).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let t = lp.add_var(1.0, (0.0, 1.0));
    let row = |u: &[f64]| -> Vec<(Variable, f64)> { vars.iter().copied().zip(features(u)).collect() };
    for (u, &v) in est.cover.directions.iter().zip(&est.values) {
        let (lo, hi) = slab_bounds(v / scale, eps);
        let w = if hi.is_finite() { 0.5 * (hi - lo) } else { lo };
        let mut lower = row(u);
        lower.push((t, -w));
        lp.add_constraint(lower.as_slice(), ComparisonOp::Ge, lo);
        if hi.is_finite() {
            let mut upper = row(u);
            upper.push((t, w));
            lp.add_constraint(upper.as_slice(), ComparisonOp::Le, hi);
        }
    }
    let mut sol = lp.solve().ok()?.into_solution().ok()?;
    for cuts in 0..=MAX_CUTS {
        let coef: Vec<f64> = vars.iter().map(|&x| sol.var_value(x)).collect();
        let a = unpack(d, &coef);
        let eig = SymmetricEigen::new(a.clone());
        let (k, min) = eig.eigenvalues.iter().copied().enumerate().fold((0, f64::INFINITY), |b, (i, l)| {
            if l < b.1 {
                (i, l)
            } else {
                b
            }
        });
        if min >= -1e-12 {
            return Some((a * scale, cuts));
        }
        if cuts == MAX_CUTS {
            break;
        }
        let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        sol = sol.add_constraint(row(&v).as_slice(), ComparisonOp::Ge, 0.0).ok()?.into_solution().ok()?;
    }
    None
}

pub fn fit_covariance(est: &QuadFormEstimates, epsilon: f64, max_sweeps: usize) -> Result<CovFit> {
    if est.values.is_empty() {
        return Err(EstimateError::EmptySample);
    }
    const INSET: f64 = 0.01;
    let scale = est.values.iter().fold(0.0f64, |a, &v| a.max(v));
    let abs_tol = 1e-9 * scale;
    let fit = |a: DMatrix<f64>, sweeps: usize| {
        let (member, residuals) = slab_violations(&a, est, epsilon, abs_tol);
        CovFit {
            sigma_hat: a,
            epsilon_m: epsilon,
            member,
            residuals,
            sweeps,
        }
    };

    let ls = project_psd(&least_squares(est)?);
    let first = fit(ls.clone(), 0);
    if first.member || scale == 0.0 {
        return Ok(first);
    }
    if let Some((a, cuts)) = margin_lp(est, epsilon, scale) {
        let candidate = fit(project_psd(&a), cuts);
        if candidate.member {
            return Ok(candidate);
        }
    }

    // fallback: alternating projections from the least-squares start
    let mut a = ls;
    let mut sweeps = 0;
    let (mut member, _) = slab_violations(&a, est, epsilon, abs_tol);
    while !member && sweeps < max_sweeps {
        for (u, &v) in est.cover.directions.iter().zip(&est.values) {
            let q = quad(&a, u);
            let (lo, hi) = slab_bounds(v, epsilon);
            let width = if hi.is_finite() { hi - lo } else { lo };
            let target = if q < lo {
                lo + INSET * width
            } else if q > hi {
                hi - INSET * width
            } else {
                continue;
            };
            // Frobenius projection onto <A, uu^T> = target
            let t = target - q;
            for i in 0..u.len() {
                for j in 0..u.len() {
                    a[(i, j)] += t * u[i] * u[j];
                }
            }
        }
        a = project_psd(&a);
        sweeps += 1;
        (member, _) = slab_violations(&a, est, epsilon, abs_tol);
    }
    Ok(fit(a, sweeps))
}

/// Full pipeline on one block of samples, run as one of `s` stages.
pub fn fit_covariance_from_samples(
    samples: &SampleSet,
    delta: f64,
    kurtosis: f64,
    s: usize,
    opts: &CovarianceOptions,
) -> Result<CovFit> {
    let d = samples.dim();
    let cover = cached_cover(d, opts.gamma, opts.cover_seed)?;
    let delta_eff = quad_form_delta(delta, s, d, opts.gamma);
    let est = estimate_quad_forms(samples, cover, delta_eff)?;
    let eps = epsilon_m(kurtosis, est.m, d, s, delta, opts.gamma);
    fit_covariance(&est, eps, opts.max_sweeps)
}

pub fn spectral_decompose(sigma: &DMatrix<f64>) -> Spectrum {
    let eig = SymmetricEigen::new(sigma.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Spectrum { values, vectors }
}

/// Count of eigenvalues at least half the largest, and their eigenvectors.
/// A zero spectrum selects everything.
pub fn select_top_subspace(spectrum: &Spectrum) -> (usize, DMatrix<f64>) {
    let d = spectrum.values.len();
    let top = spectrum.values.first().copied().unwrap_or(0.0);
    let count = if top <= 0.0 {
        d
    } else {
        spectrum.values.iter().filter(|&&l| l >= top / 2.0).count()
    };
    (count, spectrum.vectors.columns(0, count).into_owned())
}
