//! The combined estimator: decompose the space on one half of the sample,
//! estimate the mean inside each piece on the other half, and add the pieces.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::covariance::default_gamma;
use crate::error::{EstimateError, Result};
use crate::geomedian::minsker_estimator;
use crate::sample::SampleSet;
use crate::spherical::{estimate_spherical_with, SolverOptions};
use crate::splitter::{make_split_plan, split_subspaces_with, SubspaceDecomposition};

/// Inflation of each stage's eigenvalue estimate before it is used as `lambda`.
pub const STAGE_LAMBDA_INFLATION: f64 = 4.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridConfig {
    /// Cover radius for the covariance fits; `None` picks [`default_gamma`].
    pub gamma: Option<f64>,
    pub cover_seed: u64,
    pub max_sweeps: usize,
    pub solver: SolverOptions,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            cover_seed: 0,
            max_sweeps: 200,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PieceMethod {
    Spherical,
    Minsker,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceEstimate {
    /// Stage index; the residual is `s`.
    pub id: usize,
    pub dim: usize,
    /// Estimate in the coordinates of the subspace basis.
    pub coords: Vec<f64>,
    /// `lambda` handed to the spherical estimator; zero elsewhere.
    pub lambda: f64,
    pub delta: f64,
    pub feasible: bool,
    pub method: PieceMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    /// `sum_i lambda_hat_i` over the stages.
    pub lambda_sum: f64,
    /// `sum_i lambda_hat_i * dim(V_i)`, a proxy for the trace.
    pub weighted_trace: f64,
    pub lambda_max_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridReport {
    pub estimate: Vec<f64>,
    pub per_subspace: Vec<SubspaceEstimate>,
    pub decomposition: SubspaceDecomposition,
    pub bound_inputs: BoundInputs,
}

impl HybridReport {
    pub fn all_feasible(&self) -> bool {
        self.per_subspace.iter().all(|p| p.feasible)
    }

    /// Basis of piece `i` in ambient coordinates; index `s` is the residual.
    pub fn basis(&self, i: usize) -> &DMatrix<f64> {
        match self.decomposition.subspaces.get(i) {
            Some(sub) => &sub.basis,
            None => &self.decomposition.residual,
        }
    }
}

pub fn estimate_mean_hybrid(samples: &SampleSet, delta: f64, kurtosis: f64) -> Result<HybridReport> {
    estimate_mean_hybrid_with(samples, delta, kurtosis, &HybridConfig::default())
}

pub fn estimate_mean_hybrid_with(
    samples: &SampleSet,
    delta: f64,
    kurtosis: f64,
    config: &HybridConfig,
) -> Result<HybridReport> {
    if !(delta > 0.0 && delta < 1.0) || !(kurtosis >= 1.0) {
        return Err(EstimateError::InvalidParameter(format!(
            "need delta in (0,1) and K >= 1, got delta={delta} K={kurtosis}"
        )));
    }
    let d = samples.dim();
    let half = samples.len() / 2;
    if half == 0 {
        return Err(EstimateError::EmptySample);
    }
    let first = samples.slice(0, half);
    let second = samples.slice(half, 2 * half);

    let gamma = config.gamma.unwrap_or_else(|| default_gamma(d));
    let plan = make_split_plan(half, d, delta, kurtosis, gamma)?;
    let decomposition = split_subspaces_with(&second, &plan, config.cover_seed, config.max_sweeps);
    let level = delta / (plan.s + 1) as f64;

    let mut estimate = DVector::<f64>::zeros(d);
    let mut per_subspace = Vec::with_capacity(plan.s + 1);
    for (id, sub) in decomposition.subspaces.iter().enumerate() {
        if sub.dim() == 0 {
            per_subspace.push(SubspaceEstimate {
                id,
                dim: 0,
                coords: Vec::new(),
                lambda: 0.0,
                delta: level,
                feasible: true,
                method: PieceMethod::Empty,
            });
            continue;
        }
        let lambda = STAGE_LAMBDA_INFLATION * sub.lambda_hat;
        let local = first.project_onto(&sub.basis);
        let est = estimate_spherical_with(&local, lambda, level, &config.solver, config.cover_seed)?;
        estimate += &sub.basis * DVector::from_column_slice(&est.value);
        per_subspace.push(SubspaceEstimate {
            id,
            dim: sub.dim(),
            coords: est.value,
            lambda,
            delta: level,
            feasible: est.feasible,
            method: PieceMethod::Spherical,
        });
    }
    let residual = &decomposition.residual;
    let (coords, method) = if residual.ncols() > 0 {
        let local = first.project_onto(residual);
        let coords = minsker_estimator(&local, level)?;
        estimate += residual * DVector::from_column_slice(&coords);
        (coords, PieceMethod::Minsker)
    } else {
        (Vec::new(), PieceMethod::Empty)
    };
    per_subspace.push(SubspaceEstimate {
        id: plan.s,
        dim: residual.ncols(),
        coords,
        lambda: 0.0,
        delta: level,
        feasible: true,
        method,
    });

    let stages = decomposition.subspaces.iter().filter(|s| s.dim() > 0);
    let bound_inputs = BoundInputs {
        lambda_sum: stages.clone().map(|s| s.lambda_hat).sum(),
        weighted_trace: stages.clone().map(|s| s.lambda_hat * s.dim() as f64).sum(),
        lambda_max_hat: stages.map(|s| s.lambda_hat).fold(0.0, f64::max),
    };
    Ok(HybridReport {
        estimate: estimate.as_slice().to_vec(),
        per_subspace,
        decomposition,
        bound_inputs,
    })
}

/// `C (sqrt(Tr/n) + sqrt(lambda_max ln(max(ln d, 1) / delta) / n))`.
pub fn theorem_bound(trace: f64, lambda_max: f64, n: usize, d: usize, delta: f64, c: f64) -> f64 {
    let n = n as f64;
    let lnd = (d as f64).ln().max(1.0);
    c * ((trace / n).sqrt() + (lambda_max * (lnd / delta).ln() / n).sqrt())
}

/// Sample size assumed by the theory:
/// `2 (400e)^2 K log_{3/2} d (d ln 25 + ln(2 log_{3/2} d) + ln(1/delta))`.
/// In one dimension only the block rule applies, so four samples suffice.
pub fn samplesize_threshold(d: usize, delta: f64, kurtosis: f64) -> f64 {
    if d <= 1 {
        return 4.0;
    }
    let l = (d as f64).ln() / 1.5f64.ln();
    let c = 400.0 * std::f64::consts::E;
    2.0 * c * c * kurtosis * l * (d as f64 * 25f64.ln() + (2.0 * l).ln() - delta.ln())
}

pub fn samplesize_gate(n: usize, d: usize, delta: f64, kurtosis: f64) -> bool {
    n as f64 >= samplesize_threshold(d, delta, kurtosis)
}
