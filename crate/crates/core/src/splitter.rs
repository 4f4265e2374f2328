//! Sequential orthogonal decomposition `R^d = V_1 + ... + V_s + V_{s+1}`.
//!
//! Stage `i` fits a covariance on block `i` of the sample projected onto the
//! current orthogonal complement, keeps the eigenvectors whose eigenvalues are
//! at least half the largest as `V_i`, and shrinks the complement. Whatever is
//! left after `s = ceil(log_{3/2} d^2)` stages is the residual subspace.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::covariance::{
    fit_covariance_from_samples, select_top_subspace, spectral_decompose, CovarianceOptions,
};
use crate::error::{EstimateError, Result};
use crate::sample::SampleSet;
use crate::scalar_mom::{ceil_tolerant, partition_indices};
use crate::sphere_cover::{parse_header, parse_vectors, write_vector};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub s: usize,
    pub m: usize,
    pub blocks: Vec<Range<usize>>,
    pub gamma: f64,
    pub delta: f64,
    pub kurtosis: f64,
}

/// `ceil(log_{3/2} d^2)`, zero for `d <= 1`.
pub fn stage_count(d: usize) -> usize {
    if d <= 1 {
        return 0;
    }
    ceil_tolerant(2.0 * (d as f64).ln() / 1.5f64.ln()) as usize
}

pub fn make_split_plan(n: usize, d: usize, delta: f64, kurtosis: f64, gamma: f64) -> Result<SplitPlan> {
    if d == 0 {
        return Err(EstimateError::InvalidParameter("dimension must be >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) || !(gamma > 0.0 && gamma < 1.0) || !(kurtosis > 0.0) {
        return Err(EstimateError::InvalidParameter(format!(
            "need delta, gamma in (0,1) and K > 0; got delta={delta} gamma={gamma} K={kurtosis}"
        )));
    }
    let s = stage_count(d);
    if s == 0 {
        return Ok(SplitPlan {
            s,
            m: n,
            blocks: Vec::new(),
            gamma,
            delta,
            kurtosis,
        });
    }
    if n < 8 * s {
        return Err(EstimateError::SampleTooSmall { n, d, delta });
    }
    Ok(SplitPlan {
        s,
        m: n / s,
        blocks: partition_indices(n, s)?,
        gamma,
        delta,
        kurtosis,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    /// Orthonormal basis in ambient coordinates, one column per dimension.
    pub basis: DMatrix<f64>,
    /// Largest eigenvalue of the fitted covariance inside the complement this
    /// stage worked in; zero for empty stages.
    pub lambda_hat: f64,
    pub success: bool,
}

impl Subspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn empty(d: usize, success: bool) -> Self {
        Self {
            basis: DMatrix::zeros(d, 0),
            lambda_hat: 0.0,
            success,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDecomposition {
    pub ambient_dim: usize,
    pub gamma: f64,
    /// One entry per stage, `s` in total.
    pub subspaces: Vec<Subspace>,
    /// Orthonormal basis of the remaining complement.
    pub residual: DMatrix<f64>,
}

impl SubspaceDecomposition {
    pub fn residual_dim(&self) -> usize {
        self.residual.ncols()
    }

    pub fn success_flags(&self) -> Vec<bool> {
        self.subspaces.iter().map(|s| s.success).collect()
    }

    pub fn all_succeeded(&self) -> bool {
        self.subspaces.iter().all(|s| s.success)
    }

    pub fn total_dim(&self) -> usize {
        self.subspaces.iter().map(Subspace::dim).sum::<usize>() + self.residual_dim()
    }

    /// All bases side by side, residual last; a `d x d` orthogonal matrix.
    pub fn joint_basis(&self) -> DMatrix<f64> {
        let cols: Vec<_> = self
            .subspaces
            .iter()
            .map(|s| &s.basis)
            .chain(std::iter::once(&self.residual))
            .flat_map(|b| b.column_iter().map(|c| c.into_owned()))
            .collect();
        if cols.is_empty() {
            return DMatrix::zeros(self.ambient_dim, 0);
        }
        DMatrix::from_columns(&cols)
    }

    /// `max |Q^T Q - I|` for the joint basis.
    pub fn unitarity_residual(&self) -> f64 {
        let q = self.joint_basis();
        (q.transpose() * &q - DMatrix::identity(q.ncols(), q.ncols())).amax()
    }

    /// Text form: header `d gamma count`, then per subspace a line
    /// `dim lambda_hat success` followed by `dim` basis vectors. The residual
    /// comes last with `lambda_hat = NaN`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {:.16e} {}\n",
            self.ambient_dim,
            self.gamma,
            self.subspaces.len() + 1
        );
        let entries = self
            .subspaces
            .iter()
            .map(|s| (&s.basis, s.lambda_hat, s.success))
            .chain(std::iter::once((&self.residual, f64::NAN, true)));
        for (basis, lambda, ok) in entries {
            out.push_str(&format!("{} {:.16e} {}\n", basis.ncols(), lambda, u8::from(ok)));
            for c in basis.column_iter() {
                write_vector(&mut out, c.as_slice());
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| EstimateError::Parse("missing decomposition header".into()))?;
        let (d, gamma, count) = parse_header(header)?;
        if count == 0 {
            return Err(EstimateError::Parse("decomposition needs a residual entry".into()));
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let meta = lines
                .next()
                .ok_or_else(|| EstimateError::Parse("truncated decomposition".into()))?;
            let f: Vec<&str> = meta.split_whitespace().collect();
            let bad = || EstimateError::Parse(format!("bad subspace line {meta:?}"));
            if f.len() != 3 {
                return Err(bad());
            }
            let dim: usize = f[0].parse().map_err(|_| bad())?;
            let lambda_hat: f64 = f[1].parse().map_err(|_| bad())?;
            let success = match f[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            let cols = parse_vectors(&mut lines, dim, d)?;
            let mut basis = DMatrix::zeros(d, dim);
            for (j, c) in cols.iter().enumerate() {
                basis.column_mut(j).copy_from_slice(c);
            }
            entries.push(Subspace {
                basis,
                lambda_hat,
                success,
            });
        }
        let residual = entries.pop().expect("count >= 1").basis;
        Ok(Self {
            ambient_dim: d,
            gamma,
            subspaces: entries,
            residual,
        })
    }
}

pub fn split_subspaces(samples: &SampleSet, plan: &SplitPlan) -> SubspaceDecomposition {
    split_subspaces_with(samples, plan, 0, 200)
}

pub fn split_subspaces_with(
    samples: &SampleSet,
    plan: &SplitPlan,
    cover_seed: u64,
    max_sweeps: usize,
) -> SubspaceDecomposition {
    let d = samples.dim();
    let opts = CovarianceOptions {
        gamma: plan.gamma,
        cover_seed,
        max_sweeps,
    };
    let mut complement = DMatrix::<f64>::identity(d, d);
    let mut subspaces = Vec::with_capacity(plan.s);
    let mut failed = false;
    for block in &plan.blocks {
        let r = complement.ncols();
        if failed || r == 0 {
            subspaces.push(Subspace::empty(d, !failed));
            continue;
        }
        let local = samples.slice(block.start, block.end).project_onto(&complement);
        let fit = match fit_covariance_from_samples(&local, plan.delta, plan.kurtosis, plan.s, &opts) {
            Ok(fit) if fit.member => fit,
            _ => {
                // leave the rest of the space to the residual estimator
                failed = true;
                subspaces.push(Subspace::empty(d, false));
                continue;
            }
        };
        let spectrum = spectral_decompose(&fit.sigma_hat);
        let (k, top) = select_top_subspace(&spectrum);
        let rest = spectrum.vectors.columns(k, r - k).into_owned();
        subspaces.push(Subspace {
            basis: &complement * top,
            lambda_hat: spectrum.values[0],
            success: true,
        });
        complement = &complement * rest;
    }
    SubspaceDecomposition {
        ambient_dim: d,
        gamma: plan.gamma,
        subspaces,
        residual: complement,
    }
}

/// Largest principal angle between the column spans of two orthonormal bases
/// of equal dimension; `pi/2` when the dimensions differ.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let sv = (a.transpose() * b).singular_values();
    let smallest = sv.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    smallest.clamp(-1.0, 1.0).acos()
}

/// `B^T Sigma B`: the covariance restricted to a subspace, in basis coordinates.
pub fn restricted_covariance(sigma: &DMatrix<f64>, basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis.transpose() * sigma * basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::default_gamma;
    use crate::distributions::{DistributionSpec, Kind};

    #[test]
    fn stage_counts() {
        assert_eq!(stage_count(10), 12);
        assert_eq!(stage_count(1), 0);
        assert_eq!(stage_count(2), 4);
        assert_eq!(stage_count(4), 7);
    }

    #[test]
    fn plan_blocks() {
        let p = make_split_plan(1003, 2, 0.1, 3.0, 0.01).unwrap();
        assert_eq!((p.s, p.m), (4, 250));
        assert!(p.blocks.iter().all(|b| b.len() >= p.m));
        assert_eq!(p.blocks.last().unwrap().end, 1003);
        assert!(make_split_plan(20, 2, 0.1, 3.0, 0.01).is_err());
        let one = make_split_plan(50, 1, 0.1, 3.0, 0.01).unwrap();
        assert_eq!(one.s, 0);
        assert!(one.blocks.is_empty());
    }

    #[test]
    fn one_dimension_skips_splitting() {
        let s = SampleSet::from_scalars(&(0..40).map(f64::from).collect::<Vec<_>>());
        let plan = make_split_plan(40, 1, 0.1, 3.0, 0.01).unwrap();
        let dec = split_subspaces(&s, &plan);
        assert!(dec.subspaces.is_empty());
        assert_eq!(dec.residual_dim(), 1);
    }

    #[test]
    fn point_mass_is_consumed_by_the_first_stage() {
        let rows = vec![[1.0, -2.0, 0.5]; 400];
        let s = SampleSet::from_rows(&rows).unwrap();
        let plan = make_split_plan(400, 3, 0.1, 3.0, 0.5).unwrap();
        let dec = split_subspaces(&s, &plan);
        assert_eq!(dec.subspaces[0].dim(), 3);
        assert_eq!(dec.residual_dim(), 0);
        assert_eq!(dec.total_dim(), 3);
        assert!(dec.all_succeeded());
        assert!(dec.unitarity_residual() < 1e-12);
    }

    #[test]
    fn anisotropic_split_and_text_round_trip() {
        let spec = DistributionSpec::with_covariance_diag(Kind::Gaussian, &[1.0, 1.0, 1e-2, 1e-2]).unwrap();
        let s = spec.sample(20_000, 3).unwrap();
        let plan = make_split_plan(20_000, 4, 0.1, 3.0, default_gamma(4)).unwrap();
        let dec = split_subspaces(&s, &plan);
        assert_eq!(dec.total_dim(), 4);
        assert!(dec.unitarity_residual() < 1e-8);
        assert_eq!(dec.subspaces[0].dim(), 2);
        let e12 = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(principal_angle(&dec.subspaces[0].basis, &e12) < 0.2);

        let back = SubspaceDecomposition::from_text(&dec.to_text()).unwrap();
        assert_eq!(back.subspaces.len(), dec.subspaces.len());
        assert_eq!(back.residual, dec.residual);
        for (a, b) in back.subspaces.iter().zip(&dec.subspaces) {
            assert_eq!(a.basis, b.basis);
            assert_eq!(a.lambda_hat.to_bits(), b.lambda_hat.to_bits());
            assert_eq!(a.success, b.success);
        }
    }

    #[test]
    fn principal_angles() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let t = 0.3f64;
        let rot = DMatrix::from_column_slice(2, 1, &[t.cos(), t.sin()]);
        assert!((principal_angle(&e1, &rot) - t).abs() < 1e-12);
        let both = DMatrix::<f64>::identity(2, 2);
        assert_eq!(principal_angle(&e1, &both), std::f64::consts::FRAC_PI_2);
    }
}
