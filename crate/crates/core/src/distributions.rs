//! Seeded samplers with exact ground truth.
//!
//! Every kind draws a standardized vector `Z` (mean 0, covariance `I`) and
//! returns `X = mean + shape * Z`, so the true covariance is
//! `shape * shape^T` for all kinds. The directional kurtosis constant `K`
//! bounds `E[((X - mu)^T v)^4] / (v^T Sigma v)^2` over unit `v`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, LogNormal, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EstimateError, Result};
use crate::rng::{seeded, unit_vector, Rng};
use crate::sample::{dot, SampleSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kind {
    Gaussian,
    /// Multivariate Student t with `nu` degrees of freedom (shared scale mixing).
    StudentT { nu: f64 },
    /// Independent centered Pareto(`alpha`) coordinates, mixed by the shape.
    ParetoProduct { alpha: f64 },
    /// Independent centered lognormal coordinates with log-scale `sigma`.
    LogNormal { sigma: f64 },
    /// `(1 - rate) N(0, S) + rate N(0, scale^2 S)`.
    ContaminatedGaussian { rate: f64, scale: f64 },
}

impl Kind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kind::Gaussian => Ok(()),
            Kind::StudentT { nu } if !(nu > 4.0) => Err(EstimateError::NoFourthMoment(format!(
                "student_t needs nu > 4, got {nu}"
            ))),
            Kind::ParetoProduct { alpha } if !(alpha > 4.0) => Err(EstimateError::NoFourthMoment(
                format!("pareto needs alpha > 4, got {alpha}"),
            )),
            Kind::LogNormal { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                EstimateError::InvalidParameter(format!("lognormal needs sigma > 0, got {sigma}")),
            ),
            Kind::ContaminatedGaussian { rate, scale }
                if !((0.0..=1.0).contains(&rate) && scale > 0.0 && scale.is_finite()) =>
            {
                Err(EstimateError::InvalidParameter(format!(
                    "contaminated needs rate in [0,1] and scale > 0, got rate={rate} scale={scale}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Directional kurtosis constant for this kind, independent of the shape.
    pub fn kurtosis(&self) -> f64 {
        match *self {
            Kind::Gaussian => 3.0,
            Kind::StudentT { nu } => 3.0 * (nu - 2.0) / (nu - 4.0),
            Kind::ParetoProduct { alpha } => {
                let a = alpha;
                let excess = 6.0 * (a.powi(3) + a.powi(2) - 6.0 * a - 2.0) / (a * (a - 3.0) * (a - 4.0));
                (3.0 + excess).max(3.0)
            }
            Kind::LogNormal { sigma } => {
                let s2 = sigma * sigma;
                let m4 = (4.0 * s2).exp() + 2.0 * (3.0 * s2).exp() + 3.0 * (2.0 * s2).exp() - 3.0;
                m4.max(3.0)
            }
            Kind::ContaminatedGaussian { rate, scale } => {
                let second = 1.0 - rate + rate * scale.powi(2);
                3.0 * (1.0 - rate + rate * scale.powi(4)) / (second * second)
            }
        }
    }

    /// Product kinds report `max(3, E Z^4)`, which is only attained along
    /// directions that isolate one coordinate.
    pub fn kurtosis_is_upper_bound(&self) -> bool {
        matches!(self, Kind::ParetoProduct { .. } | Kind::LogNormal { .. })
    }

    fn draw_standard(&self, rng: &mut Rng, d: usize, out: &mut Vec<f64>) {
        match *self {
            Kind::Gaussian => out.extend((0..d).map(|_| normal(rng))),
            Kind::StudentT { nu } => {
                let w: f64 = ChiSquared::new(nu).expect("validated").sample(rng);
                let f = ((nu - 2.0) / w).sqrt();
                out.extend((0..d).map(|_| f * normal(rng)));
            }
            Kind::ParetoProduct { alpha } => {
                let p = Pareto::new(1.0, alpha).expect("validated");
                let mean = alpha / (alpha - 1.0);
                let sd = (alpha / ((alpha - 1.0).powi(2) * (alpha - 2.0))).sqrt();
                out.extend((0..d).map(|_| (p.sample(rng) - mean) / sd));
            }
            Kind::LogNormal { sigma } => {
                let l = LogNormal::new(0.0, sigma).expect("validated");
                let s2 = sigma * sigma;
                let mean = (s2 / 2.0).exp();
                let sd = ((s2.exp() - 1.0) * s2.exp()).sqrt();
                out.extend((0..d).map(|_| (l.sample(rng) - mean) / sd));
            }
            Kind::ContaminatedGaussian { rate, scale } => {
                let norm = (1.0 - rate + rate * scale * scale).sqrt();
                let s = if rng.random::<f64>() < rate { scale } else { 1.0 };
                let f = s / norm;
                out.extend((0..d).map(|_| f * normal(rng)));
            }
        }
    }
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Kind::Gaussian => write!(f, "gaussian"),
            Kind::StudentT { nu } => write!(f, "student_t:{nu}"),
            Kind::ParetoProduct { alpha } => write!(f, "pareto:{alpha}"),
            Kind::LogNormal { sigma } => write!(f, "lognormal:{sigma}"),
            Kind::ContaminatedGaussian { rate, scale } => write!(f, "contaminated:{rate}:{scale}"),
        }
    }
}

impl FromStr for Kind {
    type Err = EstimateError;

    /// `gaussian`, `student_t:<nu>`, `pareto:<alpha>`, `lognormal:<sigma>`,
    /// `contaminated:<rate>:<scale>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| EstimateError::Parse(format!("missing parameter in {s:?}")))?
                .parse()
                .map_err(|_| EstimateError::Parse(format!("bad number in {s:?}")))
        };
        let kind = match (parts[0], parts.len()) {
            ("gaussian", 1) => Kind::Gaussian,
            ("student_t", 2) => Kind::StudentT { nu: num(1)? },
            ("pareto" | "pareto_product", 2) => Kind::ParetoProduct { alpha: num(1)? },
            ("lognormal", 2) => Kind::LogNormal { sigma: num(1)? },
            ("contaminated" | "contaminated_gaussian", 3) => Kind::ContaminatedGaussian {
                rate: num(1)?,
                scale: num(2)?,
            },
            _ => return Err(EstimateError::Parse(format!("unknown distribution {s:?}"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    pub kind: Kind,
    pub mean: Vec<f64>,
    pub shape: DMatrix<f64>,
    pub true_cov: DMatrix<f64>,
    pub kurtosis: f64,
}

/// Symmetric PSD square root.
pub fn psd_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = cov.nrows();
    if cov.ncols() != d {
        return Err(EstimateError::DimensionMismatch {
            expected: d,
            got: cov.ncols(),
        });
    }
    if (cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
        return Err(EstimateError::InvalidParameter("covariance is not symmetric".into()));
    }
    let eig = cov.clone().symmetric_eigen();
    let floor = -1e-12 * cov.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < floor) {
        return Err(EstimateError::InvalidParameter("covariance is not PSD".into()));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let mut r = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    r = (&r + r.transpose()) * 0.5;
    Ok(r)
}

impl DistributionSpec {
    pub fn new(kind: Kind, mean: Vec<f64>, shape: DMatrix<f64>) -> Result<Self> {
        kind.validate()?;
        let d = mean.len();
        if d == 0 {
            return Err(EstimateError::InvalidParameter("dimension must be >= 1".into()));
        }
        if shape.nrows() != d || shape.ncols() != d {
            return Err(EstimateError::DimensionMismatch {
                expected: d,
                got: shape.nrows(),
            });
        }
        let true_cov = &shape * shape.transpose();
        Ok(Self {
            kind,
            mean,
            shape,
            true_cov,
            kurtosis: kind.kurtosis(),
        })
    }

    /// Shape chosen as the symmetric square root of `cov`.
    pub fn with_covariance(kind: Kind, mean: Vec<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(EstimateError::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        let mut spec = Self::new(kind, mean, psd_sqrt(cov)?)?;
        spec.true_cov = cov.clone();
        Ok(spec)
    }

    /// Zero mean, diagonal covariance.
    pub fn with_covariance_diag(kind: Kind, diag: &[f64]) -> Result<Self> {
        let cov = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
        Self::with_covariance(kind, vec![0.0; diag.len()], &cov)
    }

    pub fn isotropic(kind: Kind, d: usize) -> Result<Self> {
        Self::with_covariance_diag(kind, &vec![1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn trace(&self) -> f64 {
        self.true_cov.trace()
    }

    pub fn lambda_max(&self) -> f64 {
        self.true_cov
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |a, &l| a.max(l))
    }

    pub fn label(&self) -> String {
        self.kind.to_string()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        self.sample_stream(n, seed, 0)
    }

    /// Draws on a given stream of `seed`; distinct trials use distinct streams.
    pub fn sample_stream(&self, n: usize, seed: u64, stream: u64) -> Result<SampleSet> {
        let z = sample_standard(self.kind, self.dim(), n, seed, stream)?;
        Ok(self.push_forward(&z))
    }

    /// `mean + shape * z` row by row.
    pub fn push_forward(&self, z: &SampleSet) -> SampleSet {
        let d = self.dim();
        let mut data = Vec::with_capacity(z.len() * d);
        for row in z.rows() {
            for i in 0..d {
                let mut acc = self.mean[i];
                for j in 0..d {
                    acc += self.shape[(i, j)] * row[j];
                }
                data.push(acc);
            }
        }
        SampleSet::new(data, z.len(), d).expect("sizes match")
    }
}

/// `n` standardized draws of kind `kind` in dimension `d`.
pub fn sample_standard(kind: Kind, d: usize, n: usize, seed: u64, stream: u64) -> Result<SampleSet> {
    kind.validate()?;
    if n == 0 {
        return Err(EstimateError::EmptySample);
    }
    let mut rng = seeded(seed, stream);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        kind.draw_standard(&mut rng, d, &mut data);
    }
    SampleSet::new(data, n, d)
}

pub fn sample(spec: &DistributionSpec, n: usize, seed: u64) -> Result<SampleSet> {
    spec.sample(n, seed)
}

pub fn kurtosis_constant(spec: &DistributionSpec) -> f64 {
    spec.kurtosis
}

/// Largest ratio of empirical fourth central moment to `(v^T Sigma v)^2` over
/// seeded random unit directions. Degenerate directions count as zero.
pub fn empirical_kurtosis_check(
    samples: &SampleSet,
    spec: &DistributionSpec,
    directions: usize,
    seed: u64,
) -> f64 {
    let d = samples.dim();
    let mut rng = seeded(seed, 0);
    let mean = samples.mean();
    let mut worst = 0.0f64;
    for _ in 0..directions {
        let v = unit_vector(&mut rng, d);
        let var = {
            let sv = &spec.true_cov * DVector::from_column_slice(&v);
            dot(sv.as_slice(), &v)
        };
        if var <= 0.0 {
            continue;
        }
        let center = dot(&mean, &v);
        let m4 = samples
            .rows()
            .map(|r| (dot(r, &v) - center).powi(4))
            .sum::<f64>()
            / samples.len() as f64;
        worst = worst.max(m4 / (var * var));
    }
    worst
}
