//! Median and median-of-means for real-valued samples.
//!
//! The block count is `b = ceil(ln(1/delta))`, blocks are contiguous runs of
//! the input in its given order, and the median is the lower median (the
//! smallest value that has at least `b/2` block means on each side).

use std::ops::Range;

use crate::error::{EstimateError, Result};

/// Lower median: the smallest `x` in `xs` with `#{x_k <= x} >= b/2` and
/// `#{x_k >= x} >= b/2`. Independent of input order.
pub fn median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(EstimateError::EmptySample);
    }
    let mut v = xs.to_vec();
    let k = v.len().div_ceil(2) - 1;
    let (_, m, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    Ok(*m)
}

/// Smallest confidence level accepted for `n` samples, `e^(1 - n/2)`.
pub fn min_delta(n: usize) -> f64 {
    (1.0 - n as f64 / 2.0).exp()
}

pub(crate) fn check_delta(delta: f64, n: usize) -> Result<()> {
    let lo = min_delta(n);
    // relative slack so that delta = exp(1 - n/2) computed elsewhere is accepted
    let ok = n >= 4 && delta.is_finite() && delta < 1.0 && delta >= lo * (1.0 - 1e-12);
    if ok {
        Ok(())
    } else {
        Err(EstimateError::DeltaOutOfRange { delta, n })
    }
}

/// `ceil(x)`, treating values within roundoff of an integer as that integer.
pub(crate) fn ceil_tolerant(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `b = ceil(ln(1/delta))` for `delta` in `[e^(1-n/2), 1)`; then `b <= n/2`.
pub fn choose_block_count(delta: f64, n: usize) -> Result<usize> {
    check_delta(delta, n)?;
    let b = ceil_tolerant((1.0 / delta).ln()).max(1.0) as usize;
    Ok(b.min(n / 2))
}

/// Contiguous partition of `0..n` into `b` blocks; the first `n mod b`
/// blocks get one extra element.
pub fn partition_indices(n: usize, b: usize) -> Result<Vec<Range<usize>>> {
    if b == 0 || 2 * b > n {
        return Err(EstimateError::InvalidBlockCount { n, b });
    }
    let base = n / b;
    let extra = n % b;
    let mut blocks = Vec::with_capacity(b);
    let mut start = 0;
    for i in 0..b {
        let len = base + usize::from(i < extra);
        blocks.push(start..start + len);
        start += len;
    }
    Ok(blocks)
}

/// Confidence level, block count and partition for one median-of-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct MomConfig {
    pub delta: f64,
    pub block_count: usize,
    pub partition: Vec<Range<usize>>,
}

impl MomConfig {
    pub fn new(delta: f64, n: usize) -> Result<Self> {
        let block_count = choose_block_count(delta, n)?;
        Ok(Self {
            delta,
            block_count,
            partition: partition_indices(n, block_count)?,
        })
    }

    /// Means of `xs` over each block of the partition.
    pub fn block_means(&self, xs: &[f64]) -> Vec<f64> {
        self.partition
            .iter()
            .map(|r| xs[r.clone()].iter().sum::<f64>() / r.len() as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarEstimate {
    pub value: f64,
    /// Deviation radius at level `delta`; only known when the variance is supplied.
    pub bound: Option<f64>,
    pub delta: f64,
    pub n: usize,
}

impl ScalarEstimate {
    /// Attach the deviation radius for a known variance.
    pub fn with_variance(mut self, variance: f64) -> Result<Self> {
        self.bound = Some(mom_error_bound(variance, self.n, self.delta)?);
        Ok(self)
    }
}

pub fn median_of_means(xs: &[f64], delta: f64) -> Result<ScalarEstimate> {
    let cfg = MomConfig::new(delta, xs.len())?;
    let value = median(&cfg.block_means(xs))?;
    Ok(ScalarEstimate {
        value,
        bound: None,
        delta,
        n: xs.len(),
    })
}

/// Median of block means for an explicit block count.
pub fn median_of_block_means(xs: &[f64], b: usize) -> Result<f64> {
    let blocks = partition_indices(xs.len(), b)?;
    let means: Vec<f64> = blocks
        .iter()
        .map(|r| xs[r.clone()].iter().sum::<f64>() / r.len() as f64)
        .collect();
    median(&means)
}

/// `2e * sqrt(2 Var (1 + ln(1/delta)) / n)`.
pub fn mom_error_bound(variance: f64, n: usize, delta: f64) -> Result<f64> {
    if !(variance >= 0.0) {
        return Err(EstimateError::InvalidParameter(format!(
            "variance must be nonnegative, got {variance}"
        )));
    }
    check_delta(delta, n)?;
    let e = std::f64::consts::E;
    Ok(2.0 * e * (2.0 * variance * (1.0 + (1.0 / delta).ln()) / n as f64).sqrt())
}
