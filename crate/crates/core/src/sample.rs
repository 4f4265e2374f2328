use crate::error::{EstimateError, Result};
use nalgebra::DMatrix;

/// An `n x d` batch of observations stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl SampleSet {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if data.len() != n * d {
            return Err(EstimateError::DimensionMismatch {
                expected: n * d,
                got: data.len(),
            });
        }
        Ok(Self { data, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(EstimateError::EmptySample);
        };
        let d = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            let row = row.as_ref();
            if row.len() != d {
                return Err(EstimateError::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            data,
            n: rows.len(),
            d,
        })
    }

    /// One-dimensional sample set.
    pub fn from_scalars(xs: &[f64]) -> Self {
        Self {
            data: xs.to_vec(),
            n: xs.len(),
            d: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        let d = self.d.max(1);
        self.data.chunks_exact(d).take(if self.d == 0 { 0 } else { self.n })
    }

    /// Rows `start..end` as a new sample set.
    pub fn slice(&self, start: usize, end: usize) -> SampleSet {
        SampleSet {
            data: self.data[start * self.d..end * self.d].to_vec(),
            n: end - start,
            d: self.d,
        }
    }

    /// Projections `w^T X_i` for every row.
    pub fn project(&self, w: &[f64]) -> Vec<f64> {
        debug_assert_eq!(w.len(), self.d);
        self.rows().map(|r| dot(r, w)).collect()
    }

    /// Coordinates of every row in the orthonormal basis given by the columns of `basis`.
    pub fn project_onto(&self, basis: &DMatrix<f64>) -> SampleSet {
        let k = basis.ncols();
        let mut data = Vec::with_capacity(self.n * k);
        for r in self.rows() {
            for j in 0..k {
                data.push(dot(r, basis.column(j).as_slice()));
            }
        }
        SampleSet {
            data,
            n: self.n,
            d: k,
        }
    }

    pub fn translate(&self, c: &[f64]) -> SampleSet {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| x + c[i % self.d])
            .collect();
        SampleSet {
            data,
            n: self.n,
            d: self.d,
        }
    }

    pub fn scale(&self, a: f64) -> SampleSet {
        SampleSet {
            data: self.data.iter().map(|x| a * x).collect(),
            n: self.n,
            d: self.d,
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (a, x) in m.iter_mut().zip(r) {
                *a += x;
            }
        }
        let n = self.n as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Per-coordinate column.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
