//! Finite gamma-covers of the unit sphere.
//!
//! `d = 1` is the two-point sphere, `d = 2` a uniform angular grid, and
//! `d >= 3` a greedy farthest-point net picked from a seeded pool of uniform
//! candidates. Every construction is checked against the `(4/gamma)^d`
//! cardinality cap and certified by random probes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{EstimateError, Result};
use crate::rng::{seeded, unit_vector};
use crate::sample::{distance, dot};

/// Probes used by [`build_cover`] to certify its own output.
pub const BUILD_PROBES: usize = 20_000;
pub const DEFAULT_PROBES: usize = 100_000;

/// Greedy selection stops once every candidate is within `gamma * (1 - GREEDY_MARGIN)`.
const GREEDY_MARGIN: f64 = 0.3;
const MAX_POOL: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    pub gamma: f64,
    pub dim: usize,
    pub directions: Vec<Vec<f64>>,
    pub certified: bool,
    pub probe_count: usize,
}

impl Cover {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Natural log of the cardinality cap `(4/gamma)^d`.
    pub fn ln_size_cap(dim: usize, gamma: f64) -> f64 {
        dim as f64 * (4.0 / gamma).ln()
    }

    /// Flat text form: `d gamma count`, then one direction per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {:.16e} {}\n", self.dim, self.gamma, self.len());
        for dir in &self.directions {
            write_vector(&mut out, dir);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| EstimateError::Parse("missing cover header".into()))?;
        let (dim, gamma, count) = parse_header(header)?;
        let directions = parse_vectors(&mut lines, count, dim)?;
        if lines.next().is_some() {
            return Err(EstimateError::Parse("trailing lines after cover".into()));
        }
        Ok(Cover {
            gamma,
            dim,
            directions,
            certified: false,
            probe_count: 0,
        })
    }
}

pub(crate) fn write_vector(out: &mut String, v: &[f64]) {
    let mut first = true;
    for x in v {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{x:.16e}");
    }
    out.push('\n');
}

pub(crate) fn parse_header(line: &str) -> Result<(usize, f64, usize)> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 3 {
        return Err(EstimateError::Parse(format!("bad header line: {line:?}")));
    }
    let bad = |what: &str| EstimateError::Parse(format!("bad {what} in header {line:?}"));
    Ok((
        f[0].parse().map_err(|_| bad("dimension"))?,
        f[1].parse().map_err(|_| bad("gamma"))?,
        f[2].parse().map_err(|_| bad("count"))?,
    ))
}

pub(crate) fn parse_vectors<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    count: usize,
    dim: usize,
) -> Result<Vec<Vec<f64>>> {
    (0..count)
        .map(|i| {
            let line = lines
                .next()
                .ok_or_else(|| EstimateError::Parse(format!("expected {count} vectors, got {i}")))?;
            let v = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| EstimateError::Parse(format!("bad number {t:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if v.len() != dim {
                return Err(EstimateError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            Ok(v)
        })
        .collect()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(EstimateError::InvalidParameter(format!(
            "gamma must lie in (0,1), got {gamma}"
        )))
    }
}

/// Number of grid points on the circle giving a `gamma`-cover.
pub fn circle_grid_size(gamma: f64) -> usize {
    let spacing = 2.0 * (gamma / 2.0).asin();
    crate::scalar_mom::ceil_tolerant(std::f64::consts::TAU / spacing) as usize
}

pub fn build_cover(d: usize, gamma: f64, seed: u64) -> Result<Cover> {
    check_gamma(gamma)?;
    if d == 0 {
        return Err(EstimateError::InvalidParameter("dimension must be >= 1".into()));
    }
    let directions = match d {
        1 => vec![vec![-1.0], vec![1.0]],
        2 => {
            let k = circle_grid_size(gamma);
            (0..k)
                .map(|i| {
                    let t = std::f64::consts::TAU * i as f64 / k as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect()
        }
        _ => return greedy_cover(d, gamma, seed),
    };
    let mut cover = Cover {
        gamma,
        dim: d,
        directions,
        certified: false,
        probe_count: 0,
    };
    check_cap(&cover)?;
    // probe stream 1 is reserved for construction-time certification
    certify(&mut cover, BUILD_PROBES, seed, 1);
    Ok(cover)
}

fn check_cap(cover: &Cover) -> Result<()> {
    if (cover.len() as f64).ln() > Cover::ln_size_cap(cover.dim, cover.gamma) {
        return Err(EstimateError::CoverConstruction {
            d: cover.dim,
            gamma: cover.gamma,
            pool: cover.len(),
        });
    }
    Ok(())
}

fn initial_pool(d: usize, gamma: f64) -> usize {
    let eta = gamma * GREEDY_MARGIN;
    let p = 10.0 * d as f64 * (2.0 / eta).powi(d as i32 - 1);
    (p.ceil() as usize).clamp(2_000, MAX_POOL)
}

fn greedy_cover(d: usize, gamma: f64, seed: u64) -> Result<Cover> {
    let mut pool = initial_pool(d, gamma);
    loop {
        let mut cover = greedy_from_pool(d, gamma, seed, pool)?;
        check_cap(&cover)?;
        if certify(&mut cover, BUILD_PROBES, seed, 1) {
            return Ok(cover);
        }
        if pool >= MAX_POOL {
            return Err(EstimateError::CoverConstruction { d, gamma, pool });
        }
        pool = (pool * 2).min(MAX_POOL);
    }
}

fn greedy_from_pool(d: usize, gamma: f64, seed: u64, pool: usize) -> Result<Cover> {
    let mut rng = seeded(seed, 0);
    let candidates: Vec<Vec<f64>> = (0..pool).map(|_| unit_vector(&mut rng, d)).collect();
    let threshold = gamma * (1.0 - GREEDY_MARGIN);
    let ln_cap = Cover::ln_size_cap(d, gamma);
    let mut min_dist = vec![f64::INFINITY; pool];
    let mut selected = Vec::new();
    let mut next = 0;
    loop {
        let chosen = &candidates[next];
        let mut far = (0, 0.0);
        for (i, c) in candidates.iter().enumerate() {
            let dist = distance(c, chosen);
            if dist < min_dist[i] {
                min_dist[i] = dist;
            }
            if min_dist[i] > far.1 {
                far = (i, min_dist[i]);
            }
        }
        selected.push(chosen.clone());
        if far.1 <= threshold {
            break;
        }
        if selected.len() >= pool || ((selected.len() + 1) as f64).ln() > ln_cap {
            return Err(EstimateError::CoverConstruction { d, gamma, pool });
        }
        next = far.0;
    }
    Ok(Cover {
        gamma,
        dim: d,
        directions: selected,
        certified: false,
        probe_count: 0,
    })
}

/// Index of the closest direction and its Euclidean distance.
pub fn nearest_direction(cover: &Cover, u: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, w) in cover.directions.iter().enumerate() {
        let c = dot(w, u);
        if c > best.1 {
            best = (i, c);
        }
    }
    // distance from coordinates, not from the cosine, to keep exact hits at 0
    (best.0, distance(&cover.directions[best.0], u))
}

/// Largest nearest-direction distance over `probes` seeded uniform probes.
pub fn max_probe_distance(cover: &Cover, probes: usize, seed: u64) -> f64 {
    probe_max(cover, probes, seed, 2)
}

const PROBE_CHUNK: usize = 4096;

fn probe_chunk_max(cover: &Cover, probes: usize, seed: u64, stream: u64, chunk: usize) -> f64 {
    let mut rng = seeded(seed ^ (stream << 56), chunk as u64);
    let len = PROBE_CHUNK.min(probes - chunk * PROBE_CHUNK);
    (0..len)
        .map(|_| nearest_direction(cover, &unit_vector(&mut rng, cover.dim)).1)
        .fold(0.0, f64::max)
}

fn probe_max(cover: &Cover, probes: usize, seed: u64, stream: u64) -> f64 {
    let chunks = probes.div_ceil(PROBE_CHUNK);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..chunks)
            .into_par_iter()
            .map(|c| probe_chunk_max(cover, probes, seed, stream, c))
            .reduce(|| 0.0, f64::max)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..chunks)
            .map(|c| probe_chunk_max(cover, probes, seed, stream, c))
            .fold(0.0, f64::max)
    }
}

fn certify(cover: &mut Cover, probes: usize, seed: u64, stream: u64) -> bool {
    let ok = probe_max(cover, probes, seed, stream) <= cover.gamma;
    cover.certified = ok;
    cover.probe_count = probes;
    ok
}

/// Checks `probes` uniform probes against the covering radius and records the result.
pub fn verify_cover(cover: &mut Cover, probes: usize, seed: u64) -> bool {
    certify(cover, probes.max(1), seed, 2)
}

/// Process-wide cache of covers keyed by `(d, gamma, seed)`.
pub fn cached_cover(d: usize, gamma: f64, seed: u64) -> Result<Arc<Cover>> {
    type Key = (usize, u64, u64);
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<Cover>>>> = OnceLock::new();
    let key = (d, gamma.to_bits(), seed);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(c) = cache.lock().expect("cover cache poisoned").get(&key) {
        return Ok(Arc::clone(c));
    }
    // built outside the lock; a racing builder produces the identical cover
    let cover = Arc::new(build_cover(d, gamma, seed)?);
    cache
        .lock()
        .expect("cover cache poisoned")
        .entry(key)
        .or_insert_with(|| Arc::clone(&cover));
    Ok(cover)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_cover() {
        let mut c = build_cover(1, 0.3, 0).unwrap();
        assert_eq!(c.directions, vec![vec![-1.0], vec![1.0]]);
        assert!(verify_cover(&mut c, 1000, 5));
        assert_eq!(nearest_direction(&c, &[-1.0]), (0, 0.0));
    }

    #[test]
    fn circle_grid_sizes() {
        // ceil(2 pi / (2 asin(1/4)))
        let expected = (std::f64::consts::TAU / (2.0 * 0.25f64.asin())).ceil() as usize;
        assert_eq!(expected, 13);
        let c = build_cover(2, 0.5, 0).unwrap();
        assert_eq!(c.len(), 13);
        assert!(c.len() <= 64);
        assert!(c.certified);
        assert_eq!(build_cover(2, 0.01, 0).unwrap().len(), 629);
    }

    #[test]
    fn grid_verifies_and_gap_is_detected() {
        let mut c = build_cover(2, 0.5, 0).unwrap();
        assert!(verify_cover(&mut c, DEFAULT_PROBES, 11));
        assert_eq!(c.probe_count, DEFAULT_PROBES);

        let mut fine = build_cover(2, 0.05, 0).unwrap();
        fine.directions.drain(7..9);
        assert!(!verify_cover(&mut fine, DEFAULT_PROBES, 11));
        assert!(!fine.certified);
    }

    #[test]
    fn nearest_direction_midpoint_chord() {
        let c = build_cover(2, 0.5, 0).unwrap();
        let theta = std::f64::consts::TAU / c.len() as f64;
        let mid = [(theta / 2.0).cos(), (theta / 2.0).sin()];
        let (_, dist) = nearest_direction(&c, &mid);
        assert!((dist - 2.0 * (theta / 4.0).sin()).abs() < 1e-12);
        let (i, dist) = nearest_direction(&c, &c.directions[5].clone());
        assert_eq!((i, dist), (5, 0.0));
    }

    #[test]
    fn greedy_covers_respect_cap_and_radius() {
        for (d, gamma) in [(3, 0.5), (3, 0.25), (4, 0.5)] {
            let c = build_cover(d, gamma, 3).unwrap();
            assert!((c.len() as f64).ln() <= Cover::ln_size_cap(d, gamma));
            for w in &c.directions {
                assert!((crate::sample::norm(w) - 1.0).abs() < 1e-12);
            }
            assert!(max_probe_distance(&c, DEFAULT_PROBES, 99) <= gamma, "d={d} gamma={gamma}");
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_cover(3, 0.5, 42).unwrap();
        let b = build_cover(3, 0.5, 42).unwrap();
        assert_eq!(a, b);
        let c = build_cover(3, 0.5, 43).unwrap();
        assert_ne!(a.directions, c.directions);
    }

    #[test]
    fn invalid_gamma() {
        assert!(build_cover(2, 0.0, 0).is_err());
        assert!(build_cover(2, 1.0, 0).is_err());
        assert!(build_cover(0, 0.5, 0).is_err());
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let c = build_cover(3, 0.5, 1).unwrap();
        let back = Cover::from_text(&c.to_text()).unwrap();
        assert_eq!(back.dim, c.dim);
        assert_eq!(back.gamma.to_bits(), c.gamma.to_bits());
        for (a, b) in back.directions.iter().zip(&c.directions) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert!(c.to_text().starts_with("3 5.0000000000000000e-1 "));
        assert!(Cover::from_text("2 0.5 3\n1 0\n0 1\n").is_err());
    }
}
