//! Parameter bounds, normalization and Latin hypercube sampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SamplingError {
    #[error("bounds of component {index} are invalid: [{min}, {max}]")]
    InvalidBounds { index: usize, min: f64, max: f64 },
    #[error("component {index} = {value} lies outside [{min}, {max}]")]
    OutOfBounds { index: usize, value: f64, min: f64, max: f64 },
    #[error("expected {expected} components, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("at least one sample point is required")]
    Empty,
}

/// Axis-aligned box of admissible physical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    #[serde(default)]
    pub units: Vec<String>,
}

impl ParamBounds {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self, SamplingError> {
        let b = Self { min, max, units: Vec::new() };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.min.len() != self.max.len() {
            return Err(SamplingError::DimensionMismatch { expected: self.min.len(), found: self.max.len() });
        }
        if self.min.is_empty() {
            return Err(SamplingError::Empty);
        }
        for (index, (&min, &max)) in self.min.iter().zip(&self.max).enumerate() {
            if !(min.is_finite() && max.is_finite() && min < max) {
                return Err(SamplingError::InvalidBounds { index, min, max });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Maps a physical point into the unit hypercube.
pub fn normalize(p: &[f64], b: &ParamBounds) -> Result<Vec<f64>, SamplingError> {
    if p.len() != b.dim() {
        return Err(SamplingError::DimensionMismatch { expected: b.dim(), found: p.len() });
    }
    p.iter()
        .enumerate()
        .map(|(index, &value)| {
            let (min, max) = (b.min[index], b.max[index]);
            if !(value >= min && value <= max) {
                return Err(SamplingError::OutOfBounds { index, value, min, max });
            }
            Ok((value - min) / (max - min))
        })
        .collect()
}

pub fn denormalize(p_hat: &[f64], b: &ParamBounds) -> Vec<f64> {
    p_hat
        .iter()
        .enumerate()
        .map(|(i, &x)| b.min[i] + x * (b.max[i] - b.min[i]))
        .collect()
}

/// Euclidean distance in normalized space.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleRole {
    Train,
    Validation,
    Test,
}

/// Ordered normalized points drawn for one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub role: SampleRole,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the point closest to the hypercube center.
    pub fn closest_to_center(&self) -> Option<usize> {
        let c = vec![0.5; self.points.first()?.len()];
        self.nearest(&c)
    }

    /// Index of the point nearest to `p` (first one on ties).
    pub fn nearest(&self, p: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, q) in self.points.iter().enumerate() {
            let d = distance(p, q);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Number of random Latin hypercube candidates compared by the maximin rule.
pub const LHS_CANDIDATES: usize = 50;

/// Latin hypercube design with the largest minimum pairwise distance among
/// [`LHS_CANDIDATES`] random candidates.
pub fn lhs_sample(n_points: usize, n_p: usize, seed: u64, role: SampleRole) -> Result<SampleSet, SamplingError> {
    if n_points == 0 || n_p == 0 {
        return Err(SamplingError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for _ in 0..LHS_CANDIDATES {
        let cand = lhs_candidate(n_points, n_p, &mut rng);
        let score = min_pairwise_distance(&cand);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, cand));
        }
    }
    let (_, points) = best.expect("at least one candidate");
    Ok(SampleSet { points, role, seed })
}

fn lhs_candidate(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..d {
        perm.shuffle(rng);
        for (i, p) in pts.iter_mut().enumerate() {
            let u: f64 = rng.gen();
            p[k] = (perm[i] as f64 + u) / n as f64;
        }
    }
    pts
}

fn min_pairwise_distance(pts: &[Vec<f64>]) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d = d.min(distance(&pts[i], &pts[j]));
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bounds_map_to_unit_cube_corners() {
        let b = ParamBounds::new(vec![0.5, -1.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(normalize(&[0.5, -1.0], &b).unwrap(), vec![0.0, 0.0]);
        assert_eq!(normalize(&[2.0, 1.0], &b).unwrap(), vec![1.0, 1.0]);
        assert_eq!(denormalize(&[0.0, 0.0], &b), vec![0.5, -1.0]);
        assert_eq!(denormalize(&[1.0, 1.0], &b), vec![2.0, 1.0]);
    }

    #[test]
    fn table_one_rise_midpoint() {
        let t = 1.0e-3;
        let b = ParamBounds::new(vec![0.25 * t], vec![1.5 * t]).unwrap();
        let p = normalize(&[0.875 * t], &b).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_bounds_and_bad_boxes() {
        let b = ParamBounds::new(vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(normalize(&[1.5], &b), Err(SamplingError::OutOfBounds { .. })));
        assert!(matches!(ParamBounds::new(vec![1.0], vec![1.0]), Err(SamplingError::InvalidBounds { .. })));
        assert!(matches!(lhs_sample(0, 2, 1, SampleRole::Train), Err(SamplingError::Empty)));
    }

    #[test]
    fn single_point_design() {
        let s = lhs_sample(1, 2, 3, SampleRole::Test).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.points[0].iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn fourteen_points_are_stratified() {
        let s = lhs_sample(14, 3, 11, SampleRole::Train).unwrap();
        for k in 0..3 {
            let mut col: Vec<f64> = s.points.iter().map(|p| p[k]).collect();
            col.sort_by(f64::total_cmp);
            for (i, x) in col.iter().enumerate() {
                assert!(*x >= i as f64 / 14.0 && *x < (i + 1) as f64 / 14.0);
            }
        }
    }

    #[test]
    fn seeded_designs_repeat() {
        let a = lhs_sample(10, 2, 42, SampleRole::Train).unwrap();
        let b = lhs_sample(10, 2, 42, SampleRole::Train).unwrap();
        let c = lhs_sample(10, 2, 43, SampleRole::Train).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn distance_basics() {
        assert_eq!(distance(&[0.3, 0.2], &[0.3, 0.2]), 0.0);
        assert!((distance(&[0.0; 3], &[1.0; 3]) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn closest_to_center_picks_middle() {
        let s = SampleSet {
            points: vec![vec![0.1, 0.1], vec![0.45, 0.6], vec![0.9, 0.5]],
            role: SampleRole::Train,
            seed: 0,
        };
        assert_eq!(s.closest_to_center(), Some(1));
    }

    proptest! {
        #[test]
        fn round_trip(x in proptest::collection::vec(0.0f64..=1.0, 2)) {
            let b = ParamBounds::new(vec![0.8, -0.5], vec![2.0, 0.5]).unwrap();
            let back = normalize(&denormalize(&x, &b), &b).unwrap();
            for (a, c) in x.iter().zip(&back) {
                prop_assert!((a - c).abs() < 1e-14);
            }
        }

        #[test]
        fn normalization_is_order_preserving(a in 0.8f64..2.0, b in 0.8f64..2.0) {
            let bd = ParamBounds::new(vec![0.8], vec![2.0]).unwrap();
            let (na, nb) = (normalize(&[a], &bd).unwrap()[0], normalize(&[b], &bd).unwrap()[0]);
            prop_assert_eq!(a < b, na < nb);
        }

        #[test]
        fn stratified_for_any_seed(seed in 0u64..1000, n in 1usize..20) {
            let s = lhs_sample(n, 2, seed, SampleRole::Validation).unwrap();
            for k in 0..2 {
                let mut strata: Vec<usize> = s.points.iter().map(|p| (p[k] * n as f64).floor() as usize).collect();
                strata.sort_unstable();
                prop_assert_eq!(strata, (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn distance_is_symmetric(a in proptest::collection::vec(0.0f64..1.0, 3), b in proptest::collection::vec(0.0f64..1.0, 3)) {
            prop_assert_eq!(distance(&a, &b), distance(&b, &a));
        }
    }
}
