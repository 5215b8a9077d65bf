//! Box domains, Latin hypercube designs and restricted resampling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::target::Target;

/// Axis-aligned box `[a1,b1] x ... x [an,bn]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    bounds: Vec<(f64, f64)>,
}

impl BoxDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidInput("domain has no variables".into()));
        }
        for (i, &(a, b)) in bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidInput(format!(
                    "bound {i} is not an interval: [{a}, {b}]"
                )));
            }
        }
        Ok(BoxDomain { bounds })
    }

    /// Same interval on every axis.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi); n])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn bound(&self, i: usize) -> (f64, f64) {
        self.bounds[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.bounds)
                .all(|(&v, &(a, b))| v >= a && v <= b)
    }

    /// Restriction to the listed axes, in order.
    pub fn project(&self, vars: &[usize]) -> BoxDomain {
        BoxDomain {
            bounds: vars.iter().map(|&v| self.bounds[v]).collect(),
        }
    }
}

/// An `N x n` design plus optional responses.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub responses: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn responses(&self) -> &[f64] {
        self.responses.as_deref().unwrap_or(&[])
    }
}

/// Latin hypercube design: per axis, exactly one point in each of the
/// `n_points` equal-width strata.
pub fn lhs_sample(domain: &BoxDomain, n_points: usize, seed: u64) -> SampleSet {
    SampleSet {
        points: lhs_points(domain.bounds(), n_points, seed),
        responses: None,
    }
}

pub(crate) fn lhs_points(bounds: &[(f64, f64)], n_points: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(n_points >= 2, "a design needs at least two points");
    let mut rng = rng::rng(seed);
    let mut points = vec![vec![0.0; bounds.len()]; n_points];
    let mut strata: Vec<usize> = (0..n_points).collect();
    let n = n_points as f64;
    for (j, &(a, b)) in bounds.iter().enumerate() {
        strata.shuffle(&mut rng);
        let w = (b - a) / n;
        for (row, &k) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            // stay inside [a + k w, a + (k+1) w)
            let v = a + (k as f64 + u) * w;
            row[j] = v.min(a + (k as f64 + 1.0) * w).max(a + k as f64 * w).min(b);
        }
    }
    points
}

/// Uniform point at least 1% of each interval's width away from the bounds.
pub fn random_interior_point(domain: &BoxDomain, seed: u64) -> Vec<f64> {
    let mut rng = rng::rng(seed);
    interior_point(domain.bounds(), &mut rng)
}

pub(crate) fn interior_point(bounds: &[(f64, f64)], rng: &mut rng::Rng) -> Vec<f64> {
    bounds
        .iter()
        .map(|&(a, b)| {
            let m = 0.01 * (b - a);
            let u: f64 = rng.random();
            a + m + u * (b - a - 2.0 * m)
        })
        .collect()
}

/// LHS over the free variables with `fixed` pinned, evaluated with `f`.
pub fn sample_with_fixed<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    fixed: &BTreeMap<usize, f64>,
    n_points: usize,
    seed: u64,
) -> Result<SampleSet> {
    let n = domain.dim();
    for (&i, &v) in fixed {
        if i >= n {
            return Err(Error::InvalidInput(format!("fixed variable {i} out of range")));
        }
        let (a, b) = domain.bound(i);
        if !(v >= a && v <= b) {
            return Err(Error::InvalidInput(format!(
                "fixed value {v} for variable {i} outside [{a}, {b}]"
            )));
        }
    }
    let free: Vec<usize> = (0..n).filter(|i| !fixed.contains_key(i)).collect();
    if free.is_empty() {
        return Err(Error::InvalidInput("no free variable to sample".into()));
    }
    let sub = lhs_points(&domain.project(&free).bounds, n_points, seed);
    let mut points = Vec::with_capacity(n_points);
    let mut responses = Vec::with_capacity(n_points);
    for s in sub {
        let mut x = vec![0.0; n];
        for (&i, &v) in fixed {
            x[i] = v;
        }
        for (&i, v) in free.iter().zip(s) {
            x[i] = v;
        }
        responses.push(f.eval_checked(&x)?);
        points.push(x);
    }
    Ok(SampleSet {
        points,
        responses: Some(responses),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::FnTarget;

    fn occupancy(points: &[Vec<f64>], j: usize, a: f64, b: f64) -> Vec<usize> {
        let n = points.len();
        let mut bins = vec![0; n];
        for p in points {
            let k = (((p[j] - a) / (b - a)) * n as f64).floor() as usize;
            bins[k.min(n - 1)] += 1;
        }
        bins
    }

    #[test]
    fn one_point_per_unit_interval() {
        let d = BoxDomain::uniform(1, 0.0, 10.0).unwrap();
        let s = lhs_sample(&d, 10, 3);
        let mut xs: Vec<f64> = s.points.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        for (k, x) in xs.iter().enumerate() {
            assert!(*x >= k as f64 && *x < k as f64 + 1.0, "{x} not in [{k}, {})", k + 1);
        }
    }

    #[test]
    fn two_dim_histogram_all_ones() {
        let d = BoxDomain::new(vec![(-3.0, 3.0), (1.0, 4.0)]).unwrap();
        let s = lhs_sample(&d, 200, 11);
        assert!(occupancy(&s.points, 0, -3.0, 3.0).iter().all(|&c| c == 1));
        assert!(occupancy(&s.points, 1, 1.0, 4.0).iter().all(|&c| c == 1));
    }

    #[test]
    fn same_seed_same_design() {
        let d = BoxDomain::uniform(3, -1.0, 1.0).unwrap();
        assert_eq!(lhs_sample(&d, 17, 5), lhs_sample(&d, 17, 5));
        assert_ne!(lhs_sample(&d, 17, 5), lhs_sample(&d, 17, 6));
    }

    #[test]
    fn fixed_shift_is_additive() {
        let f = FnTarget::new(2, |x: &[f64]| x[0] + x[1]);
        let d = BoxDomain::uniform(2, 0.0, 2.0).unwrap();
        let fixed = BTreeMap::from([(1, 1.0)]);
        let s = sample_with_fixed(&f, &d, &fixed, 5, 1).unwrap();
        for (p, r) in s.points.iter().zip(s.responses()) {
            assert_eq!(p[1], 1.0);
            assert_eq!(*r, p[0] + 1.0);
        }
    }

    #[test]
    fn case1_slice_at_x1_zero() {
        let f = FnTarget::new(2, |x: &[f64]| 0.5 * x[0].exp() * (2.0 * x[1]).sin());
        let d = BoxDomain::uniform(2, -3.0, 3.0).unwrap();
        let s = sample_with_fixed(&f, &d, &BTreeMap::from([(0, 0.0)]), 40, 2).unwrap();
        for (p, r) in s.points.iter().zip(s.responses()) {
            assert!((r - 0.5 * (2.0 * p[1]).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn case9_one_dimensional_slice_is_finite() {
        let f = FnTarget::new(6, |x: &[f64]| {
            0.5 * (x[2] * x[3]).cos() / (x[0].exp() * x[1] * x[1]) * (1.5 * x[4] - 2.0 * x[5]).sin()
        });
        let d = BoxDomain::uniform(6, -3.0, 3.0).unwrap();
        let fixed: BTreeMap<usize, f64> =
            [(0, 0.3), (1, 1.7), (2, -0.4), (3, 2.2), (4, 0.9)].into_iter().collect();
        let s = sample_with_fixed(&f, &d, &fixed, 50, 9).unwrap();
        for (p, r) in s.points.iter().zip(s.responses()) {
            let direct = 0.5 * (p[2] * p[3]).cos() / (p[0].exp() * p[1] * p[1])
                * (1.5 * p[4] - 2.0 * p[5]).sin();
            assert!(r.is_finite());
            assert_eq!(*r, direct);
        }
    }

    #[test]
    fn eval_failure_reports_point() {
        let f = FnTarget::new(1, |x: &[f64]| x[0].ln());
        let d = BoxDomain::uniform(1, -1.0, 1.0).unwrap();
        let err = sample_with_fixed(&f, &d, &BTreeMap::new(), 20, 0).unwrap_err();
        assert!(matches!(err, Error::TargetEval { .. }));
    }

    #[test]
    fn interior_point_margin() {
        let d = BoxDomain::uniform(1, 0.0, 1.0).unwrap();
        for s in 0..200 {
            let p = random_interior_point(&d, s);
            assert!(p[0] >= 0.01 && p[0] <= 0.99);
        }
        assert_eq!(random_interior_point(&d, 4), random_interior_point(&d, 4));
        let d5 = BoxDomain::uniform(5, -3.0, 3.0).unwrap();
        let (a, b) = (random_interior_point(&d5, 1), random_interior_point(&d5, 2));
        assert!(a.iter().zip(&b).all(|(u, v)| u != v));
    }

    #[test]
    fn rejects_empty_interval() {
        assert!(BoxDomain::new(vec![(1.0, 1.0)]).is_err());
    }
}
