//! Bi-correlation test primitives.
//!
//! Constancy and linear-dependence verdicts on response vectors, and the
//! additive / multiplicative separability probes built on them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sampling::{interior_point, lhs_points, BoxDomain};
use crate::target::Target;

/// Detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub eps_const: f64,
    pub eps_dep: f64,
    pub trials: usize,
    /// Rows of each probe design.
    pub rows: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            eps_const: 1e-8,
            eps_dep: 1e-8,
            trials: 3,
            rows: 50,
        }
    }
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_const > 0.0 && self.eps_dep > 0.0) || self.trials < 2 || self.rows < 3 {
            return Err(Error::InvalidInput(format!("invalid tolerance {self:?}")));
        }
        Ok(())
    }
}

/// `max |v_i - mean(v)| <= eps_const * max(1, |mean(v)|)`.
pub fn is_constant(v: &[f64], tol: &Tolerance) -> bool {
    debug_assert!(v.len() >= 2);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let spread = v.iter().fold(0.0f64, |m, x| m.max((x - mean).abs()));
    spread <= tol.eps_const * mean.abs().max(1.0)
}

/// Ratio of the second to the first singular value of the column-normalized
/// matrix `[u v]` (means retained). Zero when either column is zero.
///
/// With unit columns the singular values are `sqrt(1 ± |cos θ|)`, so the
/// ratio equals `|u - v| / |u + v|` (smaller over larger), which is free of
/// the cancellation in `1 - |cos θ|`.
pub fn second_singular_ratio(u: &[f64], v: &[f64]) -> f64 {
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let mut minus = 0.0;
    let mut plus = 0.0;
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (a / nu, b / nv);
        minus += (a - b) * (a - b);
        plus += (a + b) * (a + b);
    }
    let (lo, hi) = if minus < plus { (minus, plus) } else { (plus, minus) };
    (lo / hi).sqrt()
}

fn norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
}

/// Rank-one test on `[u v]`; invariant under `u -> a u`, `v -> b v`.
pub fn is_linearly_dependent(u: &[f64], v: &[f64], tol: &Tolerance) -> bool {
    debug_assert_eq!(u.len(), v.len());
    second_singular_ratio(u, v) <= tol.eps_dep
}

/// Shared context of a split probe: which variables vary, which are the
/// complement, and which stay pinned.
struct Probe<'a> {
    domain: &'a BoxDomain,
    subset: Vec<usize>,
    complement: Vec<usize>,
    fixed: &'a BTreeMap<usize, f64>,
}

impl<'a> Probe<'a> {
    fn new(domain: &'a BoxDomain, subset: &[usize], fixed: &'a BTreeMap<usize, f64>) -> Result<Self> {
        let n = domain.dim();
        let mut subset = subset.to_vec();
        subset.sort_unstable();
        subset.dedup();
        if subset.is_empty() || subset.iter().any(|&i| i >= n || fixed.contains_key(&i)) {
            return Err(Error::InvalidInput(format!(
                "probe subset {subset:?} must be non-empty, in range and free"
            )));
        }
        let complement: Vec<usize> = (0..n)
            .filter(|i| !fixed.contains_key(i) && subset.binary_search(i).is_err())
            .collect();
        if complement.is_empty() {
            return Err(Error::InvalidInput(format!(
                "probe subset {subset:?} leaves no complement"
            )));
        }
        Ok(Probe {
            domain,
            subset,
            complement,
            fixed,
        })
    }

    fn base(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.domain.dim()];
        for (&i, &v) in self.fixed {
            x[i] = v;
        }
        x
    }

    fn draw(&self, vars: &[usize], rng: &mut rng::Rng) -> Vec<f64> {
        interior_point(self.domain.project(vars).bounds(), rng)
    }

    /// Responses with the subset over `rows` and the complement at `comp`.
    fn responses<T: Target + ?Sized>(&self, f: &T, rows: &[Vec<f64>], comp: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.base();
        for (&i, &v) in self.complement.iter().zip(comp) {
            x[i] = v;
        }
        rows.iter()
            .map(|r| {
                for (&i, &v) in self.subset.iter().zip(r) {
                    x[i] = v;
                }
                f.eval_checked(&x)
            })
            .collect()
    }
}

fn max_abs(vs: &[&[f64]]) -> f64 {
    vs.iter()
        .flat_map(|v| v.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn scaled(v: &[f64], scale: f64) -> Vec<f64> {
    if scale > 0.0 {
        v.iter().map(|x| x / scale).collect()
    } else {
        v.to_vec()
    }
}

/// True iff `f = g(subset) + h(complement)` on the probed context.
///
/// For each trial two random complement points are drawn; the difference
/// of the two response vectors over a shared LHS design of the subset must
/// be constant (relative to the response magnitude).
pub fn additive_split_test<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    subset: &[usize],
    fixed_ctx: &BTreeMap<usize, f64>,
    tol: &Tolerance,
    seed: u64,
) -> Result<bool> {
    let probe = Probe::new(domain, subset, fixed_ctx)?;
    let sub_bounds = domain.project(&probe.subset);
    for t in 0..tol.trials {
        let s = rng::derive(seed, t as u64);
        let rows = lhs_points(sub_bounds.bounds(), tol.rows, rng::derive(s, 0));
        let mut r = rng::rng(rng::derive(s, 1));
        let b1 = probe.draw(&probe.complement, &mut r);
        let b2 = probe.draw(&probe.complement, &mut r);
        let f1 = probe.responses(f, &rows, &b1)?;
        let f2 = probe.responses(f, &rows, &b2)?;
        let scale = max_abs(&[&f1, &f2]);
        let diff: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a - b).collect();
        if !is_constant(&scaled(&diff, scale), tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// True iff `f = g(subset) * h(complement) + k` on the probed context, where
/// `k` collects pinned additive contributions.
///
/// Responses over a shared design of the subset are taken at three
/// complement points `b0, b1, b2`. Differencing against a reference row of
/// the subset leaves `(g - g(a0)) h(b)`; differencing against `b0` leaves
/// `g (h(b) - h(b0))`. Both pairs must be non-constant and dependent: the
/// first rules out a pure function of the subset being added, the second a
/// pure function of the complement.
pub fn multiplicative_split_test<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    subset: &[usize],
    fixed_ctx: &BTreeMap<usize, f64>,
    tol: &Tolerance,
    seed: u64,
) -> Result<bool> {
    let probe = Probe::new(domain, subset, fixed_ctx)?;
    let sub_bounds = domain.project(&probe.subset);
    for t in 0..tol.trials {
        let s = rng::derive(seed, t as u64);
        let mut rows = lhs_points(sub_bounds.bounds(), tol.rows, rng::derive(s, 0));
        let mut r = rng::rng(rng::derive(s, 1));
        let bs: Vec<Vec<f64>> = (0..3).map(|_| probe.draw(&probe.complement, &mut r)).collect();
        rows.push(probe.draw(&probe.subset, &mut r));
        let fs = bs
            .iter()
            .map(|b| probe.responses(f, &rows, b))
            .collect::<Result<Vec<_>>>()?;
        let scale = max_abs(&[&fs[0], &fs[1], &fs[2]]);
        let n = rows.len() - 1;
        let by_subset: Vec<Vec<f64>> = fs[1..]
            .iter()
            .map(|fk| fk[..n].iter().map(|v| v - fk[n]).collect())
            .collect();
        let by_complement: Vec<Vec<f64>> = fs[1..]
            .iter()
            .map(|fk| fk[..n].iter().zip(&fs[0]).map(|(a, b)| a - b).collect())
            .collect();
        for pair in [&by_subset, &by_complement] {
            if pair.iter().any(|v| is_constant(&scaled(v, scale), tol)) {
                return Ok(false);
            }
            if !is_linearly_dependent(&pair[0], &pair[1], tol) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
