//! Hybrid global minimizer: differential evolution with a per-generation
//! low-dimensional simplex move on the incumbent, then a Nelder–Mead polish.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub bounds: Vec<(f64, f64)>,
    pub pop_size: usize,
    pub max_gens: usize,
    /// Stop once the best objective drops to this value.
    pub target_obj: f64,
    /// Differential weight.
    pub f_weight: f64,
    pub crossover: f64,
    /// Iterations of each per-generation simplex move.
    pub local_iters: usize,
    /// Iterations of the final polish.
    pub polish_iters: usize,
    /// Stop after this many generations without relative improvement
    /// (0 disables).
    pub stall_gens: usize,
}

impl OptConfig {
    /// Defaults for `d` parameters: box [-50, 50]^d, population 10 + 10d,
    /// 3 * population generations.
    pub fn for_dim(d: usize) -> Self {
        let pop_size = 10 + 10 * d;
        OptConfig {
            bounds: vec![(-50.0, 50.0); d],
            pop_size,
            max_gens: 3 * pop_size,
            target_obj: 0.0,
            f_weight: 0.7,
            crossover: 0.9,
            local_iters: 4 * d + 8,
            polish_iters: 400 * d.max(1),
            stall_gens: 25,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::InvalidInput("optimizer needs at least one parameter".into()));
        }
        if self.bounds.iter().any(|&(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(Error::InvalidInput(format!("bad optimizer bounds {:?}", self.bounds)));
        }
        if self.pop_size < 4 {
            return Err(Error::InvalidInput("population must hold at least 4 individuals".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub evaluations: u64,
    /// Best value of the initial population.
    pub initial_best: f64,
    /// Best value after each generation.
    pub history: Vec<f64>,
}

struct Objective<'a, F> {
    f: &'a F,
    bounds: &'a [(f64, f64)],
    evals: u64,
}

impl<F: Fn(&[f64]) -> f64> Objective<'_, F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        debug_assert!(x.iter().zip(self.bounds).all(|(v, (a, b))| v >= a && v <= b));
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, &(a, b)) in x.iter_mut().zip(self.bounds) {
            *v = if v.is_nan() { 0.5 * (a + b) } else { v.clamp(a, b) };
        }
    }
}

/// Minimize `f` over the box in `cfg`. Deterministic for a given seed.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, cfg: &OptConfig, seed: u64) -> Result<OptResult> {
    cfg.validate()?;
    let d = cfg.bounds.len();
    let mut r = rng::rng(seed);
    let mut obj = Objective { f: &f, bounds: &cfg.bounds, evals: 0 };

    let mut pop: Vec<Vec<f64>> = (0..cfg.pop_size)
        .map(|k| {
            cfg.bounds
                .iter()
                .map(|&(a, b)| {
                    if k % 2 == 0 {
                        r.random_range(a..=b)
                    } else {
                        // log-scaled offset from the centre: magnitudes 1e-3 .. half width
                        let c = 0.5 * (a + b);
                        let half = 0.5 * (b - a);
                        let mag = (half.ln() - r.random_range(0.0..(half.ln() + 3.0 * std::f64::consts::LN_10).max(1e-9))).exp();
                        let s = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                        (c + s * mag).clamp(a, b)
                    }
                })
                .collect()
        })
        .collect();
    let mut vals: Vec<f64> = pop.iter().map(|x| obj.call(x)).collect();
    let argmin = |v: &[f64]| {
        v.iter()
            .enumerate()
            .fold((0, v[0]), |m, (i, &x)| if x < m.1 { (i, x) } else { m })
            .0
    };
    let mut best = argmin(&vals);
    let initial_best = vals[best];
    let mut history = Vec::with_capacity(cfg.max_gens);
    let mut stalled = 0;

    for _ in 0..cfg.max_gens {
        if vals[best] <= cfg.target_obj || (cfg.stall_gens > 0 && stalled >= cfg.stall_gens) {
            break;
        }
        let before = vals[best];
        for i in 0..cfg.pop_size {
            let picks = sample(&mut r, cfg.pop_size - 1, 3);
            let pick = |k: usize| {
                let p = picks.index(k);
                if p >= i { p + 1 } else { p }
            };
            let (a, b, c) = (pick(0), pick(1), pick(2));
            let jr = r.random_range(0..d);
            let mut trial = pop[i].clone();
            // current-to-best on half of the moves, rand/1 on the rest
            let greedy = r.random_bool(0.5);
            for j in 0..d {
                if j == jr || r.random_bool(cfg.crossover) {
                    trial[j] = if greedy {
                        pop[i][j] + cfg.f_weight * (pop[best][j] - pop[i][j]) + cfg.f_weight * (pop[b][j] - pop[c][j])
                    } else {
                        pop[a][j] + cfg.f_weight * (pop[b][j] - pop[c][j])
                    };
                }
            }
            obj.clamp(&mut trial);
            let v = obj.call(&trial);
            if v <= vals[i] {
                pop[i] = trial;
                vals[i] = v;
                if v < vals[best] {
                    best = i;
                }
            }
        }
        // simplex move on a random coordinate subset of the incumbent
        let k = if d <= 2 { d } else { r.random_range(1..=d.min(3)) };
        let coords: Vec<usize> = sample(&mut r, d, k).into_vec();
        let step = 0.05 * r.random_range(0.01f64..1.0);
        let (x, v) = nelder_mead(&mut obj, &pop[best], vals[best], &coords, step, cfg.local_iters, cfg.target_obj);
        if v < vals[best] {
            pop[best] = x;
            vals[best] = v;
        }
        history.push(vals[best]);
        if vals[best] < before - 1e-9 * before.abs() {
            stalled = 0;
        } else {
            stalled += 1;
        }
    }

    let all: Vec<usize> = (0..d).collect();
    let (mut x, mut v) = (pop[best].clone(), vals[best]);
    if v > cfg.target_obj && v.is_finite() {
        for step in [0.02, 1e-3, 1e-5] {
            let (nx, nv) = nelder_mead(&mut obj, &x, v, &all, step, cfg.polish_iters, cfg.target_obj);
            if nv < v {
                x = nx;
                v = nv;
            }
        }
    }
    Ok(OptResult {
        best_params: x,
        best_value: v,
        evaluations: obj.evals,
        initial_best,
        history,
    })
}

/// Nelder–Mead over `coords` of `x0`; `step` is relative to each box width.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    obj: &mut Objective<'_, F>,
    x0: &[f64],
    f0: f64,
    coords: &[usize],
    step: f64,
    iters: usize,
    target: f64,
) -> (Vec<f64>, f64) {
    let k = coords.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for &c in coords {
        let (a, b) = obj.bounds[c];
        let mut x = x0.to_vec();
        let h = step * (b - a);
        x[c] = if x[c] + h <= b { x[c] + h } else { x[c] - h };
        obj.clamp(&mut x);
        let v = obj.call(&x);
        simplex.push((x, v));
    }
    let point = |obj: &Objective<'_, F>, cen: &[f64], w: &[f64], t: f64| {
        let mut x = w.to_vec();
        for &c in coords {
            x[c] = cen[c] + t * (w[c] - cen[c]);
        }
        obj.clamp(&mut x);
        x
    };
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 <= target {
            break;
        }
        // flat and collapsed: nothing left to gain
        let spread = simplex[k].1 - simplex[0].1;
        if spread <= 1e-13 * simplex[0].1.abs() {
            let diam = simplex[1..]
                .iter()
                .flat_map(|s| coords.iter().map(|&c| (s.0[c] - simplex[0].0[c]).abs() / (obj.bounds[c].1 - obj.bounds[c].0)))
                .fold(0.0, f64::max);
            if diam < 1e-10 {
                break;
            }
        }
        let mut cen = simplex[0].0.clone();
        for &c in coords {
            cen[c] = simplex[..k].iter().map(|s| s.0[c]).sum::<f64>() / k as f64;
        }
        let worst = simplex[k].0.clone();
        let xr = point(obj, &cen, &worst, -1.0);
        let fr = obj.call(&xr);
        if fr < simplex[0].1 {
            let xe = point(obj, &cen, &worst, -2.0);
            let fe = obj.call(&xe);
            simplex[k] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[k - 1].1 {
            simplex[k] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[k].1 {
                let x = point(obj, &cen, &worst, -0.5);
                let v = obj.call(&x);
                (x, v)
            } else {
                let x = point(obj, &cen, &worst, 0.5);
                let v = obj.call(&x);
                (x, v)
            };
            if fc < simplex[k].1.min(fr) {
                simplex[k] = (xc, fc);
            } else {
                let b0 = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    let x = point(obj, &b0, &s.0, 0.5);
                    let v = obj.call(&x);
                    *s = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_and_rosenbrock() {
        let cfg = OptConfig::for_dim(2);
        let r = minimize(|x| (x[0] - 3.0).powi(2) + (x[1] + 7.5).powi(2), &cfg, 1).unwrap();
        assert!(r.best_value < 1e-12, "{r:?}");
        let ros = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let r = minimize(ros, &cfg, 2).unwrap();
        assert!((r.best_params[0] - 1.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn contract_on_noisy_objective() {
        let mut cfg = OptConfig::for_dim(3);
        cfg.bounds = vec![(-2.0, 1.0), (0.0, 5.0), (-50.0, 50.0)];
        let f = |x: &[f64]| {
            assert!(x[0] >= -2.0 && x[0] <= 1.0 && x[1] >= 0.0 && x[1] <= 5.0);
            (5.0 * x[0]).sin() + x[1].sqrt() + (x[2] / 7.0).cos()
        };
        let a = minimize(f, &cfg, 9).unwrap();
        let b = minimize(f, &cfg, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.best_value <= a.initial_best);
        assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn non_finite_values_are_avoided() {
        let cfg = OptConfig::for_dim(1);
        let r = minimize(|x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) }, &cfg, 3).unwrap();
        assert!(r.best_value < 1e-10);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = OptConfig::for_dim(1);
        cfg.bounds[0] = (1.0, 1.0);
        assert!(minimize(|x| x[0], &cfg, 0).is_err());
    }
}
