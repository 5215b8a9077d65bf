//! Factor detection inside each minimal block: multiplicative partition of
//! the non-repeated variables, block membership and partition of the
//! repeated variables.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bict::{is_constant, is_linearly_dependent, multiplicative_split_test, scaled, Tolerance};
use crate::blocks::{combinations, GSStructure};
use crate::error::{Error, Result};
use crate::rng;
use crate::sampling::{interior_point, lhs_points, BoxDomain};
use crate::target::Target;

/// Reading of the dependence conditions on the four sample groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Separable iff `f^A ∥ f^B` and `f^C ∥ f^D`.
    #[default]
    Dependent,
    /// Separable iff both pairs are linearly independent.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    PresentAndSeparable,
    Absent,
    NotSeparable,
}

/// Difference vectors of the four sampling groups. `c`/`d` are empty when
/// the test set covers every repeated variable.
#[derive(Debug, Clone, PartialEq)]
pub struct FourGroupSamples {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    /// Largest raw response seen while sampling.
    pub scale: f64,
}

/// Samples the four groups for `test_set ⊆ X^r` and block `block`.
///
/// A and B vary the test set with the rest of `X^r` and the other blocks
/// pinned at two points `x_F`, `x_F'`; C and D vary the rest of `X^r` with the
/// test set pinned at `x_F`, `x_F'`. Each vector is the difference between two
/// settings of the block's non-repeated variables, which cancels every other
/// block.
pub fn sample_four_groups<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    structure: &GSStructure,
    block: usize,
    test_set: &[usize],
    rows: usize,
    seed: u64,
) -> Result<FourGroupSamples> {
    let own = &structure
        .blocks
        .get(block)
        .ok_or_else(|| Error::InvalidInput(format!("no block {block}")))?
        .nonrepeated;
    if test_set.is_empty() || test_set.iter().any(|v| !structure.repeated.contains(v)) {
        return Err(Error::InvalidInput(format!("test set {test_set:?} is not a subset of X^r")));
    }
    let rest: Vec<usize> = structure.repeated.iter().copied().filter(|v| !test_set.contains(v)).collect();
    let mut r = rng::rng(rng::derive(seed, 0));
    let xf = interior_point(domain.bounds(), &mut r);
    let xf2 = interior_point(domain.bounds(), &mut r);
    let xi1 = interior_point(domain.bounds(), &mut r);
    let xi2 = interior_point(domain.bounds(), &mut r);
    let mut scale = 0.0f64;

    let mut group = |vary: &[usize], pin: &[f64]| -> Result<Vec<f64>> {
        if vary.is_empty() {
            return Ok(Vec::new());
        }
        let design = lhs_points(domain.project(vary).bounds(), rows, rng::derive_path(seed, &[1, vary[0] as u64]));
        design
            .iter()
            .map(|row| {
                let mut x = pin.to_vec();
                for (&v, &val) in vary.iter().zip(row) {
                    x[v] = val;
                }
                for &v in own {
                    x[v] = xi1[v];
                }
                let f1 = f.eval_checked(&x)?;
                for &v in own {
                    x[v] = xi2[v];
                }
                let f2 = f.eval_checked(&x)?;
                scale = scale.max(f1.abs()).max(f2.abs());
                Ok(f1 - f2)
            })
            .collect()
    };
    let a = group(test_set, &xf)?;
    let b = group(test_set, &xf2)?;
    let c = group(&rest, &xf)?;
    let d = group(&rest, &xf2)?;
    let g = FourGroupSamples { a, b, c, d, scale };
    for (name, v) in [("A", &g.a), ("B", &g.b), ("C", &g.c), ("D", &g.d)] {
        if !v.is_empty() && v.iter().all(|x| x.abs() <= 1e-6 * g.scale) {
            return Err(Error::DegenerateContext(format!(
                "group {name} vanishes for block {block}, test set {test_set:?}"
            )));
        }
    }
    Ok(g)
}

fn mixed_constancy(g: &FourGroupSamples, tol: &Tolerance) -> bool {
    is_constant(&scaled(&g.a, g.scale), tol) != is_constant(&scaled(&g.b, g.scale), tol)
}

/// Verdict on whether the test set forms a separable factor of the block.
pub fn repeated_factor_membership(groups: &FourGroupSamples, tol: &Tolerance, polarity: Polarity) -> Verdict {
    let konst = |v: &[f64]| is_constant(&scaled(v, groups.scale), tol);
    let (ca, cb) = (konst(&groups.a), konst(&groups.b));
    if ca && cb {
        return Verdict::Absent;
    }
    if ca || cb {
        return Verdict::NotSeparable;
    }
    let dep_ab = is_linearly_dependent(&groups.a, &groups.b, tol);
    let dep_cd = groups.c.is_empty() || is_linearly_dependent(&groups.c, &groups.d, tol);
    let separable = match polarity {
        Polarity::Dependent => dep_ab && dep_cd,
        Polarity::Independent => !dep_ab && (groups.c.is_empty() || !dep_cd),
    };
    if separable {
        Verdict::PresentAndSeparable
    } else {
        Verdict::NotSeparable
    }
}

const REDRAWS: usize = 3;

/// Verdict agreed across `tol.trials` samplings; degenerate contexts are
/// redrawn up to three times.
fn agreed_verdict<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    structure: &GSStructure,
    block: usize,
    test_set: &[usize],
    tol: &Tolerance,
    polarity: Polarity,
    seed: u64,
) -> Result<Verdict> {
    let mut verdict = None;
    for t in 0..tol.trials {
        let mut attempt = 0;
        let v = loop {
            let s = rng::derive_path(seed, &[t as u64, attempt as u64]);
            let g = sample_four_groups(f, domain, structure, block, test_set, tol.rows, s);
            let degenerate = match &g {
                Err(Error::DegenerateContext(_)) => true,
                Ok(g) => mixed_constancy(g, tol),
                Err(_) => false,
            };
            if !degenerate {
                break repeated_factor_membership(&g?, tol, polarity);
            }
            attempt += 1;
            if attempt > REDRAWS {
                return Err(match g {
                    Err(e) => e,
                    Ok(_) => Error::DegenerateContext(format!(
                        "block {block}, test set {test_set:?}: groups A and B disagree on constancy"
                    )),
                });
            }
        };
        match verdict {
            Some(prev) if prev != v => {
                return Err(Error::Structure(format!(
                    "block {block}, test set {test_set:?}: verdicts {prev:?} and {v:?} across trials"
                )))
            }
            _ => verdict = Some(v),
        }
    }
    Ok(verdict.expect("at least one trial"))
}

/// Partition of the block's repeated variables into factors, after finding
/// which repeated variables the block involves at all.
pub fn detect_repeated_factors<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    structure: &GSStructure,
    block: usize,
    tol: &Tolerance,
    polarity: Polarity,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let mut members = Vec::new();
    for &r in &structure.repeated {
        let v = agreed_verdict(f, domain, structure, block, &[r], tol, polarity, rng::derive_path(seed, &[0, r as u64]))?;
        if v != Verdict::Absent {
            members.push(r);
        }
    }
    let mut remaining = members;
    let mut factors = Vec::new();
    let mut k = 1;
    let mut probe = 0u64;
    'outer: while 2 * k <= remaining.len() {
        for subset in combinations(&remaining, k) {
            probe += 1;
            let v = agreed_verdict(f, domain, structure, block, &subset, tol, polarity, rng::derive_path(seed, &[1, probe]))?;
            if v == Verdict::PresentAndSeparable {
                remaining.retain(|x| !subset.contains(x));
                factors.push(subset);
                continue 'outer;
            }
        }
        k += 1;
    }
    if !remaining.is_empty() {
        factors.push(remaining);
    }
    factors.sort();
    Ok(factors)
}

/// Finest multiplicative partition of the block's non-repeated variables,
/// with `X^r` and every other block pinned.
pub fn detect_nonrepeated_factors<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    structure: &GSStructure,
    block: usize,
    tol: &Tolerance,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let own = structure
        .blocks
        .get(block)
        .ok_or_else(|| Error::InvalidInput(format!("no block {block}")))?
        .nonrepeated
        .clone();
    if own.len() == 1 {
        return Ok(vec![own]);
    }
    let p = interior_point(domain.bounds(), &mut rng::rng(rng::derive(seed, 0)));
    let ctx: BTreeMap<usize, f64> = (0..structure.n).filter(|v| !own.contains(v)).map(|v| (v, p[v])).collect();
    let mut remaining = own;
    let mut factors = Vec::new();
    let mut k = 1;
    let mut probe = 0u64;
    'outer: while 2 * k <= remaining.len() {
        for subset in combinations(&remaining, k) {
            probe += 1;
            if multiplicative_split_test(f, domain, &subset, &ctx, tol, rng::derive(seed, probe))? {
                remaining.retain(|x| !subset.contains(x));
                factors.push(subset);
                continue 'outer;
            }
        }
        k += 1;
    }
    factors.push(remaining);
    factors.sort();
    Ok(factors)
}

/// Fills the factor lists of every block.
pub fn detect_factors<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    structure: &GSStructure,
    tol: &Tolerance,
    polarity: Polarity,
    seed: u64,
) -> Result<GSStructure> {
    let filled = (0..structure.blocks.len())
        .into_par_iter()
        .map(|i| -> Result<_> {
            let mut b = structure.blocks[i].clone();
            if b.inactive {
                b.nonrepeated_factors = b.nonrepeated.iter().map(|&v| vec![v]).collect();
                return Ok(b);
            }
            b.nonrepeated_factors = detect_nonrepeated_factors(f, domain, structure, i, tol, rng::derive_path(seed, &[0, i as u64]))?;
            if !structure.repeated.is_empty() {
                b.repeated_factors =
                    detect_repeated_factors(f, domain, structure, i, tol, polarity, rng::derive_path(seed, &[1, i as u64]))?;
            }
            b.has_repeated = !b.repeated_factors.is_empty();
            Ok(b)
        })
        .collect::<Result<Vec<_>>>()?;
    let out = GSStructure { blocks: filled, ..structure.clone() };
    for &r in &out.repeated {
        let owners = out.blocks.iter().filter(|b| b.repeated_vars().contains(&r)).count();
        if owners < 2 {
            return Err(Error::Structure(format!("repeated variable {r} appears in {owners} block(s)")));
        }
    }
    out.validate()?;
    Ok(out)
}
