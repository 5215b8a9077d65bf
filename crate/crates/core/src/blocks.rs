//! Minimal-block detection: the repeated-variable set and the non-repeated
//! variables of each additive block.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bict::{additive_split_test, multiplicative_split_test, Tolerance};
use crate::error::{Error, Result};
use crate::rng;
use crate::sampling::{interior_point, lhs_points, BoxDomain};
use crate::target::Target;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub nonrepeated: Vec<usize>,
    pub nonrepeated_factors: Vec<Vec<usize>>,
    pub repeated_factors: Vec<Vec<usize>>,
    pub has_repeated: bool,
    /// The target does not depend on this block's variables.
    #[serde(default)]
    pub inactive: bool,
}

impl BlockStructure {
    pub fn new(nonrepeated: Vec<usize>) -> Self {
        BlockStructure {
            nonrepeated,
            nonrepeated_factors: Vec::new(),
            repeated_factors: Vec::new(),
            has_repeated: false,
            inactive: false,
        }
    }

    /// Repeated variables taking part in this block.
    pub fn repeated_vars(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.repeated_factors.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn factor_count(&self) -> usize {
        self.nonrepeated_factors.len() + self.repeated_factors.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GSStructure {
    pub n: usize,
    pub repeated: Vec<usize>,
    pub blocks: Vec<BlockStructure>,
}

impl GSStructure {
    pub fn l(&self) -> usize {
        self.repeated.len()
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn factor_count(&self) -> usize {
        self.blocks.iter().map(BlockStructure::factor_count).sum()
    }

    /// Checks the partition invariants; factor lists are checked only when
    /// they have been filled in.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.n];
        let mut claim = |v: usize, what: &str| -> Result<()> {
            if v >= self.n || std::mem::replace(&mut seen[v], true) {
                return Err(Error::Structure(format!("variable {v} misplaced in {what}")));
            }
            Ok(())
        };
        for &r in &self.repeated {
            claim(r, "repeated set")?;
        }
        if self.blocks.is_empty() {
            return Err(Error::Structure("no blocks".into()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.nonrepeated.is_empty() {
                return Err(Error::Structure(format!("block {i} has no non-repeated variable")));
            }
            for &v in &b.nonrepeated {
                claim(v, "blocks")?;
            }
            if !b.nonrepeated_factors.is_empty() {
                let mut all: Vec<usize> = b.nonrepeated_factors.iter().flatten().copied().collect();
                all.sort_unstable();
                let mut own = b.nonrepeated.clone();
                own.sort_unstable();
                if all != own {
                    return Err(Error::Structure(format!("block {i} factors do not partition its variables")));
                }
            }
            let rep = b.repeated_vars();
            if rep.windows(2).any(|w| w[0] == w[1]) || rep.iter().any(|r| !self.repeated.contains(r)) {
                return Err(Error::Structure(format!("block {i} repeated factors are not a partition of a subset of X^r")));
            }
            if b.has_repeated == rep.is_empty() && !b.repeated_factors.is_empty() {
                return Err(Error::Structure(format!("block {i} has_repeated flag disagrees")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Structure("variables left unassigned".into()));
        }
        Ok(())
    }
}

fn random_context(domain: &BoxDomain, vars: &[usize], seed: u64) -> BTreeMap<usize, f64> {
    let p = interior_point(domain.bounds(), &mut rng::rng(seed));
    vars.iter().map(|&v| (v, p[v])).collect()
}

/// Finest partition of the free variables into additively separable groups.
///
/// Subsets of the remaining variables are tried in increasing cardinality;
/// a subset that splits off additively is peeled and the search continues
/// on the remainder.
pub fn detect_additive_partition<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    fixed_ctx: &BTreeMap<usize, f64>,
    tol: &Tolerance,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let mut remaining: Vec<usize> = (0..domain.dim()).filter(|v| !fixed_ctx.contains_key(v)).collect();
    if remaining.len() < 2 {
        return Err(Error::InvalidInput("additive partition needs two free variables".into()));
    }
    let mut groups = Vec::new();
    let mut k = 1;
    let mut probe = 0u64;
    'outer: while 2 * k <= remaining.len() {
        for subset in combinations(&remaining, k) {
            probe += 1;
            if additive_split_test(f, domain, &subset, fixed_ctx, tol, rng::derive(seed, probe))? {
                remaining.retain(|v| !subset.contains(v));
                groups.push(subset);
                continue 'outer;
            }
        }
        k += 1;
    }
    groups.push(remaining);
    groups.sort();
    Ok(groups)
}

/// All `k`-subsets of `items` in lexicographic order.
pub(crate) fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    let mut out = Vec::new();
    if k == 0 || k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Variables the target does not depend on.
fn inactive_vars<T: Target + ?Sized>(f: &T, domain: &BoxDomain, tol: &Tolerance, seed: u64) -> Result<Vec<usize>> {
    let n = domain.dim();
    let pts = lhs_points(domain.bounds(), tol.rows, rng::derive(seed, 0));
    let mut r = rng::rng(rng::derive(seed, 1));
    let mut out = Vec::new();
    for v in 0..n {
        let alt = interior_point(&[domain.bound(v)], &mut r)[0];
        let mut scale = 0.0f64;
        let mut spread = 0.0f64;
        for p in &pts {
            let a = f.eval_checked(p)?;
            let mut q = p.clone();
            q[v] = alt;
            let b = f.eval_checked(&q)?;
            scale = scale.max(a.abs()).max(b.abs());
            spread = spread.max((a - b).abs());
        }
        if spread <= tol.eps_const * scale || spread == 0.0 {
            out.push(v);
        }
    }
    Ok(out)
}

/// Pairwise interaction graph as adjacency bitmasks: `i ~ j` iff `{x_i}`
/// fails to split additively from `{x_j}` with every other variable pinned,
/// at any of `trials` random contexts.
fn interaction_graph<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    active: &[usize],
    pinned: &BTreeMap<usize, f64>,
    tol: &Tolerance,
    seed: u64,
) -> Result<Vec<u64>> {
    let n = domain.dim();
    let pairs: Vec<(usize, usize)> = combinations(active, 2).into_iter().map(|p| (p[0], p[1])).collect();
    let inner = Tolerance { trials: 1, ..*tol };
    let edges = pairs
        .par_iter()
        .map(|&(i, j)| -> Result<bool> {
            for t in 0..tol.trials {
                let s = rng::derive_path(seed, &[i as u64, j as u64, t as u64]);
                let others: Vec<usize> = active.iter().copied().filter(|&v| v != i && v != j).collect();
                let mut ctx = random_context(domain, &others, rng::derive(s, 0));
                ctx.extend(pinned.iter().map(|(&k, &v)| (k, v)));
                if !additive_split_test(f, domain, &[i], &ctx, &inner, rng::derive(s, 1))? {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect::<Result<Vec<bool>>>()?;
    let mut adj = vec![0u64; n];
    for (&(i, j), e) in pairs.iter().zip(edges) {
        if e {
            adj[i] |= 1 << j;
            adj[j] |= 1 << i;
        }
    }
    Ok(adj)
}

/// Connected components of the graph restricted to `mask`, as bitmasks in
/// order of their lowest variable.
fn components(adj: &[u64], mut mask: u64) -> Vec<u64> {
    let mut out = Vec::new();
    while mask != 0 {
        let mut comp = mask & mask.wrapping_neg();
        loop {
            let mut grown = comp;
            let mut bits = comp;
            while bits != 0 {
                let v = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                grown |= adj[v] & mask;
            }
            if grown == comp {
                break;
            }
            comp = grown;
        }
        out.push(comp);
        mask &= !comp;
    }
    out
}

fn bits(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Detect the repeated-variable set and the minimal blocks.
pub fn detect_minimal_blocks<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    tol: &Tolerance,
    seed: u64,
) -> Result<GSStructure> {
    tol.validate()?;
    let n = domain.dim();
    if n == 0 || n > 63 {
        return Err(Error::InvalidInput(format!("unsupported variable count {n}")));
    }
    if n == 1 {
        return Ok(GSStructure { n, repeated: vec![], blocks: vec![BlockStructure::new(vec![0])] });
    }
    let inactive = inactive_vars(f, domain, tol, rng::derive(seed, 1))?;
    let active: Vec<usize> = (0..n).filter(|v| !inactive.contains(v)).collect();
    let inactive_blocks = inactive.iter().map(|&v| BlockStructure { inactive: true, ..BlockStructure::new(vec![v]) });
    if active.len() < 2 {
        let mut blocks: Vec<BlockStructure> = active.iter().map(|&v| BlockStructure::new(vec![v])).collect();
        blocks.extend(inactive_blocks);
        blocks.sort_by(|a, b| a.nonrepeated.cmp(&b.nonrepeated));
        return Ok(GSStructure { n, repeated: vec![], blocks });
    }
    // inactive variables stay pinned mid-domain everywhere
    let pin_inactive: BTreeMap<usize, f64> = inactive
        .iter()
        .map(|&v| {
            let (a, b) = domain.bound(v);
            (v, 0.5 * (a + b))
        })
        .collect();
    let adj = interaction_graph(f, domain, &active, &pin_inactive, tol, rng::derive(seed, 2))?;
    let all: u64 = active.iter().fold(0, |m, &v| m | 1 << v);
    let m0 = components(&adj, all).len();

    let mut repeated = 0u64;
    let mut credited: Vec<u64> = Vec::new();
    for k in 1..active.len() {
        let level: Vec<u64> = combinations(&active, k)
            .into_iter()
            .map(|s| s.iter().fold(0u64, |m, &v| m | 1 << v))
            .filter(|&s| s & !repeated != 0 && !credited.iter().any(|&c| c & !s == 0))
            .filter(|&s| components(&adj, all & !s).len() > m0)
            .collect();
        for s in level {
            credited.push(s);
            repeated |= s;
        }
        // nothing further can be credited once every variable is classified
        if credited.iter().fold(0, |m, &c| m | c) == all {
            break;
        }
    }

    // later levels: each block is searched again as a system of its own with
    // the repeated variables found so far fixed. A separator that is a common
    // multiplicative factor of its block, as x3 in (x1 + x2)/x3, stays
    // non-repeated.
    let mut level = 0u64;
    loop {
        let mut found = 0u64;
        for block in components(&adj, all & !repeated) {
            let items = bits(block);
            for k in 1..items.len().saturating_sub(1) {
                for t in combinations(&items, k) {
                    let tm = t.iter().fold(0u64, |m, &v| m | 1 << v);
                    if components(&adj, block & !tm).len() < 2 {
                        continue;
                    }
                    let outside: Vec<usize> = active.iter().copied().filter(|&v| block >> v & 1 == 0).collect();
                    let s = rng::derive_path(seed, &[4, level, tm]);
                    let mut ctx = random_context(domain, &outside, rng::derive(s, 0));
                    ctx.extend(pin_inactive.iter().map(|(&k, &v)| (k, v)));
                    if !multiplicative_split_test(f, domain, &t, &ctx, tol, rng::derive(s, 1))? {
                        found |= tm;
                    }
                }
                if found & block != 0 {
                    break;
                }
            }
        }
        if found == 0 {
            break;
        }
        repeated |= found;
        level += 1;
    }

    let graph_blocks: Vec<Vec<usize>> = components(&adj, all & !repeated).into_iter().map(bits).collect();
    let rep_vars = bits(repeated);
    let mut partition: Option<Vec<Vec<usize>>> = None;
    if active.len() - rep_vars.len() >= 2 {
        for t in 0..tol.trials {
            let s = rng::derive_path(seed, &[3, t as u64]);
            let mut ctx = random_context(domain, &rep_vars, rng::derive(s, 0));
            ctx.extend(pin_inactive.iter().map(|(&k, &v)| (k, v)));
            let p = detect_additive_partition(f, domain, &ctx, tol, rng::derive(s, 1))?;
            match &partition {
                Some(prev) if *prev != p => {
                    return Err(Error::Structure(format!(
                        "additive partitions disagree across fixings: {prev:?} vs {p:?}"
                    )))
                }
                _ => partition = Some(p),
            }
        }
    }
    let partition = partition.unwrap_or_else(|| graph_blocks.clone());
    if partition != graph_blocks {
        return Err(Error::Structure(format!(
            "probed partition {partition:?} disagrees with interaction graph {graph_blocks:?}"
        )));
    }
    let mut blocks: Vec<BlockStructure> = partition.into_iter().map(BlockStructure::new).collect();
    blocks.extend(inactive_blocks);
    blocks.sort_by(|a, b| a.nonrepeated.cmp(&b.nonrepeated));
    let s = GSStructure { n, repeated: rep_vars, blocks };
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::FnTarget;

    fn nonrep(s: &GSStructure) -> Vec<Vec<usize>> {
        s.blocks.iter().map(|b| b.nonrepeated.clone()).collect()
    }

    #[test]
    fn combinations_in_order() {
        assert_eq!(combinations(&[1, 4, 7], 2), vec![vec![1, 4], vec![1, 7], vec![4, 7]]);
        assert_eq!(combinations(&[0, 1, 2, 3, 4], 3).len(), 10);
        assert!(combinations(&[0], 2).is_empty());
    }

    #[test]
    fn additive_partition_examples() {
        let d = BoxDomain::uniform(3, -3.0, 3.0).unwrap();
        let tol = Tolerance::default();
        let case2 = FnTarget::new(3, |x: &[f64]| 2.0 * x[0].cos() + (3.0 * x[1] - x[2]).sin());
        let p = detect_additive_partition(&case2, &d, &BTreeMap::new(), &tol, 1).unwrap();
        assert_eq!(p, vec![vec![0], vec![1, 2]]);
        let case4 = FnTarget::new(3, |x: &[f64]| x[2] * x[0].sin() - 2.0 * x[2] * x[1].cos());
        let p = detect_additive_partition(&case4, &d, &BTreeMap::from([(2, 0.7)]), &tol, 1).unwrap();
        assert_eq!(p, vec![vec![0], vec![1]]);
        let d2 = BoxDomain::uniform(2, -3.0, 3.0).unwrap();
        let case1 = FnTarget::new(2, |x: &[f64]| 0.5 * x[0].exp() * (2.0 * x[1]).sin());
        let p = detect_additive_partition(&case1, &d2, &BTreeMap::new(), &tol, 1).unwrap();
        assert_eq!(p, vec![vec![0, 1]]);
    }

    #[test]
    fn case7_repeated_pair() {
        let d = BoxDomain::uniform(5, -3.0, 3.0).unwrap();
        let f = FnTarget::new(5, |x: &[f64]| {
            2.0 * x[3] * x[4] * x[0].sin() - x[4] * x[1] + 0.5 * x[2].exp() * x[3].cos()
        });
        let s = detect_minimal_blocks(&f, &d, &Tolerance::default(), 5).unwrap();
        assert_eq!(s.repeated, vec![3, 4]);
        assert_eq!(nonrep(&s), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn repeated_variable_hidden_behind_another() {
        // x0 links every block; x2 is repeated only among the last two
        let d = BoxDomain::uniform(5, 0.5, 2.0).unwrap();
        let f = FnTarget::new(5, |x: &[f64]| {
            (-0.9 * x[3]).exp() / x[0] - (1.8 * x[4] + 0.4).ln() / x[0] * x[2].exp()
                + 1.8 * (1.2 * x[1] + 2.5).sin() * x[0].exp() * (1.4 * x[2] + 1.0).ln()
        });
        let s = detect_minimal_blocks(&f, &d, &Tolerance::default(), 3).unwrap();
        assert_eq!(s.repeated, vec![0, 2]);
        assert_eq!(nonrep(&s), vec![vec![1], vec![3], vec![4]]);
    }

    #[test]
    fn common_factor_separator_is_not_repeated() {
        let d = BoxDomain::uniform(7, -3.0, 3.0).unwrap();
        let case10 = FnTarget::new(7, |x: &[f64]| {
            1.2 - 2.0 * (x[0] + x[1]) / x[2] * x[6].cos() + 0.5 * x[6].exp() * x[3] * (x[4] * x[5]).sin()
        });
        let s = detect_minimal_blocks(&case10, &d, &Tolerance::default(), 2).unwrap();
        assert_eq!(s.repeated, vec![6]);
        assert_eq!(nonrep(&s), vec![vec![0, 1, 2], vec![3, 4, 5]]);
    }

    #[test]
    fn single_variable_and_inactive() {
        let d1 = BoxDomain::uniform(1, 0.0, 1.0).unwrap();
        let s = detect_minimal_blocks(&FnTarget::new(1, |x: &[f64]| x[0]), &d1, &Tolerance::default(), 0).unwrap();
        assert_eq!(s.m(), 1);
        let d3 = BoxDomain::uniform(3, -1.0, 2.0).unwrap();
        let f = FnTarget::new(3, |x: &[f64]| x[0] * x[2].exp());
        let s = detect_minimal_blocks(&f, &d3, &Tolerance::default(), 0).unwrap();
        assert_eq!(nonrep(&s), vec![vec![0, 2], vec![1]]);
        assert!(s.blocks[1].inactive && !s.blocks[0].inactive);
    }

    #[test]
    fn validate_rejects_overlap() {
        let s = GSStructure { n: 2, repeated: vec![0], blocks: vec![BlockStructure::new(vec![0, 1])] };
        assert!(s.validate().is_err());
        let s = GSStructure { n: 3, repeated: vec![], blocks: vec![BlockStructure::new(vec![0, 1])] };
        assert!(s.validate().is_err());
    }
}
