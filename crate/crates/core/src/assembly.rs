//! Factor fitting by sequence search over the template library, linear
//! assembly of the blocks, and the end-to-end pipeline.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bict::{is_constant, Tolerance};
use crate::blocks::{detect_minimal_blocks, GSStructure};
use crate::error::{Error, Result, Stage};
use crate::factors::{detect_factors, Polarity};
use crate::linalg::lstsq;
use crate::model::{FittedFactor, GSModel};
use crate::optimizer::{minimize, OptConfig};
use crate::rng;
use crate::sampling::{interior_point, lhs_points, lhs_sample, BoxDomain};
use crate::target::{Counting, Target};
use crate::template::{eval_template, Basis, ModelTemplate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Exit threshold on the relative fitting error of a template.
    pub eps_target: f64,
    pub samples_per_var: usize,
    pub library_order: Vec<ModelTemplate>,
    /// Optimizer runs per template before moving on.
    pub restarts: usize,
    /// Early-exit objective handed to the optimizer.
    pub inner_target: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            eps_target: 1e-6,
            samples_per_var: 200,
            library_order: ModelTemplate::ALL.to_vec(),
            restarts: 5,
            inner_target: 1e-22,
        }
    }
}

impl FitConfig {
    pub fn with_eps(eps_target: f64) -> Self {
        FitConfig { eps_target, ..FitConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_target > 0.0) || self.samples_per_var < 10 || self.restarts == 0 {
            return Err(Error::InvalidInput(format!("invalid fit config {self:?}")));
        }
        Ok(())
    }
}

const REDRAWS: u64 = 3;

/// Samples of one factor: inputs restricted to the factor's variables and
/// the responses it should reproduce up to scale (and, when `affine`, up to
/// an unknown offset).
struct Slice {
    inputs: Vec<Vec<f64>>,
    y: Vec<f64>,
    affine: bool,
}

fn factor_slice<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    structure: &GSStructure,
    block: usize,
    vars: &[usize],
    n: usize,
    seed: u64,
) -> Result<Slice> {
    let b = &structure.blocks[block];
    let switch: Vec<usize> = b.nonrepeated.iter().copied().filter(|v| !vars.contains(v)).collect();
    for attempt in 0..=REDRAWS {
        let mut r = rng::rng(rng::derive_path(seed, &[0, attempt]));
        let p = interior_point(domain.bounds(), &mut r);
        let alt = interior_point(domain.bounds(), &mut r);
        let inputs = lhs_points(domain.project(vars).bounds(), n, rng::derive_path(seed, &[1, attempt]));
        let mut scale = 0.0f64;
        let mut y = Vec::with_capacity(n);
        for row in &inputs {
            let mut x = p.clone();
            for (&v, &val) in vars.iter().zip(row) {
                x[v] = val;
            }
            let y1 = f.eval_checked(&x)?;
            scale = scale.max(y1.abs());
            if switch.is_empty() {
                y.push(y1);
                continue;
            }
            for &v in &switch {
                x[v] = alt[v];
            }
            let y2 = f.eval_checked(&x)?;
            scale = scale.max(y2.abs());
            y.push(y1 - y2);
        }
        if switch.is_empty() || y.iter().any(|v| v.abs() > 1e-6 * scale) {
            return Ok(Slice { inputs, y, affine: switch.is_empty() });
        }
    }
    Err(Error::DegenerateContext(format!("slice of factor {vars:?} vanishes in block {block}")))
}

fn variance(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64
}

/// Least-squares coefficients of the template's columns plus a constant at
/// fixed nonlinear parameters, and the residual sum of squares.
fn project(id: ModelTemplate, theta: &[f64], inputs: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let k = Basis::n_columns(id);
    let mut cols = vec![Vec::with_capacity(y.len()); k + 1];
    let mut buf = [0.0; 2];
    for x in inputs {
        if !Basis::columns(id, theta, x, &mut buf) {
            return None;
        }
        for j in 0..k {
            cols[j].push(buf[j]);
        }
        cols[k].push(1.0);
    }
    lstsq(&cols, y, 1e-13)
}

fn exponent_slots(id: ModelTemplate) -> &'static [usize] {
    match id {
        ModelTemplate::U1 => &[0],
        ModelTemplate::B3 => &[0, 1],
        _ => &[],
    }
}

/// True when the template's power base can be non-positive on the inputs,
/// so only integer exponents are real-valued there.
fn base_reaches_nonpositive(id: ModelTemplate, bounds: &[(f64, f64)]) -> bool {
    match id {
        ModelTemplate::U1 => bounds[0].0 <= 0.0,
        ModelTemplate::B3 => bounds[0].0 <= 0.0 || bounds[1].0 <= 0.0,
        _ => false,
    }
}

/// Relative error of a concrete factor on the slice, with the offset
/// re-solved when the slice is affine.
fn verify(factor: &FittedFactor, slice: &Slice, var: f64) -> Option<f64> {
    let mut t = Vec::with_capacity(slice.y.len());
    for x in &slice.inputs {
        t.push(eval_template(factor.template, &factor.params, x).ok()?);
    }
    let rss: f64 = t
        .iter()
        .zip(&slice.y)
        .map(|(t, y)| (y - factor.scale * t - factor.offset).powi(2))
        .sum();
    let rel = rss / (slice.y.len() as f64 * var);
    rel.is_finite().then_some(rel)
}

/// Builds the factor for `theta`, snapping exponents and tiny offsets when
/// the fit survives it.
fn finalize(
    id: ModelTemplate,
    theta: &[f64],
    vars: &[usize],
    slice: &Slice,
    bounds: &[(f64, f64)],
    eps: f64,
    var: f64,
) -> Option<FittedFactor> {
    let build = |theta: &[f64]| -> Option<FittedFactor> {
        let (coef, _) = project(id, theta, &slice.inputs, &slice.y)?;
        let k = Basis::n_columns(id);
        let (params, scale, offset) = Basis::to_params(id, theta, &coef[..k], coef[k])?;
        let mut fac = FittedFactor::new(id, params, scale, offset, vars.to_vec()).ok()?;
        fac.fit_mse = verify(&fac, slice, var)?;
        Some(fac)
    };
    let slots = exponent_slots(id);
    let mut theta = theta.to_vec();
    let mut fac = None;
    if !slots.is_empty() {
        let mut snapped = theta.clone();
        for &s in slots {
            snapped[s] = snapped[s].round();
        }
        let forced = base_reaches_nonpositive(id, bounds);
        let near = slots.iter().all(|&s| (theta[s] - snapped[s]).abs() < 1e-6);
        if forced || near {
            if let Some(f) = build(&snapped).filter(|f| f.fit_mse <= eps) {
                theta = snapped;
                fac = Some(f);
            } else if forced {
                return None;
            }
        }
    }
    let mut fac = match fac {
        Some(f) => f,
        None => build(&theta)?,
    };
    if fac.offset != 0.0 && !slice.affine {
        let rms = (slice.inputs.iter().filter_map(|x| eval_template(id, &fac.params, x).ok()).map(|t| (fac.scale * t).powi(2)).sum::<f64>()
            / slice.inputs.len() as f64)
            .sqrt();
        if fac.offset.abs() <= 1e-9 * rms {
            let mut g = fac.clone();
            g.offset = 0.0;
            if let Some(m) = verify(&g, slice, var).filter(|m| *m <= eps) {
                g.fit_mse = m;
                fac = g;
            }
        }
    }
    Some(fac)
}

/// A fitted factor, whether it was fitted on a slice carrying an unknown
/// additive offset (re-solved during assembly), and whether it met the
/// target error.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorFit {
    pub factor: FittedFactor,
    pub affine: bool,
    pub converged: bool,
}

/// Sequence search over the library. Returns the first factor meeting
/// `eps_target`, or the best one found with `false`.
fn fit_on_slice(
    vars: &[usize],
    slice: &Slice,
    bounds: &[(f64, f64)],
    config: &FitConfig,
    seed: u64,
) -> Result<(FittedFactor, bool)> {
    let var = variance(&slice.y);
    let mean = slice.y.iter().sum::<f64>() / slice.y.len() as f64;
    let scale = slice.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let unit: Vec<f64> = slice.y.iter().map(|v| v / scale).collect();
    if is_constant(&unit, &Tolerance { eps_const: 1e-12, ..Tolerance::default() }) {
        let f = if vars.len() == 1 {
            FittedFactor::constant(vars[0], mean)
        } else {
            FittedFactor::new(ModelTemplate::B1, vec![0.0, 0.0], 1.0, mean, vars.to_vec())?
        };
        return Ok((f, true));
    }
    let mut best: Option<FittedFactor> = None;
    let mut best_miss: (ModelTemplate, f64) = (ModelTemplate::U1, f64::INFINITY);
    for (ti, &id) in config.library_order.iter().enumerate() {
        if id.arity() != vars.len() {
            continue;
        }
        if id == ModelTemplate::B3 && bounds[1].0 <= 0.0 && bounds[1].1 >= 0.0 {
            continue;
        }
        let d = Basis::n_nonlinear(id);
        let objective = |theta: &[f64]| match project(id, theta, &slice.inputs, &slice.y) {
            Some((_, rss)) => rss / (slice.y.len() as f64 * var),
            None => f64::INFINITY,
        };
        let runs = if d == 0 { 1 } else { config.restarts };
        for run in 0..runs {
            let theta = if d == 0 {
                Vec::new()
            } else {
                let mut opt = OptConfig::for_dim(d);
                opt.target_obj = config.inner_target;
                minimize(objective, &opt, rng::derive_path(seed, &[ti as u64, run as u64]))?.best_params
            };
            match finalize(id, &theta, vars, slice, bounds, config.eps_target, var) {
                Some(fac) if fac.fit_mse <= config.eps_target => return Ok((fac, true)),
                Some(fac) => {
                    if best.as_ref().is_none_or(|b| fac.fit_mse < b.fit_mse) {
                        best = Some(fac);
                    }
                }
                None => {
                    let m = objective(&theta);
                    if m < best_miss.1 {
                        best_miss = (id, m);
                    }
                }
            }
        }
    }
    match best {
        Some(f) => Ok((f, false)),
        None => Err(Error::NoModelFits {
            vars: vars.to_vec(),
            best_template: best_miss.0.to_string(),
            best_mse: best_miss.1,
        }),
    }
}

/// Fits one factor and reports whether its offset still needs correcting.
pub fn fit_factor_detailed<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    structure: &GSStructure,
    block: usize,
    factor_vars: &[usize],
    config: &FitConfig,
    seed: u64,
) -> Result<FactorFit> {
    config.validate()?;
    if factor_vars.is_empty() || factor_vars.len() > 2 {
        return Err(Error::UnsupportedArity(factor_vars.len()));
    }
    if block >= structure.blocks.len() {
        return Err(Error::InvalidInput(format!("no block {block}")));
    }
    let n = config.samples_per_var * factor_vars.len();
    let slice = factor_slice(f, domain, structure, block, factor_vars, n, rng::derive(seed, 0))?;
    let bounds = domain.project(factor_vars).bounds().to_vec();
    let (factor, converged) = fit_on_slice(factor_vars, &slice, &bounds, config, rng::derive(seed, 1))?;
    Ok(FactorFit { factor, affine: slice.affine, converged })
}

/// Fits the factor over `factor_vars` of block `block`, up to scale.
pub fn fit_factor<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    structure: &GSStructure,
    block: usize,
    factor_vars: &[usize],
    config: &FitConfig,
    seed: u64,
) -> Result<FittedFactor> {
    let fit = fit_factor_detailed(f, domain, structure, block, factor_vars, config, seed)?;
    if !fit.converged {
        return Err(Error::NoModelFits {
            vars: factor_vars.to_vec(),
            best_template: fit.factor.template.to_string(),
            best_mse: fit.factor.fit_mse,
        });
    }
    Ok(fit.factor)
}

const MAX_CONDITION: f64 = 1e10;

fn condition(m: &DMatrix<f64>) -> f64 {
    let mut m = m.clone();
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    let sv = m.singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Linear assembly `f ≈ c0 + Σ c_i Π factors` on a fresh design. Inactive
/// blocks are left out of the model.
pub fn assemble_global<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    structure: &GSStructure,
    factors: &[Vec<FittedFactor>],
    config: &FitConfig,
    seed: u64,
) -> Result<GSModel> {
    let fits: Vec<Vec<FactorFit>> = factors
        .iter()
        .map(|b| b.iter().map(|f| FactorFit { factor: f.clone(), affine: false, converged: true }).collect())
        .collect();
    assemble_fits(f, domain, structure, &fits, config, seed)
}

/// As `assemble_global`, with a correction column for every block holding
/// an affine-fitted factor next to other factors.
pub fn assemble_fits<T: Target + ?Sized>(
    f: &T,
    domain: &BoxDomain,
    structure: &GSStructure,
    fits: &[Vec<FactorFit>],
    config: &FitConfig,
    seed: u64,
) -> Result<GSModel> {
    if fits.len() != structure.blocks.len() {
        return Err(Error::InvalidInput("one factor list per block required".into()));
    }
    let active: Vec<usize> = (0..fits.len()).filter(|&i| !structure.blocks[i].inactive).collect();
    let n = domain.dim();
    let pts = lhs_sample(domain, config.samples_per_var * n, seed).points;
    let y: Vec<f64> = pts.iter().map(|x| f.eval_checked(x)).collect::<Result<_>>()?;
    if active.is_empty() {
        return Ok(GSModel::constant(n, y.iter().sum::<f64>() / y.len() as f64));
    }
    // an affine-fitted factor's offset is unknown; it restarts at zero and
    // is re-solved through a correction column (the block without it)
    let mut blocks: Vec<Vec<FittedFactor>> = active
        .iter()
        .map(|&i| {
            fits[i]
                .iter()
                .map(|ff| {
                    let mut fac = ff.factor.clone();
                    if ff.affine {
                        fac.offset = 0.0;
                    }
                    fac
                })
                .collect()
        })
        .collect();
    let product = |facs: &[FittedFactor], skip: Option<usize>, x: &[f64]| -> Result<f64> {
        facs.iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != skip)
            .try_fold(1.0, |acc, (_, fac)| Ok(acc * fac.eval(x)?))
    };
    let rows = pts.len();
    let mut design = DMatrix::from_element(rows, active.len() + 1, 1.0);
    for (k, b) in blocks.iter().enumerate() {
        for (r, x) in pts.iter().enumerate() {
            design[(r, k + 1)] = product(b, None, x)?;
        }
    }
    let cond = condition(&design);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditionedAssembly(cond));
    }
    let mut corrections: Vec<(usize, usize)> = Vec::new();
    for (k, &i) in active.iter().enumerate() {
        let Some(j) = fits[i].iter().position(|ff| ff.affine) else { continue };
        if blocks[k].len() < 2 {
            continue;
        }
        let col: Vec<f64> = pts.iter().map(|x| product(&blocks[k], Some(j), x)).collect::<Result<_>>()?;
        let last = design.ncols();
        design = design.insert_column(last, 0.0);
        design.set_column(last, &DVector::from_vec(col));
        corrections.push((k, j));
    }
    // minimum-norm solution in column-normalized coordinates; correction
    // columns shared by several blocks are not separately identifiable
    let norms: Vec<f64> = design.column_iter().map(|c| c.norm()).map(|n| if n > 0.0 { n } else { 1.0 }).collect();
    for (j, mut c) in design.column_iter_mut().enumerate() {
        c /= norms[j];
    }
    let svd = design.svd(true, true);
    let cut = 1e-10 * svd.singular_values.max();
    let sol = svd
        .solve(&DVector::from_vec(y), cut)
        .map_err(|e| Error::InvalidInput(format!("assembly solve failed: {e}")))?;
    let sol: Vec<f64> = sol.iter().zip(&norms).map(|(v, n)| v / n).collect();
    let c: Vec<f64> = sol[..active.len() + 1].to_vec();
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditionedAssembly(f64::INFINITY));
    }
    for (extra, &(k, j)) in corrections.iter().enumerate() {
        let d = sol[active.len() + 1 + extra];
        let ci = c[k + 1];
        if ci != 0.0 {
            let fac = &mut blocks[k][j];
            fac.offset += d / ci;
            let rms = (pts
                .iter()
                .filter_map(|x| fac.eval(x).ok())
                .map(|v| (v - fac.offset).powi(2))
                .sum::<f64>()
                / pts.len() as f64)
                .sqrt();
            if fac.offset.abs() <= 1e-9 * rms {
                fac.offset = 0.0;
            }
        }
    }
    GSModel::new(n, c, blocks)
}

/// Mean squared residual of `model` against `f` on a fresh LHS design.
pub fn compute_mse<T: Target + ?Sized>(model: &GSModel, f: &T, domain: &BoxDomain, n_points: usize, seed: u64) -> Result<f64> {
    if n_points < 2 {
        return Err(Error::InvalidInput("mse needs at least two points".into()));
    }
    let pts = lhs_sample(domain, n_points, seed).points;
    let mut acc = 0.0;
    for x in &pts {
        let r = f.eval_checked(x)? - model.eval(x)?;
        acc += r * r;
    }
    Ok(acc / n_points as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbbConfig {
    pub tol: Tolerance,
    pub polarity: Polarity,
    pub fit: FitConfig,
    /// Validation points per variable for the reported MSE.
    pub mse_points_per_var: usize,
    /// Assemble with the best template found when a factor misses the
    /// target error, instead of failing the run.
    pub keep_unconverged: bool,
}

impl Default for MbbConfig {
    fn default() -> Self {
        MbbConfig {
            tol: Tolerance::default(),
            polarity: Polarity::default(),
            fit: FitConfig::default(),
            mse_points_per_var: 200,
            keep_unconverged: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Block and factor detection.
    pub t1_ms: f64,
    /// Factor fitting.
    pub t2_ms: f64,
    /// Assembly and validation.
    pub t3_ms: f64,
    pub mse: f64,
    pub evaluations: u64,
}

/// A factor kept although no template met the target error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMiss {
    pub block: usize,
    pub vars: Vec<usize>,
    pub template: ModelTemplate,
    pub fit_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MbbOutcome {
    pub model: GSModel,
    pub structure: GSStructure,
    pub metrics: RunMetrics,
    pub misses: Vec<FitMiss>,
}

/// Detection, factor fitting and assembly end to end.
pub fn run_mbb<T: Target + ?Sized>(f: &T, domain: &BoxDomain, config: &MbbConfig, seed: u64) -> Result<MbbOutcome> {
    if f.dim() != domain.dim() {
        return Err(Error::InvalidInput(format!("target takes {} inputs, domain has {}", f.dim(), domain.dim())));
    }
    let f = Counting::new(f);
    let ms = |t: Instant| t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let blocks = detect_minimal_blocks(&f, domain, &config.tol, rng::derive(seed, 1)).map_err(|e| e.at(Stage::BlockDetection))?;
    let structure = detect_factors(&f, domain, &blocks, &config.tol, config.polarity, rng::derive(seed, 2))
        .map_err(|e| e.at(Stage::FactorDetection))?;
    let t1_ms = ms(t);

    let t = Instant::now();
    let jobs: Vec<(usize, Vec<usize>)> = structure
        .blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| !b.inactive)
        .flat_map(|(i, b)| b.nonrepeated_factors.iter().chain(&b.repeated_factors).map(move |v| (i, v.clone())))
        .collect();
    let fitted = jobs
        .par_iter()
        .enumerate()
        .map(|(k, (i, vars))| fit_factor_detailed(&f, domain, &structure, *i, vars, &config.fit, rng::derive_path(seed, &[3, k as u64])))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at(Stage::FactorFitting))?;
    let mut fits: Vec<Vec<FactorFit>> = vec![Vec::new(); structure.blocks.len()];
    let mut misses = Vec::new();
    for ((i, vars), ff) in jobs.iter().zip(fitted) {
        if !ff.converged {
            if !config.keep_unconverged {
                let e = Error::NoModelFits {
                    vars: vars.clone(),
                    best_template: ff.factor.template.to_string(),
                    best_mse: ff.factor.fit_mse,
                };
                return Err(e.at(Stage::FactorFitting));
            }
            misses.push(FitMiss { block: *i, vars: vars.clone(), template: ff.factor.template, fit_mse: ff.factor.fit_mse });
        }
        fits[*i].push(ff);
    }
    let t2_ms = ms(t);

    let t = Instant::now();
    let model = assemble_fits(&f, domain, &structure, &fits, &config.fit, rng::derive(seed, 4)).map_err(|e| e.at(Stage::Assembly))?;
    let mse = compute_mse(&model, &f, domain, config.mse_points_per_var * domain.dim(), rng::derive(seed, 5))
        .map_err(|e| e.at(Stage::Validation))?;
    let t3_ms = ms(t);

    Ok(MbbOutcome {
        model,
        structure,
        metrics: RunMetrics { t1_ms, t2_ms, t3_ms, mse, evaluations: f.evaluations() },
        misses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockStructure;
    use crate::target::FnTarget;

    fn single(n: usize, vars: Vec<usize>) -> GSStructure {
        let mut b = BlockStructure::new((0..n).collect());
        b.nonrepeated_factors = vec![vars];
        GSStructure { n, repeated: vec![], blocks: vec![b] }
    }

    #[test]
    fn case1_factor_up_to_scale() {
        let f = FnTarget::new(2, |x: &[f64]| 0.5 * x[0].exp() * (2.0 * x[1]).sin());
        let d = BoxDomain::uniform(2, -3.0, 3.0).unwrap();
        let mut s = single(2, vec![0]);
        s.blocks[0].nonrepeated_factors = vec![vec![0], vec![1]];
        let fac = fit_factor(&f, &d, &s, 0, &[1], &FitConfig::default(), 3).unwrap();
        assert_eq!(fac.template, ModelTemplate::U3);
        assert!((fac.params[0] - 2.0).abs() < 1e-6, "{fac:?}");
        let fac = fit_factor(&f, &d, &s, 0, &[0], &FitConfig::default(), 3).unwrap();
        assert_eq!(fac.template, ModelTemplate::U2);
        // fitted / true is constant over the axis
        let ratio: Vec<f64> = (0..30).map(|k| -3.0 + 0.2 * k as f64).map(|t| fac.eval(&[t, 0.0]).unwrap() / t.exp()).collect();
        assert!(is_constant(&ratio, &Tolerance { eps_const: 1e-6, ..Tolerance::default() }));
    }

    #[test]
    fn odd_power_on_symmetric_domain_is_snapped() {
        let f = FnTarget::new(2, |x: &[f64]| x[0].powi(3) * x[1].cos());
        let d = BoxDomain::uniform(2, -3.0, 3.0).unwrap();
        let mut s = single(2, vec![0]);
        s.blocks[0].nonrepeated_factors = vec![vec![0], vec![1]];
        let fac = fit_factor(&f, &d, &s, 0, &[0], &FitConfig::default(), 1).unwrap();
        assert_eq!((fac.template, fac.params[0]), (ModelTemplate::U1, 3.0));
    }

    #[test]
    fn shifted_factor_keeps_offset() {
        let f = FnTarget::new(2, |x: &[f64]| x[0] * (x[1] - 2.0));
        let d = BoxDomain::new(vec![(0.4, 0.8), (5.0, 10.0)]).unwrap();
        let mut s = single(2, vec![0]);
        s.blocks[0].nonrepeated_factors = vec![vec![0], vec![1]];
        let fac = fit_factor(&f, &d, &s, 0, &[1], &FitConfig::with_eps(1e-10), 1).unwrap();
        assert!((fac.offset / fac.scale + 2.0).abs() < 1e-8, "{fac:?}");
    }

    #[test]
    fn arity_three_rejected() {
        let f = FnTarget::new(3, |x: &[f64]| x[0] * x[1] * x[2]);
        let d = BoxDomain::uniform(3, 1.0, 2.0).unwrap();
        let s = single(3, vec![0, 1, 2]);
        let e = fit_factor(&f, &d, &s, 0, &[0, 1, 2], &FitConfig::default(), 0).unwrap_err();
        assert_eq!(e, Error::UnsupportedArity(3));
    }

    #[test]
    fn identity_assembly() {
        let f = FnTarget::new(1, |x: &[f64]| (1.5 * x[0]).sin());
        let d = BoxDomain::uniform(1, -3.0, 3.0).unwrap();
        let s = single(1, vec![0]);
        let fac = FittedFactor::new(ModelTemplate::U3, vec![1.5, 0.0], 1.0, 0.0, vec![0]).unwrap();
        let m = assemble_global(&f, &d, &s, &[vec![fac]], &FitConfig::default(), 2).unwrap();
        assert!(m.c[0].abs() < 1e-12 && (m.c[1] - 1.0).abs() < 1e-12);
        assert!(compute_mse(&m, &f, &d, 500, 1).unwrap() < 1e-28);
    }

    #[test]
    fn zero_model_mse_matches_quadrature() {
        let f = FnTarget::new(3, |x: &[f64]| 1.2 + 10.0 * (2.0 * x[0]).sin() - 3.0 * x[1] * x[1] * x[2].cos());
        let d = BoxDomain::uniform(3, -3.0, 3.0).unwrap();
        // oracle: E[f^2] by a midpoint rule on a 60^3 grid
        let h = 6.0 / 60.0;
        let mut acc = 0.0;
        for i in 0..60 {
            for j in 0..60 {
                for k in 0..60 {
                    let x = [-3.0 + h * (i as f64 + 0.5), -3.0 + h * (j as f64 + 0.5), -3.0 + h * (k as f64 + 0.5)];
                    acc += f.eval(&x).powi(2);
                }
            }
        }
        let exact = acc / 216000.0;
        let m = GSModel::constant(3, 0.0);
        let est = compute_mse(&m, &f, &d, 20000, 7).unwrap();
        assert!((est - exact).abs() / exact < 0.02, "{est} vs {exact}");
    }

    #[test]
    fn case4_end_to_end() {
        let f = FnTarget::new(3, |x: &[f64]| x[2] * x[0].sin() - 2.0 * x[2] * x[1].cos());
        let d = BoxDomain::uniform(3, -3.0, 3.0).unwrap();
        let out = run_mbb(&f, &d, &MbbConfig::default(), 4).unwrap();
        assert_eq!(out.structure.repeated, vec![2]);
        assert_eq!((out.structure.m(), out.structure.factor_count()), (2, 4));
        assert!(out.metrics.mse <= 1e-6, "{:?}", out.metrics);
        assert_eq!(out, run_mbb(&f, &d, &MbbConfig::default(), 4).map(|mut o| {
            o.metrics.t1_ms = out.metrics.t1_ms;
            o.metrics.t2_ms = out.metrics.t2_ms;
            o.metrics.t3_ms = out.metrics.t3_ms;
            o
        }).unwrap());
    }

    #[test]
    fn linear_single_variable() {
        let f = FnTarget::new(1, |x: &[f64]| 3.0 * x[0] - 1.0);
        let d = BoxDomain::uniform(1, -2.0, 2.0).unwrap();
        let out = run_mbb(&f, &d, &MbbConfig::default(), 0).unwrap();
        assert_eq!(out.model.factor_count(), 1);
        assert!(out.metrics.mse < 1e-20);
    }
}
