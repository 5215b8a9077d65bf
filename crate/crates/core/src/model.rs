//! Fitted factors and assembled generalized separable models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::template::{num, short, ModelTemplate};

/// A library template bound to a subset of the input variables.
///
/// Its value is `scale * template(params, x[vars]) + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFactor {
    pub template: ModelTemplate,
    pub params: Vec<f64>,
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
    pub vars: Vec<usize>,
    pub fit_mse: f64,
}

impl FittedFactor {
    pub fn new(template: ModelTemplate, params: Vec<f64>, scale: f64, offset: f64, vars: Vec<usize>) -> Result<Self> {
        if vars.len() != template.arity() {
            return Err(Error::InvalidInput(format!(
                "{template} needs {} variables, got {}",
                template.arity(),
                vars.len()
            )));
        }
        if vars.len() == 2 && vars[0] == vars[1] {
            return Err(Error::InvalidInput("factor variables must be distinct".into()));
        }
        if params.len() != template.n_params() {
            return Err(Error::InvalidInput(format!(
                "{template} needs {} parameters, got {}",
                template.n_params(),
                params.len()
            )));
        }
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::InvalidInput("factor scale must be finite and non-zero".into()));
        }
        Ok(FittedFactor {
            template,
            params,
            scale,
            offset,
            vars,
            fit_mse: 0.0,
        })
    }

    /// A factor that is identically `value` (inactive variable).
    pub fn constant(var: usize, value: f64) -> Self {
        FittedFactor {
            template: ModelTemplate::U1,
            params: vec![0.0],
            scale: if value == 0.0 { 1.0 } else { value },
            offset: if value == 0.0 { -1.0 } else { 0.0 },
            vars: vec![var],
            fit_mse: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut args = [0.0; 2];
        for (a, &v) in args.iter_mut().zip(&self.vars) {
            *a = *x.get(v).ok_or_else(|| {
                Error::InvalidInput(format!("variable {v} out of range for input of length {}", x.len()))
            })?;
        }
        let t = self.template.eval(&self.params, &args[..self.vars.len()])?;
        Ok(self.scale * t + self.offset)
    }

    fn sort_key(&self) -> (usize, ModelTemplate) {
        (self.vars.iter().copied().min().unwrap_or(usize::MAX), self.template)
    }

    /// Template text with the offset expressed relative to the scale, so
    /// `scale * render_unscaled() == value`.
    fn render_unscaled(&self, names: &[String]) -> String {
        let args: Vec<&str> = self.vars.iter().map(|&v| names[v].as_str()).collect();
        let body = self.template.render(&self.params, &args);
        if self.offset == 0.0 {
            body
        } else {
            format!("({} + {})", body, num(self.offset / self.scale))
        }
    }
}

/// `c0 + sum_i c_i * prod_j factor_ij(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GSModel {
    pub n_vars: usize,
    pub c: Vec<f64>,
    pub blocks: Vec<Vec<FittedFactor>>,
}

impl GSModel {
    pub fn new(n_vars: usize, c: Vec<f64>, mut blocks: Vec<Vec<FittedFactor>>) -> Result<Self> {
        if c.len() != blocks.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{} blocks need {} coefficients, got {}",
                blocks.len(),
                blocks.len() + 1,
                c.len()
            )));
        }
        for f in blocks.iter().flatten() {
            if f.vars.iter().any(|&v| v >= n_vars) {
                return Err(Error::InvalidInput(format!("factor variable out of range in {:?}", f.vars)));
            }
        }
        for b in &mut blocks {
            b.sort_by_key(|f| f.sort_key());
        }
        Ok(GSModel { n_vars, c, blocks })
    }

    pub fn constant(n_vars: usize, c0: f64) -> Self {
        GSModel {
            n_vars,
            c: vec![c0],
            blocks: Vec::new(),
        }
    }

    /// Value of block `i` without its coefficient.
    pub fn block_value(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.blocks[i].iter().try_fold(1.0, |acc, f| Ok(acc * f.eval(x)?))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        eval_model(self, x)
    }

    pub fn factor_count(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }
}

pub fn eval_model(model: &GSModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.n_vars {
        return Err(Error::InvalidInput(format!(
            "model takes {} inputs, got {}",
            model.n_vars,
            x.len()
        )));
    }
    let mut acc = model.c[0];
    for i in 0..model.blocks.len() {
        acc += model.c[i + 1] * model.block_value(i, x)?;
    }
    Ok(acc)
}

/// Infix rendering with block scales folded into the printed coefficients.
/// Blocks appear in index order, factors by first variable index.
pub fn render_model(model: &GSModel, var_names: &[String]) -> String {
    let mut out = String::new();
    if model.c[0] != 0.0 || model.blocks.is_empty() {
        out.push_str(&short(model.c[0]));
    }
    for (i, block) in model.blocks.iter().enumerate() {
        let coef = block.iter().fold(model.c[i + 1], |acc, f| acc * f.scale);
        let factors: Vec<String> = block.iter().map(|f| f.render_unscaled(var_names)).collect();
        let mag = if out.is_empty() {
            short(coef)
        } else if coef.is_sign_negative() {
            out.push_str(" - ");
            short(-coef)
        } else {
            out.push_str(" + ");
            short(coef)
        };
        out.push_str(&mag);
        for f in factors {
            out.push_str(" * ");
            out.push_str(&f);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ModelTemplate::*;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("x{i}")).collect()
    }

    fn case2() -> GSModel {
        let cos = FittedFactor::new(U3, vec![1.0, std::f64::consts::FRAC_PI_2], 1.0, 0.0, vec![0]).unwrap();
        let sin = FittedFactor::new(B4, vec![3.0, -1.0, 0.0, 0.0], 1.0, 0.0, vec![1, 2]).unwrap();
        GSModel::new(3, vec![0.0, 2.0, 1.0], vec![vec![cos], vec![sin]]).unwrap()
    }

    #[test]
    fn case2_at_origin() {
        assert!((eval_model(&case2(), &[0.0, 0.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_model() {
        let m = GSModel::constant(4, 1.2);
        assert_eq!(eval_model(&m, &[9.0, -1.0, 0.0, 2.0]).unwrap(), 1.2);
        assert_eq!(render_model(&m, &names(4)), "1.2");
    }

    #[test]
    fn case13_log_block_vanishes_at_equal_radii() {
        let gamma = FittedFactor::new(U1, vec![1.0], 1.0, 0.0, vec![2]).unwrap();
        let ratio = FittedFactor::new(U4, vec![1.0, 0.0], 1.0, 0.0, vec![4]).unwrap();
        let inv = FittedFactor::new(U4, vec![1.0, 0.0], -1.0, 0.0, vec![3]).unwrap();
        // ln r - ln R split across two blocks sharing Gamma
        let m = GSModel::new(
            5,
            vec![0.0, 0.1592, 0.1592],
            vec![vec![gamma.clone(), ratio], vec![gamma, inv]],
        )
        .unwrap();
        let v = eval_model(&m, &[60.0, 35.0, 5.0, 0.6, 0.6]).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn case1_rendering() {
        let e = FittedFactor::new(U2, vec![1.0], 1.0, 0.0, vec![0]).unwrap();
        let s = FittedFactor::new(U3, vec![2.0, 0.0], 0.25, 0.0, vec![1]).unwrap();
        let m = GSModel::new(2, vec![0.0, 2.0], vec![vec![s, e]]).unwrap();
        assert_eq!(render_model(&m, &names(2)), "0.5 * exp(1*x1) * sin(2*x2 + 0)");
    }

    #[test]
    fn rendering_parses_back_to_the_same_function() {
        let b3 = FittedFactor::new(B3, vec![2.0, -1.5e-7, -1.0, 0.25], 3.0, 0.0, vec![0, 2]).unwrap();
        let mut shifted = FittedFactor::new(U1, vec![1.0], -2.0, 0.0, vec![1]).unwrap();
        shifted.offset = 4.0;
        let m = GSModel::new(3, vec![-1e-9, 2.0, 1.0], vec![vec![b3], vec![shifted]]).unwrap();
        let names = names(3);
        let tree = crate::parse::parse_expression(&render_model(&m, &names), &names).unwrap();
        for x in [[1.0, 2.0, 0.5], [0.3, -1.0, 2.0]] {
            let (a, b) = (tree.root.eval(&x), eval_model(&m, &x).unwrap());
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn factor_eval_propagates_domain_error() {
        let f = FittedFactor::new(U4, vec![1.0, 0.0], 1.0, 0.0, vec![0]).unwrap();
        let m = GSModel::new(1, vec![0.0, 1.0], vec![vec![f]]).unwrap();
        assert!(matches!(eval_model(&m, &[-1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_bad_factors() {
        assert!(FittedFactor::new(B1, vec![1.0, 1.0], 1.0, 0.0, vec![0]).is_err());
        assert!(FittedFactor::new(B1, vec![1.0, 1.0], 1.0, 0.0, vec![1, 1]).is_err());
        assert!(FittedFactor::new(U1, vec![1.0], 0.0, 0.0, vec![0]).is_err());
        assert!(GSModel::new(2, vec![0.0], vec![vec![]]).is_err());
    }
}
