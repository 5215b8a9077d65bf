//! The uni- and bi-variable model library.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One parametric candidate of the model library.
///
/// | id | formula |
/// |----|---------|
/// | U1 | `x^m1` |
/// | U2 | `exp(m1*x)` |
/// | U3 | `sin(m1*x + m2)` |
/// | U4 | `ln(m1*x + m2)` |
/// | B1 | `m1*x1 + m2*x2` |
/// | B2 | `exp(m1*x1*x2)` |
/// | B3 | `(x1/x2)^m1 + m2*(x1/x2)^m3 + m4` |
/// | B4 | `sin(m1*x1 + m2*x2 + m3*x1*x2 + m4)` |
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelTemplate {
    U1,
    U2,
    U3,
    U4,
    B1,
    B2,
    B3,
    B4,
}

impl ModelTemplate {
    pub const ALL: [ModelTemplate; 8] = [
        ModelTemplate::U1,
        ModelTemplate::U2,
        ModelTemplate::U3,
        ModelTemplate::U4,
        ModelTemplate::B1,
        ModelTemplate::B2,
        ModelTemplate::B3,
        ModelTemplate::B4,
    ];

    pub fn arity(self) -> usize {
        use ModelTemplate::*;
        match self {
            U1 | U2 | U3 | U4 => 1,
            B1 | B2 | B3 | B4 => 2,
        }
    }

    pub fn n_params(self) -> usize {
        use ModelTemplate::*;
        match self {
            U1 | U2 | B2 => 1,
            U3 | U4 | B1 => 2,
            B3 | B4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        use ModelTemplate::*;
        match self {
            U1 => "U1",
            U2 => "U2",
            U3 => "U3",
            U4 => "U4",
            B1 => "B1",
            B2 => "B2",
            B3 => "B3",
            B4 => "B4",
        }
    }

    /// Evaluates the template formula.
    pub fn eval(self, params: &[f64], x: &[f64]) -> Result<f64> {
        eval_template(self, params, x)
    }

    /// Infix rendering with the given argument names and parameter values.
    pub fn render(self, params: &[f64], args: &[&str]) -> String {
        use ModelTemplate::*;
        let p = |i: usize| num(params[i]);
        match self {
            U1 => format!("{}^({})", args[0], short(params[0])),
            U2 => format!("exp({}*{})", p(0), args[0]),
            U3 => format!("sin({}*{} + {})", p(0), args[0], p(1)),
            U4 => format!("ln({}*{} + {})", p(0), args[0], p(1)),
            B1 => format!("({}*{} + {}*{})", p(0), args[0], p(1), args[1]),
            B2 => format!("exp({}*{}*{})", p(0), args[0], args[1]),
            B3 => format!(
                "(({a}/{b})^({}) + {}*({a}/{b})^({}) + {})",
                short(params[0]),
                p(1),
                short(params[2]),
                p(3),
                a = args[0],
                b = args[1]
            ),
            B4 => format!(
                "sin({}*{a} + {}*{b} + {}*{a}*{b} + {})",
                p(0),
                p(1),
                p(2),
                p(3),
                a = args[0],
                b = args[1]
            ),
        }
    }
}

impl fmt::Display for ModelTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelTemplate::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown template {s}")))
    }
}

/// Shortest round-trip decimal, parenthesized when negative.
pub(crate) fn num(v: f64) -> String {
    if v.is_sign_negative() {
        format!("({})", short(v))
    } else {
        short(v)
    }
}

/// Shortest round-trip text, in exponent form away from unit scale.
pub(crate) fn short(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Real power with the usual domain restrictions.
fn real_pow(x: f64, m: f64) -> Result<f64> {
    if x == 0.0 && m < 0.0 {
        return Err(Error::Domain(format!("0^{m}")));
    }
    if x < 0.0 && m.fract() != 0.0 {
        return Err(Error::Domain(format!("({x})^{m} is not real")));
    }
    Ok(x.powf(m))
}

pub fn eval_template(id: ModelTemplate, params: &[f64], x: &[f64]) -> Result<f64> {
    use ModelTemplate::*;
    if params.len() != id.n_params() || x.len() != id.arity() {
        return Err(Error::InvalidInput(format!(
            "{id} takes {} params and {} inputs, got {} and {}",
            id.n_params(),
            id.arity(),
            params.len(),
            x.len()
        )));
    }
    let m = params;
    let v = match id {
        U1 => real_pow(x[0], m[0])?,
        U2 => (m[0] * x[0]).exp(),
        U3 => (m[0] * x[0] + m[1]).sin(),
        U4 => {
            let arg = m[0] * x[0] + m[1];
            if arg <= 0.0 {
                return Err(Error::Domain(format!("ln({arg})")));
            }
            arg.ln()
        }
        B1 => m[0] * x[0] + m[1] * x[1],
        B2 => (m[0] * x[0] * x[1]).exp(),
        B3 => {
            if x[1] == 0.0 {
                return Err(Error::Domain("x2 = 0 in ratio".into()));
            }
            let u = x[0] / x[1];
            real_pow(u, m[0])? + m[1] * real_pow(u, m[2])? + m[3]
        }
        B4 => (m[0] * x[0] + m[1] * x[1] + m[2] * x[0] * x[1] + m[3]).sin(),
    };
    Ok(v)
}

/// Sign-extended power `(-1)^round(m) |x|^m`, the continuous relaxation of
/// integer powers used while searching exponents over domains with
/// non-positive values.
pub(crate) fn signed_pow(x: f64, m: f64) -> f64 {
    if x > 0.0 {
        x.powf(m)
    } else if x == 0.0 {
        if m > 0.0 {
            0.0
        } else if m == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        let mag = (-x).powf(m);
        if (m.round() as i64) % 2 == 0 {
            mag
        } else {
            -mag
        }
    }
}

/// `amp * sin(z + phase)` rewritten with `phase` in `[-pi/2, pi/2]`.
fn fold_phase(phase: f64, amp: f64) -> (f64, f64) {
    if phase.abs() > std::f64::consts::FRAC_PI_2 {
        (phase - std::f64::consts::PI.copysign(phase), -amp)
    } else {
        (phase, amp)
    }
}

/// Linear structure of a template used by variable projection: the
/// template (times a scale, plus an offset) lies in the span of
/// `columns(theta, x)` and a constant column.
pub(crate) struct Basis;

impl Basis {
    /// Number of nonlinear parameters searched by the optimizer.
    pub fn n_nonlinear(id: ModelTemplate) -> usize {
        use ModelTemplate::*;
        match id {
            U1 | U2 | U3 | B2 => 1,
            U4 | B3 => 2,
            B1 => 0,
            B4 => 3,
        }
    }

    /// Number of non-constant columns.
    pub fn n_columns(id: ModelTemplate) -> usize {
        use ModelTemplate::*;
        match id {
            U1 | U2 | U4 | B2 => 1,
            U3 | B1 | B3 | B4 => 2,
        }
    }

    /// Writes the columns for one input into `out`; `false` on a domain
    /// violation.
    pub fn columns(id: ModelTemplate, theta: &[f64], x: &[f64], out: &mut [f64]) -> bool {
        use ModelTemplate::*;
        match id {
            U1 => out[0] = signed_pow(x[0], theta[0]),
            U2 => out[0] = (theta[0] * x[0]).exp(),
            U3 => {
                let (s, c) = (theta[0] * x[0]).sin_cos();
                out[0] = s;
                out[1] = c;
            }
            U4 => {
                let arg = theta[0] * x[0] + theta[1];
                if arg <= 0.0 {
                    return false;
                }
                out[0] = arg.ln();
            }
            B1 => {
                out[0] = x[0];
                out[1] = x[1];
            }
            B2 => out[0] = (theta[0] * x[0] * x[1]).exp(),
            B3 => {
                if x[1] == 0.0 {
                    return false;
                }
                let u = x[0] / x[1];
                out[0] = signed_pow(u, theta[0]);
                out[1] = signed_pow(u, theta[1]);
            }
            B4 => {
                let z = theta[0] * x[0] + theta[1] * x[1] + theta[2] * x[0] * x[1];
                let (s, c) = z.sin_cos();
                out[0] = s;
                out[1] = c;
            }
        }
        out[..Self::n_columns(id)].iter().all(|v| v.is_finite())
    }

    /// Converts nonlinear parameters plus least-squares coefficients
    /// (`coef` for the columns, `c` for the constant) into
    /// `(params, scale, offset)` with `value = scale * template + offset`.
    /// Returns `None` when the coefficients do not determine a non-zero
    /// scale.
    pub fn to_params(id: ModelTemplate, theta: &[f64], coef: &[f64], c: f64) -> Option<(Vec<f64>, f64, f64)> {
        use ModelTemplate::*;
        let out = match id {
            U1 | U2 | U4 | B2 => (theta.to_vec(), coef[0], c),
            U3 => {
                let (a, b) = (coef[0], coef[1]);
                let amp = a.hypot(b);
                let phase = b.atan2(a);
                let (m1, phase, amp) = if theta[0] < 0.0 {
                    (-theta[0], -phase, -amp)
                } else {
                    (theta[0], phase, amp)
                };
                let (phase, amp) = fold_phase(phase, amp);
                (vec![m1, phase], amp, c)
            }
            B1 => (vec![coef[0], coef[1]], 1.0, c),
            B3 => {
                let (mut a, mut b, mut e1, mut e2) = (coef[0], coef[1], theta[0], theta[1]);
                if a.abs() < b.abs() {
                    std::mem::swap(&mut a, &mut b);
                    std::mem::swap(&mut e1, &mut e2);
                }
                if a == 0.0 {
                    return None;
                }
                (vec![e1, b / a, e2, c / a], a, 0.0)
            }
            B4 => {
                let (a, b) = (coef[0], coef[1]);
                let amp = a.hypot(b);
                let phase = b.atan2(a);
                let (sign, phase, amp) = if theta[0] < 0.0 { (-1.0, -phase, -amp) } else { (1.0, phase, amp) };
                let (phase, amp) = fold_phase(phase, amp);
                (vec![sign * theta[0], sign * theta[1], sign * theta[2], phase], amp, c)
            }
        };
        if out.1 == 0.0 || !out.1.is_finite() {
            return None;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ModelTemplate::*;

    #[test]
    fn table_values() {
        assert_eq!(eval_template(U1, &[-0.5], &[4.0]).unwrap(), 0.5);
        assert_eq!(eval_template(B2, &[0.0], &[7.0, -3.0]).unwrap(), 1.0);
        assert_eq!(eval_template(B1, &[1.0, 1.0], &[2.0, 3.0]).unwrap(), 5.0);
        assert_eq!(eval_template(U3, &[2.0, 0.0], &[0.25]).unwrap(), 0.5f64.sin());
        assert_eq!(eval_template(U4, &[3.0, 1.2], &[1.0]).unwrap(), 4.2f64.ln());
        let b3 = eval_template(B3, &[1.0, 0.1, 2.0, 4.0], &[3.0, 2.0]).unwrap();
        assert!((b3 - (1.5 + 0.1 * 2.25 + 4.0)).abs() < 1e-15);
        let b4 = eval_template(B4, &[1.0, 2.0, 3.0, 0.5], &[0.1, 0.2]).unwrap();
        assert_eq!(b4, (0.1 + 0.4 + 3.0 * 0.02 + 0.5f64).sin());
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(eval_template(U4, &[1.0, 0.0], &[0.0]), Err(Error::Domain(_))));
        assert!(matches!(eval_template(U4, &[1.0, -2.0], &[1.0]), Err(Error::Domain(_))));
        assert!(matches!(eval_template(U1, &[-1.0], &[0.0]), Err(Error::Domain(_))));
        assert!(matches!(eval_template(U1, &[0.5], &[-2.0]), Err(Error::Domain(_))));
        assert!(matches!(
            eval_template(B3, &[1.0, 1.0, 1.0, 0.0], &[1.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert_eq!(eval_template(U1, &[-1.0], &[-2.0]).unwrap(), -0.5);
    }

    #[test]
    fn arity_and_param_counts() {
        for t in ModelTemplate::ALL {
            assert!(Basis::n_nonlinear(t) <= t.n_params());
        }
        assert!(eval_template(U1, &[1.0, 2.0], &[1.0]).is_err());
        assert!(eval_template(B1, &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn signed_pow_matches_integer_powers() {
        for x in [-2.5, -1.0, -0.3, 0.4, 3.0] {
            for m in [-2.0, -1.0, 1.0, 2.0, 3.0] {
                assert_eq!(signed_pow(x, m), x.powf(m));
            }
        }
    }

    #[test]
    fn u3_canonical_form_reproduces_columns() {
        let theta = [-2.0];
        let (a, b, c) = (0.7, -1.1, 0.3);
        let (p, s, o) = Basis::to_params(U3, &theta, &[a, b], c).unwrap();
        assert!(p[0] >= 0.0 && p[1].abs() <= std::f64::consts::FRAC_PI_2);
        for x in [-1.0, 0.2, 2.5] {
            let direct = a * (theta[0] * x).sin() + b * (theta[0] * x).cos() + c;
            let v = s * eval_template(U3, &p, &[x]).unwrap() + o;
            assert!((direct - v).abs() < 1e-14);
        }
    }

    #[test]
    fn b4_canonical_form_reproduces_columns() {
        let theta = [-1.5, 2.0, 0.3];
        let (a, b, c) = (-0.4, 0.9, 1.0);
        let (p, s, o) = Basis::to_params(B4, &theta, &[a, b], c).unwrap();
        assert!(p[0] >= 0.0 && p[3].abs() <= std::f64::consts::FRAC_PI_2);
        for x in [[0.5, -1.0], [2.0, 1.5]] {
            let z = theta[0] * x[0] + theta[1] * x[1] + theta[2] * x[0] * x[1];
            let direct = a * z.sin() + b * z.cos() + c;
            let v = s * eval_template(B4, &p, &x).unwrap() + o;
            assert!((direct - v).abs() < 1e-14);
        }
    }

    #[test]
    fn b3_canonical_form_reproduces_columns() {
        let theta = [2.0, 1.0];
        let (p, s, o) = Basis::to_params(B3, &theta, &[-0.25, 0.025], 1.0).unwrap();
        for x in [[3.0, 20.0], [4.0, 25.0]] {
            let u: f64 = x[0] / x[1];
            let direct = -0.25 * u * u + 0.025 * u + 1.0;
            let v = s * eval_template(B3, &p, &x).unwrap() + o;
            assert!((direct - v).abs() < 1e-14);
        }
    }
}
