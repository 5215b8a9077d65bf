//! JSON problem files describing a user-defined target.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cases::CaseSpec;
use crate::error::{Error, Result};
use crate::parse::parse_with_constants;
use crate::sampling::BoxDomain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub name: String,
    pub vars: Vec<VarSpec>,
    pub expr: String,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default = "default_eps")]
    pub eps_target: f64,
}

fn default_eps() -> f64 {
    1e-6
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("problem file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files hold finite numbers")
    }

    pub fn to_case(&self) -> Result<CaseSpec> {
        if !(self.eps_target > 0.0 && self.eps_target.is_finite()) {
            return Err(Error::InvalidInput(format!("eps_target must be positive, got {}", self.eps_target)));
        }
        let names: Vec<String> = self.vars.iter().map(|v| v.name.clone()).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidInput(format!("duplicate variable `{n}`")));
            }
            if self.constants.contains_key(n) {
                return Err(Error::InvalidInput(format!("`{n}` is both a variable and a constant")));
            }
        }
        let domain = BoxDomain::new(self.vars.iter().map(|v| (v.lo, v.hi)).collect())?;
        let tree = parse_with_constants(&self.expr, &names, &self.constants)?;
        let mut case = CaseSpec::from_expr(&self.name, tree, domain, self.eps_target);
        case.formula = self.expr.clone();
        case.constants = self.constants.clone();
        Ok(case)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::Target;

    fn sample() -> ProblemFile {
        ProblemFile {
            name: "vortex".into(),
            vars: vec![
                VarSpec { name: "g".into(), lo: 1.0, hi: 5.0 },
                VarSpec { name: "r".into(), lo: 0.2, hi: 0.8 },
            ],
            expr: "g / (2 * pi * r)".into(),
            constants: BTreeMap::from([("pi".to_string(), std::f64::consts::PI)]),
            eps_target: 1e-8,
        }
    }

    #[test]
    fn emit_parse_emit_is_stable() {
        let text = sample().to_json();
        let back = ProblemFile::from_json(&text).unwrap();
        assert_eq!(back, sample());
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn builds_a_case() {
        let case = sample().to_case().unwrap();
        let v = case.eval(&[2.0, 0.5]);
        assert!((v - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(case.var_names, vec!["g", "r"]);
    }

    #[test]
    fn rejects_bad_files() {
        let mut p = sample();
        p.expr = "g / (2 * pi * q)".into();
        assert!(matches!(p.to_case(), Err(Error::Expression(_))));
        let mut p = sample();
        p.vars[1].lo = 1.0;
        assert!(p.to_case().is_err());
        let mut p = sample();
        p.vars[1].name = "g".into();
        assert!(p.to_case().is_err());
        assert!(ProblemFile::from_json("{\"name\": 1}").is_err());
    }
}
