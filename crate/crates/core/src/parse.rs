//! Closed-form expressions for user-defined targets.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('-' | '+') unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | func '(' expr ')' | '(' expr ')'
//! ```

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::target::Target;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("parse error at {pos}: expected {}, found {found}", expected.join(" | "))]
    Parse {
        pos: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown identifier `{name}` at {pos}")]
    UnknownIdentifier { name: String, pos: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    const ALL: [Func; 6] = [Func::Sin, Func::Cos, Func::Tan, Func::Exp, Func::Ln, Func::Sqrt];

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(e) => -e.eval(x),
            Expr::Call(f, e) => f.apply(e.eval(x)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => {
                        if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                            a.powi(b as i32)
                        } else {
                            a.powf(b)
                        }
                    }
                }
            }
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_var(),
            Expr::Bin(_, a, b) => a.max_var().max(b.max_var()),
        }
    }
}

/// An expression together with the names of its variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExprTree {
    pub root: Expr,
    pub vars: Vec<String>,
}

impl fmt::Display for ExprTree {
    /// Fully parenthesized, so the text re-parses to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(e: &Expr, names: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match e {
                Expr::Num(v) if v.is_sign_negative() => write!(f, "(-{})", -v),
                Expr::Num(v) => write!(f, "{v:?}"),
                Expr::Var(i) => write!(f, "{}", names[*i]),
                Expr::Neg(e) => {
                    write!(f, "(-")?;
                    go(e, names, f)?;
                    write!(f, ")")
                }
                Expr::Call(func, e) => {
                    write!(f, "{}(", func.name())?;
                    go(e, names, f)?;
                    write!(f, ")")
                }
                Expr::Bin(op, a, b) => {
                    write!(f, "(")?;
                    go(a, names, f)?;
                    write!(f, " {} ", op.symbol())?;
                    go(b, names, f)?;
                    write!(f, ")")
                }
            }
        }
        go(&self.root, &self.vars, f)
    }
}

impl Target for ExprTree {
    fn dim(&self) -> usize {
        self.vars.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.root.eval(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Sym(c) => write!(f, "`{c}`"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v = text.parse::<f64>().map_err(|_| ExprError::Parse {
                pos: start,
                expected: vec!["number".into()],
                found: format!("`{text}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Sym(c), i));
            i += 1;
        } else {
            return Err(ExprError::Parse {
                pos: i,
                expected: vec!["operator".into(), "operand".into()],
                found: format!("`{c}`"),
            });
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    vars: &'a [String],
    constants: &'a BTreeMap<String, f64>,
}

const OPERAND: [&str; 4] = ["number", "identifier", "`(`", "`-`"];

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn error(&self, expected: &[&str]) -> ExprError {
        ExprError::Parse {
            pos: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().to_string(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.at += 1;
                Ok(Expr::Num(v))
            }
            Tok::Sym('(') => {
                self.at += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error(&["`)`", "operator"]));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                self.at += 1;
                if let Some(func) = Func::ALL.iter().find(|f| f.name() == name) {
                    if !self.eat('(') {
                        return Err(self.error(&["`(`"]));
                    }
                    let e = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.error(&["`)`", "operator"]));
                    }
                    return Ok(Expr::Call(*func, Box::new(e)));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(i));
                }
                if let Some(&v) = self.constants.get(&name) {
                    return Ok(Expr::Num(v));
                }
                Err(ExprError::UnknownIdentifier { name, pos })
            }
            _ => Err(self.error(&OPERAND)),
        }
    }
}

/// Parses `src` over the given variable names; named constants are inlined.
pub fn parse_with_constants(
    src: &str,
    var_names: &[String],
    constants: &BTreeMap<String, f64>,
) -> Result<ExprTree, ExprError> {
    let mut p = Parser {
        toks: lex(src)?,
        at: 0,
        vars: var_names,
        constants,
    };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(ExprTree {
        root,
        vars: var_names.to_vec(),
    })
}

pub fn parse_expression(src: &str, var_names: &[String]) -> Result<ExprTree, ExprError> {
    parse_with_constants(src, var_names, &BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn examples() {
        let t = parse_expression("2*cos(x1) + sin(3*x2 - x3)", &names(3)).unwrap();
        assert_eq!(t.eval(&[0.0, 0.0, 0.0]), 2.0);
        assert_eq!(parse_expression("x1^2", &names(1)).unwrap().eval(&[-3.0]), 9.0);
        let t = parse_expression("ln(x5/x4)", &names(5)).unwrap();
        assert_eq!(t.eval(&[0.0, 0.0, 0.0, 0.7, 0.7]), 0.0);
    }

    #[test]
    fn precedence() {
        let v = |s: &str| parse_expression(s, &names(1)).unwrap().eval(&[2.0]);
        assert_eq!(v("-x1^2"), -4.0);
        assert_eq!(v("2^3^2"), 512.0);
        assert_eq!(v("8/4/2"), 1.0);
        assert_eq!(v("1 - 2 - 3"), -4.0);
        assert_eq!(v("2^-1"), 0.5);
        assert_eq!(v("4e3*1.5E-3"), 6.0);
        assert_eq!(v("sqrt(x1*8) + exp(0) + tan(0)"), 5.0);
    }

    #[test]
    fn errors() {
        match parse_expression("x1 + * 2", &names(1)) {
            Err(ExprError::Parse { pos, expected, .. }) => {
                assert_eq!(pos, 5);
                assert!(expected.contains(&"number".to_string()));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            parse_expression("x1 + y", &names(1)),
            Err(ExprError::UnknownIdentifier { name: "y".into(), pos: 5 })
        );
        assert!(parse_expression("sin x1", &names(1)).is_err());
        assert!(parse_expression("(x1", &names(1)).is_err());
        assert!(parse_expression("x1 x1", &names(1)).is_err());
        assert!(parse_expression("", &names(1)).is_err());
        assert!(parse_expression("x1 % 2", &names(1)).is_err());
    }

    #[test]
    fn constants_are_inlined() {
        let c = BTreeMap::from([("g".to_string(), 1.4)]);
        let t = parse_with_constants("g*x1", &names(1), &c).unwrap();
        assert_eq!(t.root, Expr::Bin(BinOp::Mul, Box::new(Expr::Num(1.4)), Box::new(Expr::Var(0))));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![(0f64..1e3).prop_map(Expr::Num), (0usize..3).prop_map(Expr::Var)];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (0usize..6, inner.clone()).prop_map(|(k, e)| Expr::Call(Func::ALL[k], Box::new(e))),
                (0usize..5, inner.clone(), inner).prop_map(|(k, a, b)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][k];
                    Expr::Bin(op, Box::new(a), Box::new(b))
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn render_reparses_identically(root in arb_expr()) {
            let tree = ExprTree { root, vars: names(3) };
            let text = tree.to_string();
            let back = parse_expression(&text, &names(3)).unwrap();
            prop_assert_eq!(&back, &tree);
            prop_assert_eq!(back.to_string(), text);
        }
    }
}
