//! Built-in case evaluators against an independent second entry of every formula.

use rand::Rng as _;
use sepsys_core::rng::rng;
use sepsys_core::{builtin_case, Target};

fn reference(id: u32, v: &[f64]) -> f64 {
    let x = |i: usize| v[i - 1];
    match id {
        1 => 0.5 * x(1).exp() * (2.0 * x(2)).sin(),
        2 => 2.0 * x(1).cos() + (3.0 * x(2) - x(3)).sin(),
        3 => 1.2 + 10.0 * (2.0 * x(1)).sin() - 3.0 * x(2).powi(2) * x(3).cos(),
        4 => x(3) * (x(1).sin() - 2.0 * x(2).cos()),
        5 => x(4).cos() * 2.0 * x(1) * x(2).sin() - 0.5 * x(4) * x(3).cos(),
        6 => {
            10.0 + 0.2 * x(1) - 0.2 * x(5).powi(2) * x(2).sin() + x(5).cos() * (3.0 * x(3) + 1.2).ln()
                - 1.2 * (x(4) / 2.0).exp()
        }
        7 => x(5) * (2.0 * x(4) * x(1).sin() - x(2)) + 0.5 * x(3).exp() * x(4).cos(),
        8 => {
            1.2 + 2.0 * x(4) * x(2).cos() + 0.5 * (1.2 * x(3)).exp() * (3.0 * x(1)).sin() * x(4).cos()
                - 2.0 * (1.5 * x(5) + 5.0).cos()
        }
        9 => 0.5 * (x(3) * x(4)).cos() * (-x(1)).exp() * x(2).powi(-2) * (1.5 * x(5) - 2.0 * x(6)).sin(),
        10 => 1.2 - 2.0 * (x(1) + x(2)) * x(7).cos() / x(3) + 0.5 * x(7).exp() * x(4) * (x(5) * x(6)).sin(),
        11 => 4000.0 * x(1) * x(2) * x(3).powf(-0.5),
        12 => x(1) * x(2) - 2.0 * x(1) + x(3) * x(4) * x(5) / x(6),
        13 => {
            let (vinf, theta, gamma, big_r, r) = (x(1), x(2), x(3), x(4), x(5));
            vinf * theta * (r - big_r * big_r / r) + gamma / (2.0 * std::f64::consts::PI) * (r.ln() - big_r.ln())
        }
        14 => {
            let ratio = x(2) / x(3);
            let tail = x(13) * x(14) * (x(18) * x(7) - x(8) + x(9)) + x(16) * x(17) * (x(18) * x(10) - x(11) + x(12));
            x(1) - x(4) * x(5) * x(6) * (1.0 + 0.025 * ratio - 0.25 * ratio * ratio) + tail / x(15)
        }
        _ => unreachable!(),
    }
}

#[test]
fn evaluators_match_second_entry() {
    for id in 1..=14 {
        let case = builtin_case(id).unwrap();
        let mut r = rng(id as u64);
        for _ in 0..1000 {
            let x: Vec<f64> = case.domain.bounds().iter().map(|&(a, b)| r.random_range(a..b)).collect();
            let (got, want) = (case.eval(&x), reference(id, &x));
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-300), "case {id} at {x:?}: {got} vs {want}");
        }
    }
}

#[test]
fn formulas_in_parser_syntax_match_evaluators() {
    for id in 1..=14 {
        let case = builtin_case(id).unwrap();
        let tree = sepsys_core::parse_expression(&case.formula, &case.var_names).unwrap();
        let mut r = rng(100 + id as u64);
        for _ in 0..200 {
            let x: Vec<f64> = case.domain.bounds().iter().map(|&(a, b)| r.random_range(a..b)).collect();
            let (got, want) = (tree.eval(&x), case.eval(&x));
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "case {id}: {got} vs {want}");
        }
    }
}

#[test]
fn toy_domains_and_dimensions() {
    let dims = [2, 3, 3, 3, 4, 5, 5, 5, 6, 7, 3, 6, 5, 18];
    for (id, n) in (1..=14).zip(dims) {
        let case = builtin_case(id).unwrap();
        assert_eq!(case.n(), n, "case {id}");
        if id <= 10 {
            let want = if id == 6 { (1.0, 4.0) } else { (-3.0, 3.0) };
            assert!(case.domain.bounds().iter().all(|&b| b == want), "case {id}");
        }
    }
    assert_eq!(builtin_case(11).unwrap().constants["gamma"], 1.4);
    assert_eq!(builtin_case(12).unwrap().constants["alpha0"], -2.0);
}
