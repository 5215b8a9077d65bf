//! Rendered models parse back to the same function.

use proptest::prelude::*;
use sepsys_core::{eval_model, lhs_sample, parse_expression, render_model, BoxDomain, FittedFactor, GSModel, ModelTemplate};

const TEMPLATES: [ModelTemplate; 8] = {
    use ModelTemplate::*;
    [U1, U2, U3, U4, B1, B2, B3, B4]
};

fn factor(t: ModelTemplate, raw: &[f64], scale: f64, offset: f64, a: usize, b: usize) -> FittedFactor {
    // U4 takes ln(p0 x + p1): keep its argument positive on [0.5, 2]
    let mut params: Vec<f64> = raw[..t.n_params()].to_vec();
    if t == ModelTemplate::U4 {
        params = vec![raw[0].abs() + 0.1, raw[1].abs()];
    }
    let vars = if t.arity() == 1 { vec![a] } else { vec![a, b] };
    let mut f = FittedFactor::new(t, params, scale, 0.0, vars).unwrap();
    f.offset = offset;
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn render_then_parse_matches_eval(
        spec in prop::collection::vec(
            (0..8usize, prop::collection::vec(-3.0..3.0f64, 4), 0.1..4.0f64, -2.0..2.0f64, 0..3usize, 0..3usize, any::<bool>()),
            1..5,
        ),
        c in prop::collection::vec(-5.0..5.0f64, 5),
        seed in any::<u64>(),
    ) {
        let mut blocks: Vec<Vec<FittedFactor>> = vec![Vec::new(); 2];
        for (k, (t, raw, scale, offset, a, b, zero_offset)) in spec.iter().enumerate() {
            let b = if a == b { (a + 1) % 3 } else { *b };
            let off = if *zero_offset { 0.0 } else { *offset };
            blocks[k % 2].push(factor(TEMPLATES[*t], raw, *scale, off, *a, b));
        }
        blocks.retain(|b| !b.is_empty());
        let m = GSModel::new(3, c[..blocks.len() + 1].to_vec(), blocks).unwrap();
        let names: Vec<String> = vec!["x1".into(), "x2".into(), "x3".into()];
        let text = render_model(&m, &names);
        let tree = parse_expression(&text, &names).unwrap();
        let domain = BoxDomain::uniform(3, 0.5, 2.0).unwrap();
        for x in lhs_sample(&domain, 100, seed).points {
            let want = eval_model(&m, &x).unwrap();
            let got = tree.root.eval(&x);
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{text} at {x:?}: {got} vs {want}");
        }
    }
}
