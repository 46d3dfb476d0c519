use fewbit_core::analog_ops::{
    eval_envelope, has_full_level_sets, is_fully_symmetric, roots_envelope_minus_threshold,
    roots_poly_minus_threshold, EnvelopeChain, PolynomialOp,
};
use proptest::prelude::*;

fn chain() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0..4.0f64, 1..=4)
}

// Chains whose every level folds into two roots, with sorted thresholds.
fn folding_chain() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=3, 1usize..=3, -4.0..4.0f64, 0.3..1.5f64).prop_flat_map(|(depth, n_t, outer, t_max)| {
        (
            prop::collection::vec(0.2..1.5f64, depth - 1),
            prop::collection::vec(0.05..1.0f64, n_t),
        )
            .prop_map(move |(gaps, ts)| {
                let mut reach = t_max;
                let mut biases = Vec::new();
                for g in gaps {
                    let a = reach + g;
                    reach += a;
                    biases.push(a);
                }
                biases.push(outer);
                biases.reverse();
                let mut row: Vec<f64> = ts.iter().map(|u| u * t_max).collect();
                row.sort_by(f64::total_cmp);
                row.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
                (biases, row)
            })
    })
}

fn direct_eval(biases: &[f64], y: f64) -> f64 {
    match biases.split_last() {
        None => y,
        Some((a, rest)) => (direct_eval(rest, y) - a).abs(),
    }
}

// Centres of the nested mirror pairs along the left halves.
fn centres(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut v = v;
    while v.len() >= 2 {
        out.push(0.5 * (v[0] + v[v.len() - 1]));
        v = &v[..v.len() / 2];
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn eval_matches_direct_recursion(b in chain(), y in -10.0..10.0f64) {
        let c = EnvelopeChain::new(b.clone()).unwrap();
        prop_assert_eq!(eval_envelope(&c, y), direct_eval(&b, y));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn envelope_roots_solve_and_are_bounded(b in chain(), t in 0.01..5.0f64) {
        let c = EnvelopeChain::new(b).unwrap();
        let roots = roots_envelope_minus_threshold(&c, t);
        prop_assert!(roots.total_multiplicity() as usize <= 1 << c.depth());
        for r in roots.values() {
            prop_assert!((eval_envelope(&c, r) - t).abs() <= 1e-9);
        }
    }

    #[test]
    fn polynomial_roots_solve_and_are_bounded(
        coeffs in prop::collection::vec(-3.0..3.0f64, 2..=5),
        lead in prop_oneof![-3.0..-0.2f64, 0.2..3.0f64],
        t in -3.0..3.0f64,
    ) {
        let mut coeffs = coeffs;
        coeffs.push(lead);
        let p = PolynomialOp::new(coeffs).unwrap();
        let roots = roots_poly_minus_threshold(&p, t).unwrap();
        prop_assert!(roots.total_multiplicity() as usize <= p.degree());
        let scale = p.coeffs().iter().map(|c| c.abs()).sum::<f64>();
        for r in roots.values() {
            let resid = (p.eval(r) - t).abs();
            prop_assert!(resid <= 1e-9 * scale * (1.0 + r.abs()).powi(p.degree() as i32), "{r}: {resid}");
        }
    }

    #[test]
    fn folding_chains_have_symmetric_level_sets((b, row) in folding_chain()) {
        let c = EnvelopeChain::new(b).unwrap();
        prop_assert!(has_full_level_sets(&c, &row));
        let mut first: Option<Vec<f64>> = None;
        for &t in &row {
            let r = roots_envelope_minus_threshold(&c, t).values();
            prop_assert_eq!(r.len(), 1 << c.depth());
            prop_assert!(r.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(is_fully_symmetric(&r).unwrap());
            let cs = centres(&r);
            match &first {
                None => first = Some(cs),
                Some(f) => {
                    for (a, b) in f.iter().zip(&cs) {
                        prop_assert!((a - b).abs() <= 1e-9);
                    }
                }
            }
        }
    }
}
