use std::collections::HashSet;

use fewbit_core::analog_ops::{AnalogOp, EnvelopeChain, PolynomialOp};
use fewbit_core::scalar_quantizer::{
    extract_code, extract_partition, high_snr_rate, ScalarQuantizer, ThresholdMatrix,
};
use proptest::prelude::*;

fn sorted_row(levels: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, levels - 1).prop_map(|mut r| {
        r.sort_by(f64::total_cmp);
        r
    })
}

fn envelope_quantizer() -> impl Strategy<Value = ScalarQuantizer> {
    (1usize..=3, 2usize..=3).prop_flat_map(|(n_q, levels)| {
        prop::collection::vec(
            (prop::collection::vec(-3.0..3.0f64, 1..=3), sorted_row(levels, 0.1, 3.0)),
            n_q,
        )
        .prop_map(|adcs| {
            let (ops, rows): (Vec<_>, Vec<_>) = adcs
                .into_iter()
                .map(|(b, r)| (AnalogOp::Envelope(EnvelopeChain::new(b).unwrap()), r))
                .unzip();
            ScalarQuantizer::new(ops, ThresholdMatrix::new(rows).unwrap()).unwrap()
        })
    })
}

fn poly_quantizer() -> impl Strategy<Value = ScalarQuantizer> {
    (1usize..=3, 2usize..=3).prop_flat_map(|(n_q, levels)| {
        prop::collection::vec(
            (
                prop::collection::vec(-2.0..2.0f64, 1..=3),
                prop_oneof![-2.0..-0.3f64, 0.3..2.0f64],
                sorted_row(levels, -3.0, 3.0),
            ),
            n_q,
        )
        .prop_map(|adcs| {
            let (ops, rows): (Vec<_>, Vec<_>) = adcs
                .into_iter()
                .map(|(mut c, lead, r)| {
                    c.push(lead);
                    (AnalogOp::Poly(PolynomialOp::new(c).unwrap()), r)
                })
                .unzip();
            ScalarQuantizer::new(ops, ThresholdMatrix::new(rows).unwrap()).unwrap()
        })
    })
}

// Single detectors with crossings on a coarse integer grid, so breakpoints
// of different ADCs often coincide.
fn integer_detectors() -> impl Strategy<Value = ScalarQuantizer> {
    prop::collection::vec((-4i32..4, 1i32..4), 1..=4).prop_map(|d| {
        let ops = d
            .iter()
            .map(|&(a, w)| AnalogOp::Envelope(EnvelopeChain::new(vec![a as f64 + 0.5 * w as f64]).unwrap()))
            .collect();
        let rows = d.iter().map(|&(_, w)| vec![0.5 * w as f64]).collect();
        ScalarQuantizer::new(ops, ThresholdMatrix::new(rows).unwrap()).unwrap()
    })
}

fn any_quantizer() -> impl Strategy<Value = ScalarQuantizer> {
    prop_oneof![envelope_quantizer(), poly_quantizer(), integer_detectors()]
}

fn grid_outputs(q: &ScalarQuantizer, lo: f64, hi: f64) -> HashSet<Vec<u8>> {
    let n = ((hi - lo) / 1e-3) as usize;
    (0..=n).map(|i| q.quantize(lo + 1e-3 * i as f64 + 3.7e-5)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn code_size_matches_dense_grid(q in any_quantizer()) {
        let p = extract_partition(&q).unwrap();
        prop_assume!(p.breakpoints.windows(2).all(|w| w[1] - w[0] > 2e-3));
        let lo = p.breakpoints.first().copied().unwrap_or(0.0) - 5.0;
        let hi = p.breakpoints.last().copied().unwrap_or(0.0) + 5.0;
        let size = extract_code(&q).unwrap().size();
        prop_assert_eq!(size, grid_outputs(&q, lo, hi).len());
    }

    #[test]
    fn labels_match_midpoints_and_limits(q in any_quantizer()) {
        let p = extract_partition(&q).unwrap();
        for i in 0..p.n_cells() {
            let (a, b) = p.cell(i);
            let y = match (a.is_finite(), b.is_finite()) {
                (true, true) => 0.5 * (a + b),
                (false, true) => b - 100.0,
                (true, false) => a + 100.0,
                (false, false) => 0.0,
            };
            prop_assert_eq!(&p.labels[i], &q.quantize(y));
        }
        prop_assert!(p.labels.windows(2).all(|w| w[0] != w[1]));
        let first = p.labels.first().unwrap();
        let last = p.labels.last().unwrap();
        for (j, op) in q.ops().iter().enumerate() {
            match op {
                AnalogOp::Envelope(_) => prop_assert_eq!(first[j], last[j]),
                AnalogOp::Poly(poly) if poly.degree() % 2 == 1 => prop_assert_ne!(first[j], last[j]),
                AnalogOp::Poly(_) => prop_assert_eq!(first[j], last[j]),
            }
        }
    }
}

fn rescaled(q: &ScalarQuantizer, scale: f64, shift: f64) -> ScalarQuantizer {
    let ops = q
        .ops()
        .iter()
        .map(|op| match op {
            AnalogOp::Envelope(c) => {
                let b: Vec<f64> = c
                    .biases()
                    .iter()
                    .enumerate()
                    .map(|(s, a)| if s == 0 { scale * a + shift } else { scale * a })
                    .collect();
                AnalogOp::Envelope(EnvelopeChain::new(b).unwrap())
            }
            AnalogOp::Poly(_) => unreachable!(),
        })
        .collect();
    let rows = q
        .thresholds()
        .rows()
        .iter()
        .map(|r| r.iter().map(|t| scale * t).collect())
        .collect();
    ScalarQuantizer::new(ops, ThresholdMatrix::new(rows).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn rate_is_invariant_under_increasing_maps(
        q in envelope_quantizer(),
        scale in 0.2..5.0f64,
        shift in -10.0..10.0f64,
    ) {
        let r = rescaled(&q, scale, shift);
        let (c, c2) = (extract_code(&q).unwrap(), extract_code(&r).unwrap());
        prop_assert_eq!(c.codewords(), c2.codewords());
        prop_assert_eq!(high_snr_rate(&c), high_snr_rate(&c2));
        let (p, p2) = (extract_partition(&q).unwrap(), extract_partition(&r).unwrap());
        for (a, b) in p.breakpoints.iter().zip(&p2.breakpoints) {
            prop_assert!((scale * a + shift - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
