use fewbit_core::analog_ops::Family;
use fewbit_core::capacity_engine::{
    blahut_arimoto, blahut_arimoto_constrained, budget_representatives, build_dmc_from_partition, capacity_sweep,
    enumerate_budget, input_grid, power_for_snr, BaConfig, QuantizedDmc, SearchConfig,
};
use fewbit_core::scalar_quantizer::Partition;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn distinct_cells(mut b: Vec<f64>) -> Partition {
    b.sort_by(f64::total_cmp);
    let labels = (0..=b.len()).map(|i| vec![i as u8]).collect();
    Partition { breakpoints: b, labels }
}

fn random_breakpoints(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> Vec<f64> {
    (0..k).map(|_| (2.0 * uniform(rng) - 1.0) * scale).collect()
}

// max_i D(W_i || q) in bits, the Arimoto upper bound for input p
fn upper_bound(dmc: &QuantizedDmc, p: &[f64]) -> f64 {
    let k = dmc.n_outputs();
    let mut q = vec![0.0; k];
    for (i, &pi) in p.iter().enumerate() {
        for (qy, w) in q.iter_mut().zip(dmc.row(i)) {
            *qy += pi * w;
        }
    }
    (0..dmc.n_inputs())
        .map(|i| {
            dmc.row(i)
                .iter()
                .zip(&q)
                .filter(|(&w, _)| w > 0.0)
                .map(|(&w, &qy)| w * (w / qy).log2())
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn refining_a_partition_never_lowers_capacity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p_t = 10f64.powf(-0.5 + 2.5 * uniform(&mut rng));
        let s = p_t.sqrt().max(1.0);
        let k = 1 + (uniform(&mut rng) * 6.0) as usize;
        let coarse = random_breakpoints(&mut rng, k, 2.0 * s);
        let mut fine = coarse.clone();
        fine.push((2.0 * uniform(&mut rng) - 1.0) * 2.0 * s);
        let grid = input_grid(p_t, 0.1);
        let cfg = BaConfig::default();
        let c0 = blahut_arimoto_constrained(&build_dmc_from_partition(&distinct_cells(coarse), 1.0, &grid), p_t, &cfg)
            .unwrap();
        let c1 = blahut_arimoto_constrained(&build_dmc_from_partition(&distinct_cells(fine), 1.0, &grid), p_t, &cfg)
            .unwrap();
        assert!(c1.rate >= c0.rate - 1e-7, "{} < {}", c1.rate, c0.rate);
    }
}

#[test]
fn constrained_runs_converge_within_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let p_t = 10f64.powf(-0.5 + 2.5 * uniform(&mut rng));
        let s = p_t.sqrt().max(1.0);
        let k = 1 + (uniform(&mut rng) * 10.0) as usize;
        let b = random_breakpoints(&mut rng, k, 2.0 * s);
        let dmc = build_dmc_from_partition(&distinct_cells(b), 1.0, &input_grid(p_t, 0.1));
        let r = blahut_arimoto_constrained(&dmc, p_t, &BaConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.power <= p_t * (1.0 + 1e-9), "{} > {p_t}", r.power);
        assert!(r.rate >= 0.0 && r.rate <= ((k + 1) as f64).log2() + 1e-12);
        let total: f64 = r.input_distribution.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn arimoto_bounds_bracket_the_result() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let k = 1 + (uniform(&mut rng) * 8.0) as usize;
        let b = random_breakpoints(&mut rng, k, 4.0);
        let grid: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.1).collect();
        let dmc = build_dmc_from_partition(&distinct_cells(b), 1.0, &grid);
        let r = blahut_arimoto(&dmc, 1e-9, 10_000).unwrap();
        let up = upper_bound(&dmc, &r.input_distribution);
        assert!(up >= r.rate - 1e-12);
        assert!(up - r.rate <= 1e-9, "gap {}", up - r.rate);
    }
}

#[test]
fn budget_points_fit_the_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let alpha = 0.1 + 2.0 * uniform(&mut rng);
        let p_adc = alpha * 24.0 * uniform(&mut rng);
        for bp in enumerate_budget(p_adc, alpha) {
            assert!(alpha * (bp.n_q * bp.levels) as f64 <= p_adc * (1.0 + 1e-9));
        }
        for family in [Family::Envelope, Family::Poly] {
            for bp in budget_representatives(family, 2, p_adc, alpha) {
                assert!(alpha * (bp.n_q * bp.levels) as f64 <= p_adc * (1.0 + 1e-9));
            }
        }
    }
}

#[test]
fn sweeps_are_monotone_in_snr_and_budget() {
    let cfg = SearchConfig {
        grid_points: 10,
        screen_inputs: 60,
        refine_top: 1,
        ..SearchConfig::default()
    };
    let p_t: Vec<f64> = [-5.0, 5.0, 15.0, 25.0].iter().map(|&s| power_for_snr(1.0, s)).collect();
    for family in [Family::Envelope, Family::Poly] {
        let mut previous: Option<Vec<f64>> = None;
        for p_adc in [4.0, 6.0, 8.0] {
            let rows = capacity_sweep(family, 1, p_adc, 1.0, 1.0, &p_t, &cfg);
            let rates: Vec<f64> = rows.iter().map(|r| r.rate).collect();
            assert!(rates.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{family:?} {p_adc}: {rates:?}");
            if let Some(prev) = &previous {
                assert!(prev.iter().zip(&rates).all(|(a, b)| b >= &(a - 1e-9)), "{family:?} {p_adc}");
            }
            previous = Some(rates);
        }
    }
}
