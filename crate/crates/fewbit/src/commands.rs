//! Subcommand bodies. Each writes its report to `stdout` and its table to
//! `--out` when given.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use fewbit_core::analog_ops::Family;
use fewbit_core::capacity_engine::{
    best_per_power, budget_representatives, power_for_snr, sweep_configuration, BudgetPoint, SweepRow,
};
use fewbit_core::code_construction::{balanced_bounds, balanced_gray_code, is_gray_cycle};
use fewbit_core::hybrid_sim::{
    count_regions_grid, count_regions_separable, default_box, default_constellation, label_grid,
    monte_carlo_chunk, noise_std, optimize_constellation, rate_from_counts, theorem6_bounds, McSetup,
    OptimizeConfig, RegionCensus, VectorQuantizer, CHUNK, DEFAULT_SEED,
};
use fewbit_core::scalar_quantizer::{
    extract_partition, format_codeword, high_snr_rate, validate_code_properties, AssociatedCode, Codeword,
};
use rayon::prelude::*;

use crate::config::{CensusMethod, GrayConfig, HybridSimConfig, RegionsConfig, SweepConfig};
use crate::error::CliError;
use crate::formats::{csv_writer, vector_quantizer, FamilyName, QuantizerDoc};
use crate::numfmt::{sig, sig_list};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub strict: bool,
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })
}

// Writes the table to --out, or to stdout when absent.
fn emit(opts: &RunOptions, stdout: &mut dyn Write, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let write = |w: &mut dyn Write| -> Result<(), CliError> {
        let mut csv = csv_writer(w);
        csv.write_record(header)?;
        for r in rows {
            csv.write_record(r)?;
        }
        csv.flush()?;
        Ok(())
    };
    match &opts.out {
        Some(p) => {
            let mut f = create(p)?;
            write(&mut f)?;
            f.flush()?;
            Ok(())
        }
        None => write(stdout),
    }
}

fn code_line(words: &[Codeword]) -> String {
    words.iter().map(|w| format_codeword(w)).collect::<Vec<_>>().join(",")
}

pub fn cmd_code(cfg: &QuantizerDoc, opts: &RunOptions, stdout: &mut dyn Write) -> Result<(), CliError> {
    let q = cfg.build()?;
    let p = extract_partition(&q)?;
    let code = AssociatedCode::new(p.labels.clone(), q.levels());
    let delta = q.ops().iter().map(|o| o.order()).max().unwrap_or(0);
    writeln!(
        stdout,
        "family={} n_q={} levels={} delta={}",
        FamilyName::from(q.family()).as_str(),
        q.n_q(),
        q.levels(),
        delta
    )?;
    // roots at the origin come back as tiny residues
    let shown: Vec<f64> = p
        .breakpoints
        .iter()
        .map(|&x| if x.abs() < 1e-12 { 0.0 } else { x })
        .collect();
    writeln!(stdout, "breakpoints={}", sig_list(&shown))?;
    writeln!(stdout, "code={}", code_line(code.codewords()))?;
    writeln!(stdout, "size={}", code.size())?;
    writeln!(stdout, "rate_bits={}", sig(high_snr_rate(&code)))?;
    let kappa: Vec<String> = code.transition_counts().iter().map(|k| k.to_string()).collect();
    writeln!(stdout, "kappa={}", kappa.join(","))?;
    let report = validate_code_properties(&code, q.family(), delta, q.levels(), q.n_q());
    for c in &report.checks {
        writeln!(stdout, "property {} {} {}", c.name, if c.pass { "pass" } else { "fail" }, c.detail)?;
    }
    if opts.out.is_some() {
        let rows: Vec<Vec<String>> = (0..p.n_cells())
            .map(|i| {
                let (a, b) = p.cell(i);
                vec![i.to_string(), sig(a), sig(b), format_codeword(&p.labels[i])]
            })
            .collect();
        emit(opts, stdout, &["cell", "lower", "upper", "codeword"], &rows)?;
    }
    Ok(())
}

fn sweep_row(r: &SweepRow) -> Vec<String> {
    vec![
        sig(r.snr_db),
        r.budget.n_q.to_string(),
        r.budget.levels.to_string(),
        r.delta.to_string(),
        FamilyName::from(r.family).as_str().to_string(),
        sig(r.rate),
        sig(r.ceiling_bits),
        sig(r.power),
        r.n_inputs.to_string(),
    ]
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "snr_db",
    "n_q",
    "ell",
    "delta",
    "family",
    "rate_bits",
    "ceiling_bits",
    "power_used",
    "n_inputs",
];

pub fn cmd_capacity_sweep(cfg: &SweepConfig, opts: &RunOptions, stdout: &mut dyn Write) -> Result<(), CliError> {
    let family: Family = cfg.family.into();
    if cfg.delta == 0 || cfg.delta > 16 {
        return Err(CliError::invalid("delta must be in 1..=16"));
    }
    if !(cfg.h.is_finite() && cfg.h != 0.0) {
        return Err(CliError::invalid("h must be finite and non-zero"));
    }
    if cfg.snr_db.is_empty() || cfg.snr_db.iter().any(|s| !s.is_finite()) {
        return Err(CliError::invalid("snr_db must be a non-empty list of finite values"));
    }
    let search = cfg.search.build()?;
    let powers: Vec<f64> = cfg.snr_db.iter().map(|&s| power_for_snr(cfg.h, s)).collect();

    let rows: Vec<SweepRow> = match (cfg.configs.is_empty(), cfg.p_adc) {
        (false, None) => {
            if cfg.configs.iter().any(|b| b.n_q == 0 || !(2..=256).contains(&b.ell)) {
                return Err(CliError::invalid("configs need n_q ≥ 1 and 2 ≤ ell ≤ 256"));
            }
            let curves: Vec<Vec<SweepRow>> = cfg
                .configs
                .par_iter()
                .map(|b| {
                    let bp = BudgetPoint {
                        n_q: b.n_q,
                        levels: b.ell,
                    };
                    sweep_configuration(family, bp, cfg.delta, cfg.h, &powers, &search)
                })
                .collect();
            curves.into_iter().flatten().collect()
        }
        (true, Some(p_adc)) => {
            if !(p_adc > 0.0 && cfg.alpha > 0.0) {
                return Err(CliError::invalid("p_adc and alpha must be positive"));
            }
            let reps = budget_representatives(family, cfg.delta, p_adc, cfg.alpha);
            if reps.is_empty() {
                return Err(CliError::invalid("budget admits no (n_q, ell) pair"));
            }
            let curves: Vec<Vec<SweepRow>> = reps
                .par_iter()
                .map(|&bp| sweep_configuration(family, bp, cfg.delta, cfg.h, &powers, &search))
                .collect();
            best_per_power(&curves)
        }
        _ => return Err(CliError::invalid("give exactly one of configs and p_adc")),
    };

    let table: Vec<Vec<String>> = rows.iter().map(sweep_row).collect();
    emit(opts, stdout, &SWEEP_COLUMNS, &table)?;
    let failed = rows.iter().filter(|r| !r.converged).count();
    if failed > 0 && (cfg.strict || opts.strict) {
        return Err(CliError::NotConverged(failed));
    }
    Ok(())
}

fn regions_quantizer(cfg: &RegionsConfig) -> Result<VectorQuantizer, CliError> {
    match (&cfg.hybrid, cfg.comparators.is_empty()) {
        (Some(h), true) => Ok(VectorQuantizer::hybrid(cfg.n_s, h.n_q, h.ell, h.zeta)?),
        (None, false) => vector_quantizer(cfg.n_s, &cfg.comparators),
        _ => Err(CliError::invalid("give exactly one of comparators and hybrid")),
    }
}

pub fn cmd_regions(cfg: &RegionsConfig, opts: &RunOptions, stdout: &mut dyn Write) -> Result<(), CliError> {
    let q = regions_quantizer(cfg)?;
    let (lo, hi) = match &cfg.bounds {
        Some(b) => (b.lo.clone(), b.hi.clone()),
        None => default_box(&q, 2.0),
    };
    let mut results: Vec<(&str, RegionCensus)> = Vec::new();
    if matches!(cfg.method, CensusMethod::Grid | CensusMethod::Both) {
        results.push(("grid", count_regions_grid(&q, &lo, &hi, cfg.base_resolution)?));
    }
    if matches!(cfg.method, CensusMethod::Separable | CensusMethod::Both) {
        results.push(("separable", count_regions_separable(&q)?));
    }
    for (m, c) in &results {
        writeln!(
            stdout,
            "method={m} total={} unique={} rate_bits={}",
            c.total_regions,
            c.unique_regions,
            sig(c.rate_bits())
        )?;
    }
    if let Some(g) = &cfg.label_grid {
        let grid = label_grid(&q, &lo, &hi, g.resolution)?;
        let d = grid.dims();
        let mut header: Vec<String> = (1..=d).map(|k| format!("y{k}")).collect();
        header.extend(["region".to_string(), "codeword".to_string()]);
        let mut f = create(&PathBuf::from(&g.path))?;
        {
            let mut csv = csv_writer(&mut f);
            csv.write_record(&header)?;
            for (flat, &id) in grid.ids.iter().enumerate() {
                let mut rec: Vec<String> = grid.center(flat).into_iter().map(sig).collect();
                rec.push(id.to_string());
                rec.push(format_codeword(&grid.labels[id as usize]));
                csv.write_record(&rec)?;
            }
            csv.flush()?;
        }
        f.flush()?;
    }
    if opts.out.is_some() {
        let rows: Vec<Vec<String>> = results
            .iter()
            .map(|(m, c)| {
                vec![
                    m.to_string(),
                    c.total_regions.to_string(),
                    c.unique_regions.to_string(),
                    sig(c.rate_bits()),
                ]
            })
            .collect();
        emit(opts, stdout, &["method", "total_regions", "unique_regions", "rate_bits"], &rows)?;
    }
    Ok(())
}

pub fn cmd_gray(cfg: &GrayConfig, opts: &RunOptions, stdout: &mut dyn Write) -> Result<(), CliError> {
    if !(1..=16).contains(&cfg.n) {
        return Err(CliError::invalid("n must be in 1..=16"));
    }
    let code = balanced_gray_code(cfg.n);
    let (lo, hi) = balanced_bounds(cfg.n);
    let kappa: Vec<String> = code.transition_counts().iter().map(|k| k.to_string()).collect();
    writeln!(
        stdout,
        "n={} size={} cycle={} kappa={} bounds={lo}..{hi}",
        cfg.n,
        code.size(),
        is_gray_cycle(&code),
        kappa.join(",")
    )?;
    // the closing codeword repeats the first and is left out of the listing
    let words = code.codewords();
    let rows: Vec<Vec<String>> = words[..words.len() - 1]
        .iter()
        .enumerate()
        .map(|(i, w)| vec![i.to_string(), format_codeword(w)])
        .collect();
    emit(opts, stdout, &["index", "codeword"], &rows)
}

/// Monte Carlo rate with sample blocks spread over the thread pool; equal to
/// the sequential estimate for the same seed.
pub fn parallel_rate(q: &VectorQuantizer, setup: &McSetup) -> Result<f64, CliError> {
    let sigma = noise_std(q, setup);
    let chunks = setup.n_samples.div_ceil(CHUNK);
    let parts: Vec<_> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = CHUNK.min(setup.n_samples - c * CHUNK);
            monte_carlo_chunk(q, setup, c as u64, n, sigma)
        })
        .collect();
    let mut counts: BTreeMap<(usize, Codeword), usize> = BTreeMap::new();
    for part in parts {
        for (k, c) in part {
            *counts.entry(k).or_insert(0) += c;
        }
    }
    Ok(rate_from_counts(setup.constellation.len(), &counts)?.0)
}

pub const HYBRID_COLUMNS: [&str; 10] = [
    "snr_db",
    "n_s",
    "n_q",
    "ell",
    "zeta",
    "rate_bits",
    "lower_bound_bits",
    "n_samples",
    "seed",
    "mode",
];

pub fn cmd_hybrid_sim(cfg: &HybridSimConfig, opts: &RunOptions, stdout: &mut dyn Write) -> Result<(), CliError> {
    let seed = opts.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    if cfg.n_samples < 1000 {
        return Err(CliError::invalid("n_samples must be at least 1000"));
    }
    if cfg.snr_db.is_empty() || cfg.snr_db.iter().any(|s| !s.is_finite()) {
        return Err(CliError::invalid("snr_db must be a non-empty list of finite values"));
    }
    let q = VectorQuantizer::hybrid(cfg.n_s, cfg.n_q, cfg.ell, cfg.zeta)?;
    let (lower, _) = theorem6_bounds(cfg.n_s, cfg.n_q, cfg.ell)?;
    let gain = cfg.gain.clone().unwrap_or_else(|| {
        (0..cfg.n_s)
            .map(|a| (0..cfg.n_s).map(|b| f64::from(u8::from(a == b))).collect())
            .collect()
    });
    let constellation = cfg
        .constellation
        .clone()
        .unwrap_or_else(|| default_constellation(cfg.n_s, cfg.n_q, cfg.zeta));
    let p_x = cfg
        .p_x
        .clone()
        .unwrap_or_else(|| vec![1.0 / constellation.len() as f64; constellation.len()]);
    if gain.iter().any(|r| r.len() != cfg.n_s) || constellation.iter().any(|x| x.len() != cfg.n_s) {
        return Err(CliError::invalid("gain and constellation points must have n_s columns"));
    }
    if cfg.optimize.is_some_and(|o| o.budget == 0) {
        return Err(CliError::invalid("optimize budget must be positive"));
    }

    let rows = cfg
        .snr_db
        .iter()
        .map(|&snr_db| -> Result<Vec<String>, CliError> {
            let (zeta, rate, mode) = match cfg.optimize {
                Some(o) => {
                    let oc = OptimizeConfig {
                        snr_db,
                        n_samples: cfg.n_samples,
                        seed,
                        budget: o.budget,
                    };
                    let r = optimize_constellation(cfg.n_s, cfg.n_q, cfg.ell, &oc)?;
                    (r.zeta, r.rate, "optimized")
                }
                None => {
                    let setup = McSetup {
                        constellation: &constellation,
                        p_x: &p_x,
                        gain: &gain,
                        snr_db,
                        n_samples: cfg.n_samples,
                        seed,
                    };
                    (cfg.zeta, parallel_rate(&q, &setup)?, "fixed")
                }
            };
            Ok(vec![
                sig(snr_db),
                cfg.n_s.to_string(),
                cfg.n_q.to_string(),
                cfg.ell.to_string(),
                sig(zeta),
                sig(rate),
                sig(lower),
                cfg.n_samples.to_string(),
                seed.to_string(),
                mode.to_string(),
            ])
        })
        .collect::<Result<Vec<_>, _>>()?;
    emit(opts, stdout, &HYBRID_COLUMNS, &rows)
}
