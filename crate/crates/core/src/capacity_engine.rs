//! Quantized Gaussian channels and their capacity under an input power limit.
//!
//! The channel is `Ŷ = Q(hX + N)` with `N ~ N(0, 1)`. Inputs live on a grid of
//! mass points; Blahut-Arimoto with a Lagrange weight `exp(-λ x²)` finds the
//! best distribution on that grid.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, SQRT_2};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::analog_ops::Family;
use crate::scalar_quantizer::{extract_partition, Codeword, Partition, QuantizerError, ScalarQuantizer};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapacityError {
    #[error("power limit must be positive and finite")]
    InvalidPower,
    #[error("channel has no inputs or no outputs")]
    EmptyChannel,
    #[error("Blahut-Arimoto did not converge; best rate {:.6} bits", .0.rate)]
    NotConverged(Box<CapacityResult>),
    #[error("premise violated: {0}")]
    PremiseViolated(&'static str),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `P(a < N < b)` for standard normal `N`, accurate in both tails.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = if a >= 0.0 {
        0.5 * (libm::erfc(a / SQRT_2) - libm::erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b / SQRT_2) - libm::erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * libm::erfc(b / SQRT_2) - 0.5 * libm::erfc(-a / SQRT_2)
    };
    m.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BudgetPoint {
    pub n_q: usize,
    pub levels: usize,
}

/// Every `(n_q, ℓ)` with `α n_q ℓ ≤ P_ADC`, ordered by `n_q` then `ℓ`.
pub fn enumerate_budget(p_adc: f64, alpha: f64) -> Vec<BudgetPoint> {
    let mut out = Vec::new();
    if !(p_adc > 0.0 && alpha > 0.0) {
        return out;
    }
    let cap = p_adc / alpha * (1.0 + 1e-12);
    let mut n_q = 1;
    while (2 * n_q) as f64 <= cap {
        let mut levels = 2;
        while (n_q * levels) as f64 <= cap {
            out.push(BudgetPoint { n_q, levels });
            levels += 1;
        }
        n_q += 1;
    }
    out
}

/// High-SNR capacity with single detectors and one-bit ADCs:
/// `1 + log2 ⌊P_ADC / 2α⌋`.
pub fn high_snr_capacity_env1(p_adc: f64, alpha: f64) -> Result<f64, CapacityError> {
    let n_q = libm::floor(p_adc / (2.0 * alpha) * (1.0 + 1e-12));
    if !(n_q > 1.0) {
        return Err(CapacityError::PremiseViolated("needs more than one ADC"));
    }
    Ok(1.0 + libm::log2(n_q))
}

/// Finite-input, finite-output channel with a quadratic input cost.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedDmc {
    inputs: Vec<f64>,
    cost: Vec<f64>,
    transitions: Vec<f64>,
    n_outputs: usize,
    gain: f64,
    outputs: Vec<Codeword>,
}

impl QuantizedDmc {
    /// Channel from explicit rows; `cost` defaults to `x²`.
    pub fn from_rows(inputs: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self, CapacityError> {
        let n_outputs = rows.first().map_or(0, |r| r.len());
        if inputs.is_empty() || n_outputs == 0 || rows.len() != inputs.len() {
            return Err(CapacityError::EmptyChannel);
        }
        if rows.iter().any(|r| r.len() != n_outputs) {
            return Err(CapacityError::EmptyChannel);
        }
        let cost = inputs.iter().map(|x| x * x).collect();
        Ok(QuantizedDmc {
            inputs,
            cost,
            transitions: rows.into_iter().flatten().collect(),
            n_outputs,
            gain: 1.0,
            outputs: Vec::new(),
        })
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Codeword behind each output symbol (empty for explicit channels).
    pub fn output_labels(&self) -> &[Codeword] {
        &self.outputs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.transitions[i * self.n_outputs..(i + 1) * self.n_outputs]
    }
}

/// Channel induced by a partition: cells sharing a codeword form one output.
pub fn build_dmc_from_partition(p: &Partition, h: f64, grid: &[f64]) -> QuantizedDmc {
    let mut index: BTreeMap<&Codeword, usize> = BTreeMap::new();
    let mut outputs = Vec::new();
    let cell_out: Vec<usize> = p
        .labels
        .iter()
        .map(|l| {
            *index.entry(l).or_insert_with(|| {
                outputs.push(l.clone());
                outputs.len() - 1
            })
        })
        .collect();
    let k = outputs.len();
    let mut transitions = vec![0.0; grid.len() * k];
    for (i, &x) in grid.iter().enumerate() {
        let mu = h * x;
        let row = &mut transitions[i * k..(i + 1) * k];
        for (c, &o) in cell_out.iter().enumerate() {
            let (lo, hi) = p.cell(c);
            row[o] += normal_mass(lo - mu, hi - mu);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= s);
    }
    QuantizedDmc {
        inputs: grid.to_vec(),
        cost: grid.iter().map(|x| x * x).collect(),
        transitions,
        n_outputs: k,
        gain: h,
        outputs,
    }
}

pub fn build_dmc(q: &ScalarQuantizer, h: f64, grid: &[f64]) -> Result<QuantizedDmc, CapacityError> {
    Ok(build_dmc_from_partition(&extract_partition(q)?, h, grid))
}

/// Mass points `k·step` with `|k·step| ≤ 3√P_T`.
pub fn input_grid(p_t: f64, step: f64) -> Vec<f64> {
    let kmax = libm::floor(3.0 * libm::sqrt(p_t) / step + 1e-9) as i64;
    (-kmax..=kmax).map(|k| k as f64 * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaConfig {
    /// Stopping gap in bits.
    pub tol: f64,
    pub max_iter: usize,
    pub lambda_hi: f64,
    pub bisect_iters: usize,
}

impl Default for BaConfig {
    fn default() -> Self {
        BaConfig {
            tol: 1e-9,
            max_iter: 10_000,
            lambda_hi: 100.0,
            bisect_iters: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    /// Mutual information in bits.
    pub rate: f64,
    pub input_distribution: Vec<f64>,
    pub lambda: f64,
    pub power: f64,
    /// Blahut-Arimoto iterations summed over all multipliers tried.
    pub iterations: usize,
    pub converged: bool,
}

struct Inner {
    p: Vec<f64>,
    iterations: usize,
    converged: bool,
}

// Row terms Σ_y W log W, fixed for the channel.
fn row_entropy(dmc: &QuantizedDmc) -> Vec<f64> {
    (0..dmc.n_inputs())
        .map(|i| {
            dmc.row(i)
                .iter()
                .filter(|&&w| w > 0.0)
                .map(|&w| w * libm::log(w))
                .sum()
        })
        .collect()
}

// D_i = Σ_y W log(W / q) in nats.
fn divergences(dmc: &QuantizedDmc, hw: &[f64], p: &[f64], d: &mut [f64], logq: &mut [f64]) {
    let k = dmc.n_outputs();
    logq.iter_mut().for_each(|x| *x = 0.0);
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            for (q, w) in logq.iter_mut().zip(dmc.row(i)) {
                *q += pi * w;
            }
        }
    }
    for x in logq.iter_mut() {
        *x = if *x > 0.0 { libm::log(*x) } else { 0.0 };
    }
    for i in 0..dmc.n_inputs() {
        let row = &dmc.transitions[i * k..(i + 1) * k];
        let cross: f64 = row.iter().zip(logq.iter()).map(|(w, l)| w * l).sum();
        d[i] = hw[i] - cross;
    }
}

/// `I(X;Ŷ)` in bits under the input distribution `p`.
pub fn mutual_information(dmc: &QuantizedDmc, p: &[f64]) -> f64 {
    let hw = row_entropy(dmc);
    let mut d = vec![0.0; dmc.n_inputs()];
    let mut logq = vec![0.0; dmc.n_outputs()];
    divergences(dmc, &hw, p, &mut d, &mut logq);
    p.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / LN_2
}

// Lagrangian Σ p_i (D_i - λc_i) in nats.
fn lagrangian(dmc: &QuantizedDmc, hw: &[f64], lambda: f64, p: &[f64], d: &mut [f64], logq: &mut [f64]) -> f64 {
    divergences(dmc, hw, p, d, logq);
    (0..p.len()).map(|i| p[i] * (d[i] - lambda * dmc.cost[i])).sum()
}

// Maximizes g·s - ½ sᵀMs over x = x0 + s in the simplex face through x0,
// by a primal active-set method started at x0.
fn simplex_qp(m: &DMatrix<f64>, g: &[f64], x0: &[f64]) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fixed: Vec<bool> = x.iter().map(|&v| v <= 0.0).collect();
    let mut at_min = false;
    for _ in 0..4 * n + 10 {
        let diff = DVector::from_iterator(n, x.iter().zip(x0).map(|(a, b)| a - b));
        let md = m * diff;
        let grad: Vec<f64> = (0..n).map(|i| g[i] - md[i]).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        if at_min {
            // multiplier of the simplex constraint, from the free gradients
            let mass: f64 = free.iter().map(|&i| x[i]).sum();
            let nu = free.iter().map(|&i| x[i] * grad[i]).sum::<f64>() / mass;
            let release = (0..n)
                .filter(|&i| fixed[i])
                .map(|i| (i, grad[i] - nu))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match release {
                Some((i, mu)) if mu > 1e-12 * (1.0 + nu.abs()) => fixed[i] = false,
                _ => break,
            }
            at_min = false;
            continue;
        }
        let k = free.len();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                kkt[(a, b)] = m[(i, j)];
            }
            kkt[(a, a)] *= 1.0 + 1e-12;
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
            rhs[a] = grad[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            break;
        };
        let mut step = 1.0;
        let mut block = None;
        for (a, &i) in free.iter().enumerate() {
            if sol[a] < 0.0 && -x[i] / sol[a] < step {
                step = -x[i] / sol[a];
                block = Some(i);
            }
        }
        for (a, &i) in free.iter().enumerate() {
            x[i] += step * sol[a];
        }
        match block {
            Some(i) => {
                x[i] = 0.0;
                fixed[i] = true;
            }
            None => at_min = true,
        }
    }
    x
}

const POLISH_EVERY: usize = 5;
const POLISH_SUPPORT: usize = 40;
const POLISH_CANDIDATES: usize = 10;

// Newton-type step on the heaviest mass points plus the largest g_i: solves
// the local quadratic model on the simplex and line-searches the Lagrangian.
fn polish(dmc: &QuantizedDmc, hw: &[f64], lambda: f64, p: &mut Vec<f64>, g: &[f64], j0: f64) -> bool {
    let m = p.len();
    let pmax = p.iter().copied().fold(0.0, f64::max);
    let mut by_mass: Vec<usize> = (0..m).filter(|&i| p[i] > 1e-12 * pmax).collect();
    by_mass.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    by_mass.truncate(POLISH_SUPPORT);
    let mut by_gain: Vec<usize> = (0..m).collect();
    by_gain.sort_by(|&a, &b| g[b].total_cmp(&g[a]));
    by_gain.truncate(POLISH_CANDIDATES);
    // local maxima of g along the input order are where new mass belongs
    let avg: f64 = (0..m).map(|i| p[i] * g[i]).sum();
    let mut peaks: Vec<usize> = (0..m)
        .filter(|&i| g[i] > avg && (i == 0 || g[i] >= g[i - 1]) && (i + 1 == m || g[i] >= g[i + 1]))
        .collect();
    peaks.sort_by(|&a, &b| g[b].total_cmp(&g[a]));
    peaks.truncate(POLISH_CANDIDATES);
    let mut set = by_mass;
    set.extend(by_gain);
    set.extend(peaks);
    set.sort_unstable();
    set.dedup();

    let k = dmc.n_outputs();
    let mut q = vec![0.0; k];
    for (i, &pi) in p.iter().enumerate() {
        for (qy, w) in q.iter_mut().zip(dmc.row(i)) {
            *qy += pi * w;
        }
    }
    let n = set.len();
    let mut hess = DMatrix::zeros(n, n);
    for a in 0..n {
        let ra = dmc.row(set[a]);
        for b in a..n {
            let rb = dmc.row(set[b]);
            let v: f64 = (0..k).filter(|&y| q[y] > 0.0).map(|y| ra[y] * rb[y] / q[y]).sum();
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    let gs: Vec<f64> = set.iter().map(|&i| g[i]).collect();
    let x0: Vec<f64> = set.iter().map(|&i| p[i]).collect();
    let x = simplex_qp(&hess, &gs, &x0);

    let mut d = vec![0.0; m];
    let mut logq = vec![0.0; k];
    let mut t = 1.0;
    while t > 1e-6 {
        let mut trial = p.clone();
        for (a, &i) in set.iter().enumerate() {
            trial[i] = (x0[a] + t * (x[a] - x0[a])).max(0.0);
        }
        let z: f64 = trial.iter().sum();
        trial.iter_mut().for_each(|v| *v /= z);
        if lagrangian(dmc, hw, lambda, &trial, &mut d, &mut logq) >= j0 {
            *p = trial;
            return true;
        }
        t *= 0.5;
    }
    false
}

// Blahut-Arimoto for a fixed multiplier, interleaved with `polish` steps.
// Stops when the upper bound max_i g_i, with g_i = D_i - λc_i, is within tol
// of the Lagrangian Σ p_i g_i of the current iterate. Every accepted iterate
// raises the Lagrangian.
fn ba_fixed(
    dmc: &QuantizedDmc,
    hw: &[f64],
    lambda: f64,
    mut p: Vec<f64>,
    tol: f64,
    max_iter: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> Inner {
    let m = dmc.n_inputs();
    let mut d = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut logq = vec![0.0; dmc.n_outputs()];
    let tol_nats = tol * LN_2;
    let mut iterations = 0;
    let mut last_gap = f64::INFINITY;
    loop {
        divergences(dmc, hw, &p, &mut d, &mut logq);
        let mut gmax = f64::NEG_INFINITY;
        for i in 0..m {
            g[i] = d[i] - lambda * dmc.cost[i];
            gmax = gmax.max(g[i]);
        }
        let z: f64 = (0..m).map(|i| p[i] * libm::exp(g[i] - gmax)).sum();
        if let Some(t) = trace.as_deref_mut() {
            t.push(p.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / LN_2);
        }
        let gap = gmax - (0..m).map(|i| p[i] * g[i]).sum::<f64>();
        if gap < tol_nats {
            return Inner {
                p,
                iterations,
                converged: true,
            };
        }
        if iterations >= max_iter {
            return Inner {
                p,
                iterations,
                converged: false,
            };
        }
        iterations += 1;
        // polish only when plain updates have stalled
        if iterations % POLISH_EVERY == 0 && core::mem::replace(&mut last_gap, gap) < 4.0 * gap {
            let j0: f64 = (0..m).map(|i| p[i] * g[i]).sum();
            if polish(dmc, hw, lambda, &mut p, &g, j0) {
                continue;
            }
        }
        for i in 0..m {
            p[i] *= libm::exp(g[i] - gmax) / z;
        }
    }
}

fn power_of(dmc: &QuantizedDmc, p: &[f64]) -> f64 {
    p.iter().zip(&dmc.cost).map(|(a, c)| a * c).sum()
}

/// Capacity without an input constraint.
pub fn blahut_arimoto(dmc: &QuantizedDmc, tol: f64, max_iter: usize) -> Result<CapacityResult, CapacityError> {
    blahut_arimoto_traced(dmc, tol, max_iter, None)
}

/// As [`blahut_arimoto`], recording the mutual information at every iterate.
pub fn blahut_arimoto_traced(
    dmc: &QuantizedDmc,
    tol: f64,
    max_iter: usize,
    trace: Option<&mut Vec<f64>>,
) -> Result<CapacityResult, CapacityError> {
    let m = dmc.n_inputs();
    if m == 0 || dmc.n_outputs() == 0 {
        return Err(CapacityError::EmptyChannel);
    }
    let hw = row_entropy(dmc);
    let r = ba_fixed(dmc, &hw, 0.0, vec![1.0 / m as f64; m], tol, max_iter, trace);
    finish(dmc, r.p, 0.0, r.iterations, r.converged)
}

fn finish(
    dmc: &QuantizedDmc,
    p: Vec<f64>,
    lambda: f64,
    iterations: usize,
    converged: bool,
) -> Result<CapacityResult, CapacityError> {
    let res = CapacityResult {
        rate: mutual_information(dmc, &p).max(0.0),
        power: power_of(dmc, &p),
        input_distribution: p,
        lambda,
        iterations,
        converged,
    };
    if converged {
        Ok(res)
    } else {
        Err(CapacityError::NotConverged(Box::new(res)))
    }
}

/// Capacity subject to `E[X²] ≤ P_T`, by bisection on the multiplier.
pub fn blahut_arimoto_constrained(
    dmc: &QuantizedDmc,
    p_t: f64,
    cfg: &BaConfig,
) -> Result<CapacityResult, CapacityError> {
    if !(p_t > 0.0 && p_t.is_finite()) {
        return Err(CapacityError::InvalidPower);
    }
    let m = dmc.n_inputs();
    if m == 0 || dmc.n_outputs() == 0 {
        return Err(CapacityError::EmptyChannel);
    }
    let hw = row_entropy(dmc);
    let mut iterations = 0;
    let uniform = vec![1.0 / m as f64; m];

    // warm starts keep a trace of every input so none is lost for good
    let mut run = |lambda: f64, start: &[f64]| {
        let start = start.iter().map(|&v| (1.0 - 1e-9) * v + 1e-9 / m as f64).collect();
        let r = ba_fixed(dmc, &hw, lambda, start, cfg.tol, cfg.max_iter, None);
        iterations += r.iterations;
        (r.p, r.converged)
    };

    let (free, free_ok) = run(0.0, &uniform);
    if power_of(dmc, &free) <= p_t {
        return finish(dmc, free, 0.0, iterations, free_ok);
    }

    let mut lo = 0.0;
    let mut hi = cfg.lambda_hi;
    let (mut p_hi, mut hi_ok) = run(hi, &free);
    while power_of(dmc, &p_hi) > p_t && hi < 1e8 {
        lo = hi;
        hi *= 4.0;
        (p_hi, hi_ok) = run(hi, &p_hi);
    }
    if power_of(dmc, &p_hi) > p_t {
        // even the cheapest distribution misses the limit
        return finish(dmc, p_hi, hi, iterations, false);
    }

    let (mut p_lo, mut lo_ok) = (free, free_ok);
    for _ in 0..cfg.bisect_iters {
        if p_t - power_of(dmc, &p_hi) <= 1e-10 * p_t.max(1.0) || hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (p_mid, ok) = run(mid, &p_lo);
        if power_of(dmc, &p_mid) <= p_t {
            hi = mid;
            (p_hi, hi_ok) = (p_mid, ok);
        } else {
            lo = mid;
            (p_lo, lo_ok) = (p_mid, ok);
        }
    }

    // At a kink of the power curve both ends maximize the same Lagrangian,
    // and so does the mixture that meets the limit exactly.
    let (pw_hi, pw_lo) = (power_of(dmc, &p_hi), power_of(dmc, &p_lo));
    if p_t - pw_hi > 1e-10 * p_t.max(1.0) && pw_lo > p_t && hi - lo <= 1e-6 * hi {
        let theta = (p_t - pw_hi) / (pw_lo - pw_hi);
        let mixed: Vec<f64> = p_hi.iter().zip(&p_lo).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
        if mutual_information(dmc, &mixed) >= mutual_information(dmc, &p_hi) {
            return finish(dmc, mixed, hi, iterations, hi_ok && lo_ok);
        }
    }
    finish(dmc, p_hi, hi, iterations, hi_ok)
}

/// Number of distinct outputs a family can reach at high SNR.
pub fn output_ceiling(family: Family, n_q: usize, levels: usize, delta: usize) -> usize {
    let cap = (0..n_q).fold(1usize, |a, _| a.saturating_mul(levels));
    let two_d = 1usize << delta;
    match family {
        Family::Envelope if levels == 2 && delta == 1 => cap.min(2 * n_q),
        Family::Envelope if levels == 2 => cap.min(n_q * two_d + 1),
        Family::Envelope => cap.min((levels - 1) * n_q * two_d),
        Family::Poly => cap.min((levels - 1) * delta * n_q + delta % 2),
    }
}

/// Partition with `Γ` breakpoints whose two outer cells share one output,
/// giving `Γ` outputs.
pub fn folded_partition(breakpoints: &[f64]) -> Partition {
    let g = breakpoints.len();
    let labels = (0..=g)
        .map(|i| {
            let o = if i == g { 0 } else { i };
            vec![(o >> 8) as u8, (o & 0xff) as u8]
        })
        .collect();
    Partition {
        breakpoints: breakpoints.to_vec(),
        labels,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Points per axis of the offset and spacing grids.
    pub grid_points: usize,
    pub input_step: f64,
    /// Input grid size cap while screening candidates.
    pub screen_inputs: usize,
    pub screen: BaConfig,
    pub fine: BaConfig,
    /// Screened candidates re-evaluated with the fine settings.
    pub refine_top: usize,
    /// Relative steps tried on each breakpoint of polynomial candidates.
    pub jitter: Vec<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            grid_points: 40,
            input_step: 0.1,
            screen_inputs: 160,
            screen: BaConfig {
                tol: 1e-5,
                max_iter: 2_000,
                lambda_hi: 100.0,
                bisect_iters: 30,
            },
            fine: BaConfig::default(),
            refine_top: 3,
            jitter: vec![-0.2, -0.1, 0.1, 0.2],
        }
    }
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (libm::log(lo), libm::log(hi));
    (0..n)
        .map(|i| libm::exp(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

// Grid points whose rows differ from the outermost kept rows by more than
// Φ(-9); the rest are dominated (same outputs, higher cost).
fn relevant_inputs(grid: &[f64], breakpoints: &[f64], h: f64) -> Vec<f64> {
    let lo = breakpoints.first().copied().unwrap_or(0.0) - 9.0;
    let hi = breakpoints.last().copied().unwrap_or(0.0) + 9.0;
    grid.iter()
        .copied()
        .filter(|&x| {
            let y = h * x;
            (lo..=hi).contains(&y)
        })
        .collect()
}

fn thin(grid: &[f64], cap: usize) -> Vec<f64> {
    if grid.len() <= cap {
        return grid.to_vec();
    }
    let stride = grid.len().div_ceil(cap);
    // keep x = 0 on the thinned grid
    let zero = grid.iter().position(|&x| x == 0.0).unwrap_or(0);
    grid.iter()
        .enumerate()
        .filter(|(i, _)| i.abs_diff(zero) % stride == 0)
        .map(|(_, &x)| x)
        .collect()
}

/// Result of one channel evaluation inside a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub breakpoints: Vec<f64>,
    pub result: CapacityResult,
    pub n_inputs: usize,
}

fn evaluate(
    breakpoints: &[f64],
    h: f64,
    p_t: f64,
    grid: &[f64],
    cap: Option<usize>,
    cfg: &BaConfig,
) -> Evaluation {
    let kept = relevant_inputs(grid, breakpoints, h);
    let inputs = match cap {
        Some(c) => thin(&kept, c),
        None => kept,
    };
    let inputs = if inputs.is_empty() { vec![0.0] } else { inputs };
    let dmc = build_dmc_from_partition(&folded_partition(breakpoints), h, &inputs);
    let result = match blahut_arimoto_constrained(&dmc, p_t, cfg) {
        Ok(r) => r,
        Err(CapacityError::NotConverged(r)) => *r,
        Err(_) => CapacityResult {
            rate: 0.0,
            input_distribution: Vec::new(),
            lambda: 0.0,
            power: 0.0,
            iterations: 0,
            converged: false,
        },
    };
    Evaluation {
        breakpoints: breakpoints.to_vec(),
        result,
        n_inputs: inputs.len(),
    }
}

fn uniform_breakpoints(c: f64, step: f64, g: usize) -> Vec<f64> {
    (0..g).map(|k| -c + k as f64 * step).collect()
}

fn affine_breakpoints(offset: f64, step: f64, g: usize) -> Vec<f64> {
    let mid = (g as f64 - 1.0) / 2.0;
    (0..g).map(|k| offset + (k as f64 - mid) * step).collect()
}

/// Best rate found for a channel with `gamma` outputs at one power level.
///
/// `seeds` are breakpoint vectors screened in addition to the family's grid,
/// typically the winners at a lower power.
pub fn search_channel(
    family: Family,
    gamma: usize,
    h: f64,
    p_t: f64,
    cfg: &SearchConfig,
    seeds: &[Vec<f64>],
) -> Evaluation {
    let grid = input_grid(p_t, cfg.input_step);
    // carried-over winners are always fully evaluated; one already at
    // log2 Γ cannot be beaten
    let seeded: Vec<Evaluation> = seeds
        .iter()
        .filter(|b| b.len() == gamma)
        .map(|b| evaluate(b, h, p_t, &grid, None, &cfg.fine))
        .collect();
    let ceiling = libm::log2(gamma as f64) - cfg.fine.tol;
    if let Some(f) = seeded.iter().find(|f| f.result.converged && f.result.rate >= ceiling) {
        return f.clone();
    }
    let s = (h.abs() * libm::sqrt(p_t)).max(1.0);
    let n = cfg.grid_points.max(1);
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    let steps = logspace(0.02 * s, 4.0 * s, n);
    match family {
        Family::Envelope => {
            let span = 2.0 * s * (gamma.max(2) - 1) as f64;
            for &c in &logspace(0.01 * s, span, n) {
                for &d in &steps {
                    candidates.push(uniform_breakpoints(c, d, gamma));
                }
            }
        }
        Family::Poly => {
            let m = n | 1;
            for i in 0..m {
                let off = 2.0 * s * (2.0 * i as f64 / (m - 1).max(1) as f64 - 1.0);
                for &d in &steps {
                    candidates.push(affine_breakpoints(off, d, gamma));
                }
            }
        }
    }
    candidates.extend(seeds.iter().filter(|b| b.len() == gamma).cloned());

    let screen = |b: &[f64]| evaluate(b, h, p_t, &grid, Some(cfg.screen_inputs), &cfg.screen);
    let mut scored: Vec<Evaluation> = candidates.iter().map(|b| screen(b)).collect();
    scored.sort_by(|a, b| b.result.rate.total_cmp(&a.result.rate));
    scored.truncate(cfg.refine_top.max(1));

    if family == Family::Poly && !cfg.jitter.is_empty() {
        for e in scored.iter_mut() {
            let span = e.breakpoints.windows(2).map(|w| w[1] - w[0]).fold(s, f64::min);
            for k in 0..gamma {
                let base = e.breakpoints.clone();
                for &j in &cfg.jitter {
                    let mut b = base.clone();
                    b[k] += j * span;
                    if b.windows(2).any(|w| w[0] >= w[1]) {
                        continue;
                    }
                    let cand = screen(&b);
                    if cand.result.rate > e.result.rate {
                        *e = cand;
                    }
                }
            }
        }
    }

    let mut best: Option<Evaluation> = None;
    for e in &scored {
        let f = evaluate(&e.breakpoints, h, p_t, &grid, None, &cfg.fine);
        if best.as_ref().is_none_or(|b| f.result.rate > b.result.rate) {
            best = Some(f);
        }
    }
    for f in seeded {
        if best.as_ref().is_none_or(|x| f.result.rate > x.result.rate) {
            best = Some(f);
        }
    }
    best.unwrap()
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub p_t: f64,
    pub family: Family,
    pub delta: usize,
    pub budget: BudgetPoint,
    pub rate: f64,
    pub ceiling_bits: f64,
    pub power: f64,
    pub n_inputs: usize,
    pub breakpoints: Vec<f64>,
    pub converged: bool,
}

pub fn snr_db(h: f64, p_t: f64) -> f64 {
    10.0 * libm::log10(h * h * p_t)
}

pub fn power_for_snr(h: f64, snr_db: f64) -> f64 {
    libm::pow(10.0, snr_db / 10.0) / (h * h)
}

/// Rates of one `(family, n_q, ℓ, δ)` configuration over increasing powers.
///
/// Each power level also re-evaluates the previous winner, so rates never
/// decrease along the list.
pub fn sweep_configuration(
    family: Family,
    budget: BudgetPoint,
    delta: usize,
    h: f64,
    p_t_list: &[f64],
    cfg: &SearchConfig,
) -> Vec<SweepRow> {
    let gamma = output_ceiling(family, budget.n_q, budget.levels, delta);
    let mut order: Vec<usize> = (0..p_t_list.len()).collect();
    order.sort_by(|&a, &b| p_t_list[a].total_cmp(&p_t_list[b]));
    let mut rows: Vec<Option<SweepRow>> = vec![None; p_t_list.len()];
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    for i in order {
        let p_t = p_t_list[i];
        let e = search_channel(family, gamma, h, p_t, cfg, &seeds);
        seeds = vec![e.breakpoints.clone()];
        rows[i] = Some(SweepRow {
            snr_db: snr_db(h, p_t),
            p_t,
            family,
            delta,
            budget,
            rate: e.result.rate,
            ceiling_bits: libm::log2(gamma as f64),
            power: e.result.power,
            n_inputs: e.n_inputs,
            breakpoints: e.breakpoints,
            converged: e.result.converged,
        });
    }
    rows.into_iter().map(|r| r.unwrap()).collect()
}

/// Best configuration under an ADC power budget, per transmit power.
///
/// Budget points with the same output ceiling share one search.
pub fn capacity_sweep(
    family: Family,
    delta: usize,
    p_adc: f64,
    alpha: f64,
    h: f64,
    p_t_list: &[f64],
    cfg: &SearchConfig,
) -> Vec<SweepRow> {
    let curves: Vec<Vec<SweepRow>> = budget_representatives(family, delta, p_adc, alpha)
        .into_iter()
        .map(|bp| sweep_configuration(family, bp, delta, h, p_t_list, cfg))
        .collect();
    best_per_power(&curves)
}

/// One budget point per distinct output ceiling, the first in budget order.
/// Points sharing a ceiling share the searched channel, so their curves
/// coincide.
pub fn budget_representatives(family: Family, delta: usize, p_adc: f64, alpha: f64) -> Vec<BudgetPoint> {
    let mut by_gamma: BTreeMap<usize, BudgetPoint> = BTreeMap::new();
    for bp in enumerate_budget(p_adc, alpha) {
        by_gamma
            .entry(output_ceiling(family, bp.n_q, bp.levels, delta))
            .or_insert(bp);
    }
    by_gamma.into_values().collect()
}

/// Row-wise maximum over curves evaluated on the same power list.
pub fn best_per_power(curves: &[Vec<SweepRow>]) -> Vec<SweepRow> {
    let Some(first) = curves.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|i| {
            curves
                .iter()
                .map(|c| &c[i])
                .fold(None::<&SweepRow>, |best, r| match best {
                    Some(b) if b.rate >= r.rate => Some(b),
                    _ => Some(r),
                })
                .unwrap()
                .clone()
        })
        .collect()
}
