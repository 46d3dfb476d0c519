//! Quantizers on `ℝ^{n_s}`: comparator arrangements, region censuses and
//! Monte Carlo rate estimates.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::analog_ops::{AnalogOp, EnvelopeChain, OpError, PolynomialOp};
use crate::capacity_engine::{blahut_arimoto, mutual_information, CapacityError, QuantizedDmc};
use crate::scalar_quantizer::{partition_of, Codeword};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HybridError {
    #[error("dimension must be at least 1")]
    NoDimensions,
    #[error("comparator {0} has the wrong dimension")]
    Dimension(usize),
    #[error("comparator {0} has no thresholds or non-finite values")]
    BadComparator(usize),
    #[error("grid census supports 1 to 3 dimensions, got {0}")]
    UnsupportedDimension(usize),
    #[error("comparator {0} mixes coordinates")]
    NotSeparable(usize),
    #[error("region counts still changing at the finest grid: {coarse:?} vs {fine:?}")]
    Unstable {
        coarse: RegionCensus,
        fine: RegionCensus,
    },
    #[error("premise violated: {0}")]
    PremiseViolated(&'static str),
    #[error("constellation point {0} was never drawn")]
    RankDeficientEstimate(usize),
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

/// Scalar functional of `ỹ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// `w·ỹ - offset`
    Linear { w: Vec<f64>, offset: f64 },
    /// `|w·ỹ - offset|`
    Abs { w: Vec<f64>, offset: f64 },
}

impl Functional {
    pub fn weights(&self) -> &[f64] {
        match self {
            Functional::Linear { w, .. } | Functional::Abs { w, .. } => w,
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            Functional::Linear { w, offset } => dot(w, y) - offset,
            Functional::Abs { w, offset } => (dot(w, y) - offset).abs(),
        }
    }

    /// Coordinate sign `ỹ_axis` vs 0.
    pub fn coordinate(n_s: usize, axis: usize) -> Self {
        Functional::Linear {
            w: unit(n_s, axis),
            offset: 0.0,
        }
    }

    /// `|ỹ_axis|`.
    pub fn magnitude(n_s: usize, axis: usize) -> Self {
        Functional::Abs {
            w: unit(n_s, axis),
            offset: 0.0,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// A functional followed by an ADC with sorted thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparator {
    pub functional: Functional,
    pub thresholds: Vec<f64>,
}

impl Comparator {
    pub fn one_bit(functional: Functional, threshold: f64) -> Self {
        Comparator {
            functional,
            thresholds: vec![threshold],
        }
    }

    pub fn output(&self, y: &[f64]) -> u8 {
        let v = self.functional.eval(y);
        self.thresholds.iter().take_while(|&&t| t <= v).count() as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorQuantizer {
    n_s: usize,
    comparators: Vec<Comparator>,
    zeta: Option<f64>,
}

impl VectorQuantizer {
    pub fn new(n_s: usize, mut comparators: Vec<Comparator>) -> Result<Self, HybridError> {
        if n_s == 0 {
            return Err(HybridError::NoDimensions);
        }
        for (j, c) in comparators.iter_mut().enumerate() {
            if c.functional.weights().len() != n_s {
                return Err(HybridError::Dimension(j));
            }
            let (w, off) = match &c.functional {
                Functional::Linear { w, offset } | Functional::Abs { w, offset } => (w, *offset),
            };
            if c.thresholds.is_empty()
                || !off.is_finite()
                || w.iter().chain(&c.thresholds).any(|v| !v.is_finite())
            {
                return Err(HybridError::BadComparator(j));
            }
            c.thresholds.sort_by(f64::total_cmp);
        }
        Ok(VectorQuantizer {
            n_s,
            comparators,
            zeta: None,
        })
    }

    /// Sign comparators on every axis followed by `n_q - n_s` magnitude
    /// comparators assigned round-robin to the axes. The `r`-th magnitude
    /// comparator of an axis uses thresholds `((r-1)(ℓ-1) + m)ζ`, `m < ℓ`.
    pub fn hybrid(n_s: usize, n_q: usize, levels: usize, zeta: f64) -> Result<Self, HybridError> {
        if n_s == 0 {
            return Err(HybridError::NoDimensions);
        }
        if n_q <= n_s || levels < 2 || !(zeta > 0.0 && zeta.is_finite()) {
            return Err(HybridError::PremiseViolated("needs n_q > n_s, ℓ ≥ 2 and ζ > 0"));
        }
        let mut comparators: Vec<Comparator> = (0..n_s)
            .map(|a| Comparator::one_bit(Functional::coordinate(n_s, a), 0.0))
            .collect();
        for j in n_s..n_q {
            let axis = (j - n_s) % n_s;
            let r = (j - n_s) / n_s;
            let thresholds = (1..levels)
                .map(|m| (r * (levels - 1) + m) as f64 * zeta)
                .collect();
            comparators.push(Comparator {
                functional: Functional::magnitude(n_s, axis),
                thresholds,
            });
        }
        let mut q = VectorQuantizer::new(n_s, comparators)?;
        q.zeta = Some(zeta);
        Ok(q)
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_q(&self) -> usize {
        self.comparators.len()
    }

    pub fn comparators(&self) -> &[Comparator] {
        &self.comparators
    }

    pub fn zeta(&self) -> Option<f64> {
        self.zeta
    }

    pub fn quantize(&self, y: &[f64]) -> Codeword {
        self.comparators.iter().map(|c| c.output(y)).collect()
    }

    /// Magnitude-comparator count per axis for [`VectorQuantizer::hybrid`].
    pub fn magnitudes_per_axis(n_s: usize, n_q: usize) -> Vec<usize> {
        (0..n_s)
            .map(|a| (n_q - n_s) / n_s + usize::from(a < (n_q - n_s) % n_s))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionCensus {
    pub total_regions: usize,
    pub unique_regions: usize,
}

impl RegionCensus {
    pub fn rate_bits(&self) -> f64 {
        libm::log2(self.unique_regions as f64)
    }
}

/// Codeword ids on a regular grid of cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
    pub ids: Vec<u32>,
    pub labels: Vec<Codeword>,
}

impl LabelGrid {
    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    /// Centre of the cell with the given flat index.
    pub fn center(&self, mut flat: usize) -> Vec<f64> {
        let r = self.resolution;
        (0..self.dims())
            .map(|d| {
                let i = flat % r;
                flat /= r;
                self.lo[d] + (i as f64 + 0.5) * (self.hi[d] - self.lo[d]) / r as f64
            })
            .collect()
    }

    fn census(&self) -> RegionCensus {
        let r = self.resolution;
        let d = self.dims();
        let n = self.ids.len();
        let mut seen = vec![false; n];
        let mut stack = Vec::new();
        let mut total = 0;
        let strides: Vec<usize> = (0..d).map(|k| r.pow(k as u32)).collect();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            total += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(c) = stack.pop() {
                for &s in &strides {
                    let coord = (c / s) % r;
                    let mut visit = |nb: usize| {
                        if !seen[nb] && self.ids[nb] == self.ids[c] {
                            seen[nb] = true;
                            stack.push(nb);
                        }
                    };
                    if coord > 0 {
                        visit(c - s);
                    }
                    if coord + 1 < r {
                        visit(c + s);
                    }
                }
            }
        }
        RegionCensus {
            total_regions: total,
            unique_regions: self.labels.len(),
        }
    }
}

/// Labels of `q` on a `resolution^{n_s}` grid over the box `[lo, hi]`.
pub fn label_grid(q: &VectorQuantizer, lo: &[f64], hi: &[f64], resolution: usize) -> Result<LabelGrid, HybridError> {
    let d = q.n_s();
    if !(1..=3).contains(&d) {
        return Err(HybridError::UnsupportedDimension(d));
    }
    if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(HybridError::PremiseViolated("box must be non-empty in every dimension"));
    }
    let r = resolution.max(1);
    let mut grid = LabelGrid {
        lo: lo.to_vec(),
        hi: hi.to_vec(),
        resolution: r,
        ids: Vec::with_capacity(r.pow(d as u32)),
        labels: Vec::new(),
    };
    let mut index: BTreeMap<Codeword, u32> = BTreeMap::new();
    for flat in 0..r.pow(d as u32) {
        let word = q.quantize(&grid.center(flat));
        let next = index.len() as u32;
        let id = *index.entry(word.clone()).or_insert_with(|| {
            grid.labels.push(word);
            next
        });
        grid.ids.push(id);
    }
    Ok(grid)
}

// (w, c) with boundary w·y = c, one per threshold crossing
fn boundaries(q: &VectorQuantizer) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::new();
    for c in q.comparators() {
        match &c.functional {
            Functional::Linear { w, offset } => {
                out.extend(c.thresholds.iter().map(|t| (w.clone(), offset + t)));
            }
            Functional::Abs { w, offset } => {
                for t in c.thresholds.iter().filter(|&&t| t > 0.0) {
                    out.push((w.clone(), offset + t));
                    out.push((w.clone(), offset - t));
                }
            }
        }
    }
    out.retain(|(w, _)| w.iter().any(|&x| x != 0.0));
    out
}

/// Box around every vertex of the comparator boundaries and the point of
/// each boundary nearest the origin, widened by `margin`.
pub fn default_box(q: &VectorQuantizer, margin: f64) -> (Vec<f64>, Vec<f64>) {
    let d = q.n_s();
    let planes = boundaries(q);
    let mut points: Vec<Vec<f64>> = vec![vec![0.0; d]];
    for (w, c) in &planes {
        let norm: f64 = w.iter().map(|x| x * x).sum();
        points.push(w.iter().map(|x| x * c / norm).collect());
    }
    if d >= 2 {
        let mut idx: Vec<usize> = (0..d).collect();
        let n = planes.len();
        while n >= d {
            let a = DMatrix::from_fn(d, d, |r, k| planes[idx[r]].0[k]);
            let b = DVector::from_fn(d, |r, _| planes[idx[r]].1);
            let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let lu = a.lu();
            if lu.determinant().abs() > 1e-9 * libm::pow(scale, d as f64) {
                if let Some(x) = lu.solve(&b) {
                    points.push(x.iter().copied().collect());
                }
            }
            // next combination
            let mut i = d;
            while i > 0 && idx[i - 1] == n - d + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for k in i..d {
                idx[k] = idx[k - 1] + 1;
            }
        }
    }
    let lo = (0..d)
        .map(|k| points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min) - margin)
        .collect();
    let hi = (0..d)
        .map(|k| points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max) + margin)
        .collect();
    (lo, hi)
}

const MAX_CELLS: usize = 1 << 22;

/// Region census by flood fill on grids that double in resolution until two
/// successive counts agree.
pub fn count_regions_grid(
    q: &VectorQuantizer,
    lo: &[f64],
    hi: &[f64],
    base_resolution: usize,
) -> Result<RegionCensus, HybridError> {
    let d = q.n_s();
    let mut r = base_resolution.max(2);
    let mut prev = label_grid(q, lo, hi, r)?.census();
    loop {
        let next_r = 2 * r;
        if next_r.pow(d as u32) > MAX_CELLS {
            return Err(HybridError::Unstable {
                coarse: prev,
                fine: prev,
            });
        }
        let cur = label_grid(q, lo, hi, next_r)?.census();
        if cur == prev {
            return Ok(cur);
        }
        if (2 * next_r).pow(d as u32) > MAX_CELLS {
            return Err(HybridError::Unstable {
                coarse: prev,
                fine: cur,
            });
        }
        prev = cur;
        r = next_r;
    }
}

// Scalar operator and thresholds equivalent to a single-axis comparator;
// `None` when the comparator is constant.
fn axis_op(c: &Comparator, weight: f64) -> Option<(AnalogOp, Vec<f64>)> {
    match &c.functional {
        Functional::Linear { offset, .. } => {
            let op = PolynomialOp::new(vec![-offset, weight]).ok()?;
            Some((AnalogOp::Poly(op), c.thresholds.clone()))
        }
        Functional::Abs { offset, .. } => {
            let s = weight.abs();
            let t: Vec<f64> = c.thresholds.iter().filter(|&&t| t > 0.0).map(|t| t / s).collect();
            if t.is_empty() {
                return None;
            }
            let op = EnvelopeChain::new(vec![offset / weight]).ok()?;
            Some((AnalogOp::Envelope(op), t))
        }
    }
}

/// Exact census of a quantizer whose comparators each read one coordinate.
pub fn count_regions_separable(q: &VectorQuantizer) -> Result<RegionCensus, HybridError> {
    let d = q.n_s();
    // per comparator: axis, or None for constant output
    let mut axis_of: Vec<Option<usize>> = Vec::with_capacity(q.n_q());
    for (j, c) in q.comparators().iter().enumerate() {
        let nz: Vec<usize> = (0..d).filter(|&a| c.functional.weights()[a] != 0.0).collect();
        match nz.len() {
            0 => axis_of.push(None),
            1 => axis_of.push(Some(nz[0])),
            _ => return Err(HybridError::NotSeparable(j)),
        }
    }
    let constant: Vec<u8> = q.comparators().iter().map(|c| c.output(&vec![0.0; d])).collect();

    // per axis: cell labels as (comparator index, output) lists
    let mut axes: Vec<Vec<Vec<(usize, u8)>>> = Vec::with_capacity(d);
    for a in 0..d {
        let mut ops = Vec::new();
        let mut rows = Vec::new();
        let mut members = Vec::new();
        let mut fixed = Vec::new();
        for (j, c) in q.comparators().iter().enumerate() {
            if axis_of[j] != Some(a) {
                continue;
            }
            match axis_op(c, c.functional.weights()[a]) {
                Some((op, t)) => {
                    ops.push(op);
                    rows.push(t);
                    members.push(j);
                }
                None => fixed.push((j, c.output(&vec![0.0; d]))),
            }
        }
        let cells = if ops.is_empty() {
            vec![fixed.clone()]
        } else {
            partition_of(&ops, &rows)?
                .labels
                .iter()
                .map(|l| {
                    let mut v: Vec<(usize, u8)> = members.iter().copied().zip(l.iter().copied()).collect();
                    v.extend(&fixed);
                    v
                })
                .collect()
        };
        axes.push(cells);
    }

    let total: usize = axes.iter().map(|c| c.len()).product();
    let mut unique: BTreeMap<Codeword, ()> = BTreeMap::new();
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let mut word = constant.clone();
        for (a, &i) in idx.iter().enumerate() {
            for &(j, v) in &axes[a][i] {
                word[j] = v;
            }
        }
        unique.insert(word, ());
        for a in 0..d {
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(RegionCensus {
        total_regions: total,
        unique_regions: unique.len(),
    })
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Region counts for `n_q` hyperplanes in `ℝ^{n_r}`: through a common point
/// (`2 Σ_{i<n_r} C(n_q-1, i)`) and in general affine position
/// (`Σ_{i≤n_r} C(n_q, i)`).
pub fn hyperplane_region_bounds(n_r: u64, n_q: u64) -> (u64, u64) {
    let central = 2.0 * (0..n_r).map(|i| binomial(n_q - 1, i)).sum::<f64>();
    let affine: f64 = (0..=n_r).map(|i| binomial(n_q, i)).sum();
    (libm::round(central) as u64, libm::round(affine) as u64)
}

/// High-SNR rate bounds in bits for the sign-plus-magnitude construction.
pub fn theorem6_bounds(n_s: usize, n_q: usize, levels: usize) -> Result<(f64, f64), HybridError> {
    if n_s == 0 || n_q <= n_s || levels < 2 {
        return Err(HybridError::PremiseViolated("needs n_q > n_s ≥ 1 and ℓ ≥ 2"));
    }
    let lower = n_s as f64
        * (1.0 + libm::log2((levels - 1) as f64) + libm::log2((n_q - n_s) as f64 / n_s as f64));
    let n = (2 * (levels - 1) * n_q) as u64;
    let upper = libm::log2((0..=n_s as u64).map(|k| binomial(n, k)).sum());
    Ok((lower, upper))
}

/// Monte Carlo estimate of an achievable rate.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub rate: f64,
    pub n_outputs: usize,
    pub samples: usize,
    pub noise_std: f64,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 0x5EED;
pub const CHUNK: usize = 1000;

/// Setup for [`monte_carlo_rate`].
#[derive(Debug, Clone, PartialEq)]
pub struct McSetup<'a> {
    pub constellation: &'a [Vec<f64>],
    pub p_x: &'a [f64],
    /// Row-major `n_s × n_t` gain matrix.
    pub gain: &'a [Vec<f64>],
    pub snr_db: f64,
    pub n_samples: usize,
    pub seed: u64,
}

fn apply(gain: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    gain.iter().map(|row| dot(row, x)).collect()
}

/// Noise standard deviation giving per-dimension SNR `snr_db` for the
/// received constellation `Hx` under `P_X`.
pub fn noise_std(q: &VectorQuantizer, setup: &McSetup) -> f64 {
    let energy: f64 = setup
        .constellation
        .iter()
        .zip(setup.p_x)
        .map(|(x, p)| p * apply(setup.gain, x).iter().map(|v| v * v).sum::<f64>())
        .sum();
    let snr = libm::pow(10.0, setup.snr_db / 10.0);
    if energy > 0.0 {
        libm::sqrt(energy / (q.n_s() as f64 * snr))
    } else {
        1.0
    }
}

/// Per-input output counts for one block of samples; block `c` draws from
/// ChaCha stream `c` so blocks can run anywhere in any order.
pub fn monte_carlo_chunk(
    q: &VectorQuantizer,
    setup: &McSetup,
    chunk: u64,
    samples: usize,
    sigma: f64,
) -> BTreeMap<(usize, Codeword), usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(setup.seed);
    rng.set_stream(chunk);
    let total: f64 = setup.p_x.iter().sum();
    let received: Vec<Vec<f64>> = setup.constellation.iter().map(|x| apply(setup.gain, x)).collect();
    let mut counts = BTreeMap::new();
    let mut y = vec![0.0; q.n_s()];
    for _ in 0..samples {
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * total;
        let mut acc = 0.0;
        let mut i = setup.p_x.len() - 1;
        for (k, &p) in setup.p_x.iter().enumerate() {
            acc += p;
            if u < acc {
                i = k;
                break;
            }
        }
        for (yd, s) in y.iter_mut().zip(&received[i]) {
            let n: f64 = StandardNormal.sample(&mut rng);
            *yd = s + sigma * n;
        }
        *counts.entry((i, q.quantize(&y))).or_insert(0) += 1;
    }
    counts
}

fn empirical_channel(
    n_inputs: usize,
    counts: &BTreeMap<(usize, Codeword), usize>,
    p_x: &[f64],
) -> Result<QuantizedDmc, HybridError> {
    let mut outputs: BTreeMap<&Codeword, usize> = BTreeMap::new();
    for (_, w) in counts.keys() {
        let next = outputs.len();
        outputs.entry(w).or_insert(next);
    }
    let k = outputs.len();
    let mut rows = vec![vec![0.0; k]; n_inputs];
    for ((i, w), &c) in counts {
        rows[*i][outputs[w]] += c as f64;
    }
    for (i, row) in rows.iter_mut().enumerate() {
        let s: f64 = row.iter().sum();
        if s == 0.0 {
            if p_x[i] > 0.0 {
                return Err(HybridError::RankDeficientEstimate(i));
            }
            row[0] = 1.0;
            continue;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(QuantizedDmc::from_rows(vec![0.0; n_inputs], rows)?)
}

fn sample_counts(q: &VectorQuantizer, setup: &McSetup) -> Result<(BTreeMap<(usize, Codeword), usize>, f64), HybridError> {
    if setup.n_samples == 0 || setup.constellation.is_empty() || setup.constellation.len() != setup.p_x.len() {
        return Err(HybridError::PremiseViolated("needs samples and one probability per point"));
    }
    if setup.gain.len() != q.n_s()
        || setup.p_x.iter().any(|&p| !(p >= 0.0))
        || !(setup.p_x.iter().sum::<f64>() > 0.0)
    {
        return Err(HybridError::PremiseViolated("gain must have n_s rows and P_X be a distribution"));
    }
    let sigma = noise_std(q, setup);
    let mut counts: BTreeMap<(usize, Codeword), usize> = BTreeMap::new();
    let mut left = setup.n_samples;
    let mut chunk = 0;
    while left > 0 {
        let n = left.min(CHUNK);
        for (key, c) in monte_carlo_chunk(q, setup, chunk, n, sigma) {
            *counts.entry(key).or_insert(0) += c;
        }
        left -= n;
        chunk += 1;
    }
    Ok((counts, sigma))
}

/// Capacity of the empirical channel from merged chunk counts.
pub fn rate_from_counts(
    n_inputs: usize,
    counts: &BTreeMap<(usize, Codeword), usize>,
) -> Result<(f64, usize), HybridError> {
    let dmc = empirical_channel(n_inputs, counts, &vec![1.0; n_inputs])?;
    let rate = match blahut_arimoto(&dmc, 1e-9, 10_000) {
        Ok(r) => r.rate,
        Err(CapacityError::NotConverged(r)) => r.rate,
        Err(e) => return Err(e.into()),
    };
    Ok((rate, dmc.n_outputs()))
}

/// Capacity of the channel `x ↦ Q(Hx + σN)` estimated from `n_samples` draws.
/// The input distribution is free; `P_X` only fixes the noise level.
pub fn monte_carlo_rate(q: &VectorQuantizer, setup: &McSetup) -> Result<McEstimate, HybridError> {
    let (counts, sigma) = sample_counts(q, setup)?;
    let (rate, n_outputs) = rate_from_counts(setup.constellation.len(), &counts)?;
    Ok(McEstimate {
        rate,
        n_outputs,
        samples: setup.n_samples,
        noise_std: sigma,
        seed: setup.seed,
    })
}

/// `I(X;Ŷ)` under `P_X` itself, estimated from the same draws as
/// [`monte_carlo_rate`].
pub fn monte_carlo_information(q: &VectorQuantizer, setup: &McSetup) -> Result<McEstimate, HybridError> {
    let (counts, sigma) = sample_counts(q, setup)?;
    let dmc = empirical_channel(setup.constellation.len(), &counts, setup.p_x)?;
    let total: f64 = setup.p_x.iter().sum();
    let p: Vec<f64> = setup.p_x.iter().map(|v| v / total).collect();
    Ok(McEstimate {
        rate: mutual_information(&dmc, &p),
        n_outputs: dmc.n_outputs(),
        samples: setup.n_samples,
        noise_std: sigma,
        seed: setup.seed,
    })
}

/// Product grid of interval centres `(k + 1/2)ζ`, `-m ≤ k < m`, where `m` is
/// the largest magnitude-comparator count on any axis.
pub fn default_constellation(n_s: usize, n_q: usize, zeta: f64) -> Vec<Vec<f64>> {
    let per_axis = VectorQuantizer::magnitudes_per_axis(n_s, n_q);
    let m = per_axis.iter().copied().max().unwrap_or(0).max(1);
    let centres: Vec<f64> = (0..2 * m).map(|k| (k as f64 - m as f64 + 0.5) * zeta).collect();
    let mut pts = vec![Vec::new()];
    for _ in 0..n_s {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                centres.iter().map(move |&c| {
                    let mut v = p.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
    }
    pts
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedConstellation {
    pub zeta: f64,
    pub constellation: Vec<Vec<f64>>,
    pub p_x: Vec<f64>,
    pub rate: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub snr_db: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Cap on Monte Carlo evaluations.
    pub budget: usize,
}

/// Coordinate search over ζ, point coordinates and input probabilities,
/// scored by [`monte_carlo_information`] so the reported rate is achieved by
/// the returned `P_X`. Every candidate is scored with the same seed, so
/// comparisons see the same noise.
pub fn optimize_constellation(
    n_s: usize,
    n_q: usize,
    levels: usize,
    cfg: &OptimizeConfig,
) -> Result<OptimizedConstellation, HybridError> {
    if cfg.budget == 0 {
        return Err(HybridError::PremiseViolated("budget must be positive"));
    }
    let gain: Vec<Vec<f64>> = (0..n_s).map(|a| unit(n_s, a)).collect();
    let score = |zeta: f64, pts: &[Vec<f64>], p: &[f64]| -> f64 {
        let Ok(q) = VectorQuantizer::hybrid(n_s, n_q, levels, zeta) else {
            return f64::NEG_INFINITY;
        };
        let setup = McSetup {
            constellation: pts,
            p_x: p,
            gain: &gain,
            snr_db: cfg.snr_db,
            n_samples: cfg.n_samples,
            seed: cfg.seed,
        };
        monte_carlo_information(&q, &setup).map_or(f64::NEG_INFINITY, |e| e.rate)
    };

    let mut zeta = 1.0;
    let mut pts = default_constellation(n_s, n_q, zeta);
    let mut p = vec![1.0 / pts.len() as f64; pts.len()];
    let mut best = score(zeta, &pts, &p);
    let mut evals = 1;
    let mut step = 0.25;
    let n_params = 1 + pts.len() * n_s + pts.len();

    'outer: while evals < cfg.budget && step > 1e-3 {
        let mut improved = false;
        for k in 0..n_params {
            for sign in [1.0, -1.0] {
                if evals >= cfg.budget {
                    break 'outer;
                }
                let (mut z2, mut pts2, mut p2) = (zeta, pts.clone(), p.clone());
                if k == 0 {
                    z2 *= libm::exp(sign * step);
                } else if k <= pts.len() * n_s {
                    let (i, a) = ((k - 1) / n_s, (k - 1) % n_s);
                    pts2[i][a] += sign * step * zeta;
                } else {
                    let i = k - 1 - pts.len() * n_s;
                    p2[i] *= libm::exp(sign * step);
                    let s: f64 = p2.iter().sum();
                    p2.iter_mut().for_each(|v| *v /= s);
                }
                let r = score(z2, &pts2, &p2);
                evals += 1;
                if r > best {
                    (zeta, pts, p, best) = (z2, pts2, p2, r);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(OptimizedConstellation {
        zeta,
        constellation: pts,
        p_x: p,
        rate: best,
        evaluations: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(ws: &[[f64; 2]], abs: bool, offs: &[f64], t: f64) -> VectorQuantizer {
        let comps = ws
            .iter()
            .zip(offs)
            .map(|(w, &o)| {
                let f = if abs {
                    Functional::Abs { w: w.to_vec(), offset: o }
                } else {
                    Functional::Linear { w: w.to_vec(), offset: o }
                };
                Comparator::one_bit(f, t)
            })
            .collect();
        VectorQuantizer::new(2, comps).unwrap()
    }

    fn box2(a: f64) -> ([f64; 2], [f64; 2]) {
        ([-a, -a], [a, a])
    }

    #[test]
    fn psk_lines() {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let q = lines(&[[1.0, 0.0], [0.0, 1.0], [s, s], [s, -s]], false, &[0.0; 4], 0.0);
        let (lo, hi) = box2(3.0);
        let c = count_regions_grid(&q, &lo, &hi, 16).unwrap();
        assert_eq!(c.unique_regions, 8);
        assert_eq!(c.total_regions, 8);
    }

    #[test]
    fn envelope_constellations() {
        let (lo, hi) = box2(5.0);
        let b = lines(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]], true, &[0.0; 4], 1.0);
        assert_eq!(count_regions_grid(&b, &lo, &hi, 32).unwrap().unique_regions, 12);
        let c = lines(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]], true, &[0.0, 0.0, 1.0, 1.0], 1.0);
        assert_eq!(count_regions_grid(&c, &lo, &hi, 32).unwrap().unique_regions, 16);
        assert_eq!(count_regions_separable(&c).unwrap().unique_regions, 16);
        let comps = vec![
            Comparator::one_bit(Functional::magnitude(2, 0), 1.0),
            Comparator::one_bit(Functional::magnitude(2, 1), 1.0),
            Comparator::one_bit(Functional::magnitude(2, 0), 3.0),
            Comparator::one_bit(Functional::magnitude(2, 1), 3.0),
        ];
        let a = VectorQuantizer::new(2, comps).unwrap();
        let sep = count_regions_separable(&a).unwrap();
        assert_eq!(sep.unique_regions, 9);
        assert_eq!(count_regions_grid(&a, &lo, &hi, 32).unwrap(), sep);
    }

    #[test]
    fn hybrid_construction_thresholds() {
        let q = VectorQuantizer::hybrid(2, 6, 2, 1.0).unwrap();
        let t: Vec<f64> = q.comparators().iter().map(|c| c.thresholds[0]).collect();
        assert_eq!(t, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(q.comparators()[4].functional, Functional::Abs { ref w, .. } if w == &vec![1.0, 0.0]));
        assert_eq!(VectorQuantizer::magnitudes_per_axis(2, 5), vec![2, 1]);
        let sep = count_regions_separable(&q).unwrap();
        assert_eq!(sep.unique_regions, 36);
        let (lo, hi) = box2(5.0);
        assert_eq!(count_regions_grid(&q, &lo, &hi, 20).unwrap(), sep);
    }

    #[test]
    fn default_box_covers_vertices() {
        let q = lines(&[[1.0, 1.0], [1.0, -1.0]], true, &[0.0, 0.0], 1.0);
        let (lo, hi) = default_box(&q, 2.0);
        assert_eq!(lo, vec![-3.0, -3.0]);
        assert_eq!(hi, vec![3.0, 3.0]);
        let nearly = lines(&[[1.0, 0.0], [1.0, 0.001]], false, &[0.0, 1.0], 1.0);
        let (lo, hi) = default_box(&nearly, 2.0);
        assert!(hi[1] > 1000.0 && lo[1] < 2.0);
        let one = VectorQuantizer::new(1, vec![Comparator::one_bit(Functional::magnitude(1, 0), 3.0)]).unwrap();
        assert_eq!(default_box(&one, 2.0), (vec![-5.0], vec![5.0]));
    }

    #[test]
    fn region_bounds() {
        assert_eq!(hyperplane_region_bounds(2, 4), (8, 11));
        assert_eq!(hyperplane_region_bounds(1, 7), (2, 8));
        assert_eq!(hyperplane_region_bounds(3, 8).0, 58);
    }

    #[test]
    fn theorem6_numbers() {
        let (lo, up) = theorem6_bounds(2, 6, 2).unwrap();
        assert!((lo - 4.0).abs() < 1e-12);
        assert!((up - libm::log2(79.0)).abs() < 1e-12);
        let (lo1, _) = theorem6_bounds(1, 5, 3).unwrap();
        assert!((lo1 - (1.0 + libm::log2(8.0))).abs() < 1e-12);
        assert!(theorem6_bounds(2, 2, 2).is_err());
        for n_q in 2..=64 {
            for n_s in 1..n_q {
                for l in 2..=6 {
                    let (a, b) = theorem6_bounds(n_s, n_q, l).unwrap();
                    assert!(a <= b + 1e-9, "{n_s} {n_q} {l}");
                }
            }
        }
    }

    #[test]
    fn separable_one_dimension_matches_scalar() {
        let comps = vec![
            Comparator::one_bit(Functional::coordinate(1, 0), 0.0),
            Comparator::one_bit(Functional::magnitude(1, 0), 1.0),
            Comparator::one_bit(Functional::Abs { w: vec![2.0], offset: 1.0 }, 1.0),
        ];
        let q = VectorQuantizer::new(1, comps).unwrap();
        let c = count_regions_separable(&q).unwrap();
        let g = count_regions_grid(&q, &[-4.0], &[4.0], 64).unwrap();
        assert_eq!(c, g);
        let mixed = lines(&[[1.0, 1.0]], false, &[0.0], 0.0);
        assert_eq!(count_regions_separable(&mixed), Err(HybridError::NotSeparable(0)));
    }

    #[test]
    fn monte_carlo_example4() {
        let q = VectorQuantizer::hybrid(2, 6, 2, 1.0).unwrap();
        let pts = default_constellation(2, 6, 1.0);
        assert_eq!(pts.len(), 16);
        let p = vec![1.0 / 16.0; 16];
        let gain = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let setup = McSetup {
            constellation: &pts,
            p_x: &p,
            gain: &gain,
            snr_db: 40.0,
            n_samples: 15_000,
            seed: DEFAULT_SEED,
        };
        let e = monte_carlo_rate(&q, &setup).unwrap();
        assert!((e.rate - 4.0).abs() < 0.1, "{}", e.rate);
        let again = monte_carlo_rate(&q, &setup).unwrap();
        assert_eq!(e, again);

        let zero = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let e0 = monte_carlo_rate(&q, &McSetup { gain: &zero, ..setup.clone() }).unwrap();
        assert!(e0.rate <= 0.05);

        let mut p1 = p.clone();
        p1[3] = 0.0;
        assert_eq!(
            monte_carlo_rate(&q, &McSetup { p_x: &p1, ..setup.clone() }),
            Err(HybridError::RankDeficientEstimate(3))
        );

        let big = monte_carlo_rate(&q, &McSetup { n_samples: 30_000, ..setup }).unwrap();
        assert!((big.rate - e.rate).abs() < 0.05);
    }

    fn opt(n_q: usize, snr_db: f64) -> OptimizedConstellation {
        let cfg = OptimizeConfig {
            snr_db,
            n_samples: 15_000,
            seed: DEFAULT_SEED,
            budget: 60,
        };
        optimize_constellation(2, n_q, 2, &cfg).unwrap()
    }

    #[test]
    fn optimizer_saturates() {
        let r6 = opt(6, 40.0);
        assert!((r6.rate - 4.0).abs() < 0.1, "{}", r6.rate);
        assert!(r6.evaluations <= 60);
        let r5 = opt(5, 40.0);
        let (lower, _) = theorem6_bounds(2, 5, 2).unwrap();
        assert!(r5.rate >= lower, "{} < {lower}", r5.rate);
        let low = opt(6, -5.0);
        assert!(low.rate <= 0.6, "{}", low.rate);
    }
}
