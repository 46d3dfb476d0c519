//! Scalar quantizers: `n_q` analog operators, each followed by an `ℓ`-level ADC.
//!
//! ADC `j` outputs `k` when `f_j(y)` lies in `[t(j,k), t(j,k+1))`. Reading
//! the outputs left to right across the real line gives the associated code.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::analog_ops::{AnalogOp, Family, OpError, TOL};

pub type Codeword = Vec<u8>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantizerError {
    #[error("quantizer needs at least one operator")]
    NoOps,
    #[error("operators mix envelope chains and polynomials")]
    MixedFamilies,
    #[error("{ops} operators but {rows} threshold rows")]
    RowCount { ops: usize, rows: usize },
    #[error("threshold rows must share a non-zero length")]
    RaggedRows,
    #[error("threshold row {0} has repeated or non-finite values")]
    BadRow(usize),
    #[error("envelope threshold row {0} has a negative entry")]
    NegativeEnvelopeThreshold(usize),
    #[error("more than 256 ADC levels")]
    TooManyLevels,
    #[error(transparent)]
    Op(#[from] OpError),
}

/// Per-ADC threshold rows, sorted ascending. The sorting permutation is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMatrix {
    rows: Vec<Vec<f64>>,
    perms: Vec<Vec<usize>>,
}

impl ThresholdMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, QuantizerError> {
        let width = rows.first().map_or(0, |r| r.len());
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(QuantizerError::RaggedRows);
        }
        if width > 255 {
            return Err(QuantizerError::TooManyLevels);
        }
        let mut sorted = Vec::with_capacity(rows.len());
        let mut perms = Vec::with_capacity(rows.len());
        for (j, row) in rows.into_iter().enumerate() {
            let mut perm: Vec<usize> = (0..row.len()).collect();
            perm.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
            let r: Vec<f64> = perm.iter().map(|&i| row[i]).collect();
            if r.iter().any(|x| !x.is_finite()) || r.windows(2).any(|w| w[0] >= w[1]) {
                return Err(QuantizerError::BadRow(j));
            }
            sorted.push(r);
            perms.push(perm);
        }
        Ok(ThresholdMatrix {
            rows: sorted,
            perms,
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }

    /// `permutation(j)[k]` is the original column of the k-th sorted threshold.
    pub fn permutation(&self, j: usize) -> &[usize] {
        &self.perms[j]
    }

    pub fn levels(&self) -> usize {
        self.rows[0].len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarQuantizer {
    ops: Vec<AnalogOp>,
    thresholds: ThresholdMatrix,
}

impl ScalarQuantizer {
    pub fn new(ops: Vec<AnalogOp>, thresholds: ThresholdMatrix) -> Result<Self, QuantizerError> {
        let Some(first) = ops.first() else {
            return Err(QuantizerError::NoOps);
        };
        let family = first.family();
        if ops.iter().any(|o| o.family() != family) {
            return Err(QuantizerError::MixedFamilies);
        }
        if ops.len() != thresholds.rows.len() {
            return Err(QuantizerError::RowCount {
                ops: ops.len(),
                rows: thresholds.rows.len(),
            });
        }
        if family == Family::Envelope {
            if let Some(j) = thresholds.rows.iter().position(|r| r[0] < 0.0) {
                return Err(QuantizerError::NegativeEnvelopeThreshold(j));
            }
        }
        Ok(ScalarQuantizer { ops, thresholds })
    }

    pub fn ops(&self) -> &[AnalogOp] {
        &self.ops
    }

    pub fn thresholds(&self) -> &ThresholdMatrix {
        &self.thresholds
    }

    pub fn family(&self) -> Family {
        self.ops[0].family()
    }

    pub fn n_q(&self) -> usize {
        self.ops.len()
    }

    pub fn levels(&self) -> usize {
        self.thresholds.levels()
    }

    pub fn quantize(&self, y: f64) -> Codeword {
        label(&self.ops, self.thresholds.rows(), y)
    }
}

fn level(t: &[f64], v: f64) -> u8 {
    t.iter().take_while(|&&x| x <= v).count() as u8
}

fn label(ops: &[AnalogOp], rows: &[Vec<f64>], y: f64) -> Codeword {
    ops.iter()
        .zip(rows)
        .map(|(op, t)| level(t, op.eval(y)))
        .collect()
}

/// Breakpoints and the codeword of every cell between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub breakpoints: Vec<f64>,
    pub labels: Vec<Codeword>,
}

impl Partition {
    /// Cell `i` spans `(breakpoints[i-1], breakpoints[i])` with infinite ends.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 {
            f64::NEG_INFINITY
        } else {
            self.breakpoints[i - 1]
        };
        let hi = self.breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    pub fn n_cells(&self) -> usize {
        self.labels.len()
    }
}

/// Partition induced by arbitrary operators with per-operator threshold rows.
///
/// Rows may differ in length; each must be sorted ascending.
pub fn partition_of(ops: &[AnalogOp], rows: &[Vec<f64>]) -> Result<Partition, OpError> {
    let mut pts = Vec::new();
    for (op, row) in ops.iter().zip(rows) {
        for &t in row {
            pts.extend(op.roots(t)?.crossings());
        }
    }
    pts.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        match merged.last() {
            Some(&last) if p - last <= TOL => {}
            _ => merged.push(p),
        }
    }

    let probe = |i: usize, bps: &[f64]| -> f64 {
        match (i, bps.len()) {
            (_, 0) => 0.0,
            (0, _) => bps[0] - 1.0,
            (i, n) if i == n => bps[n - 1] + 1.0,
            (i, _) => 0.5 * (bps[i - 1] + bps[i]),
        }
    };
    let mut breakpoints = Vec::with_capacity(merged.len());
    let mut labels = Vec::with_capacity(merged.len() + 1);
    labels.push(label(ops, rows, probe(0, &merged)));
    for i in 1..=merged.len() {
        let l = label(ops, rows, probe(i, &merged));
        // a point where nothing changes is not a breakpoint
        if labels.last() != Some(&l) {
            breakpoints.push(merged[i - 1]);
            labels.push(l);
        }
    }
    Ok(Partition {
        breakpoints,
        labels,
    })
}

pub fn extract_partition(q: &ScalarQuantizer) -> Result<Partition, QuantizerError> {
    Ok(partition_of(&q.ops, q.thresholds.rows())?)
}

pub fn extract_code(q: &ScalarQuantizer) -> Result<AssociatedCode, QuantizerError> {
    let p = extract_partition(q)?;
    Ok(AssociatedCode::new(p.labels, q.levels()))
}

/// Ordered codewords with per-transition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociatedCode {
    codewords: Vec<Codeword>,
    levels: usize,
    transitions: Vec<Option<usize>>,
}

impl AssociatedCode {
    pub fn new(codewords: Vec<Codeword>, levels: usize) -> Self {
        let transitions = codewords
            .windows(2)
            .map(|w| {
                let mut changed = w[0]
                    .iter()
                    .zip(&w[1])
                    .enumerate()
                    .filter(|(_, (a, b))| a != b);
                match (changed.next(), changed.next()) {
                    (Some((j, (a, b))), None) if a.abs_diff(*b) == 1 => Some(j),
                    _ => None,
                }
            })
            .collect();
        AssociatedCode {
            codewords,
            levels,
            transitions,
        }
    }

    pub fn codewords(&self) -> &[Codeword] {
        &self.codewords
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn n_q(&self) -> usize {
        self.codewords.first().map_or(0, |c| c.len())
    }

    /// Number of distinct codewords.
    pub fn size(&self) -> usize {
        self.codewords.iter().collect::<BTreeSet<_>>().len()
    }

    /// `ξ_k`: the single ADC changed by one level at breakpoint `k`, if any.
    pub fn transition_positions(&self) -> &[Option<usize>] {
        &self.transitions
    }

    pub fn transition_counts(&self) -> Vec<usize> {
        let mut k = alloc::vec![0; self.n_q()];
        for j in self.transitions.iter().flatten() {
            k[*j] += 1;
        }
        k
    }

    /// Breakpoint indices (0-based) at which each ADC makes a unit transition.
    pub fn transition_sets(&self) -> Vec<Vec<usize>> {
        let mut s = alloc::vec![Vec::new(); self.n_q()];
        for (i, j) in self.transitions.iter().enumerate() {
            if let Some(j) = j {
                s[*j].push(i);
            }
        }
        s
    }
}

pub fn format_codeword(c: &[u8]) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    let sep = c.iter().any(|&d| d > 9);
    for (i, d) in c.iter().enumerate() {
        if sep && i > 0 {
            s.push('.');
        }
        let _ = write!(s, "{d}");
    }
    s
}

pub fn high_snr_rate(c: &AssociatedCode) -> f64 {
    libm::log2(c.size() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const PROP_COUNT: &str = "codeword_count";
pub const PROP_BOUNDARY: &str = "boundary_codeword";
pub const PROP_UNIT_STEPS: &str = "unit_steps";
pub const PROP_TRANSITIONS: &str = "transition_counts";
pub const PROP_PERIODIC: &str = "periodic_positions";
pub const PROP_SIZE: &str = "size_bound";

fn upow(b: usize, e: usize) -> usize {
    let mut r: usize = 1;
    for _ in 0..e {
        r = r.saturating_mul(b);
    }
    r
}

/// Largest possible code size for the family.
pub fn code_size_bound(family: Family, delta: usize, levels: usize, n_q: usize) -> usize {
    let cap = upow(levels, n_q);
    match family {
        Family::Envelope => cap.min((levels - 1) * n_q * upow(2, delta)),
        Family::Poly => cap.min((levels - 1) * delta * n_q + delta % 2),
    }
}

pub fn validate_code_properties(
    c: &AssociatedCode,
    family: Family,
    delta: usize,
    levels: usize,
    n_q: usize,
) -> PropertyReport {
    use alloc::format;
    let top = (levels - 1) as u8;
    let words = c.codewords();
    let per_adc = match family {
        Family::Envelope => (levels - 1) * upow(2, delta),
        Family::Poly => (levels - 1) * delta,
    };
    let gamma = per_adc * n_q + 1;

    let count = PropertyCheck {
        name: PROP_COUNT,
        pass: words.len() == gamma,
        detail: format!("{} codewords, expected {}", words.len(), gamma),
    };

    let first = words.first();
    let boundary_ok = match (family, first) {
        (_, None) => false,
        (Family::Envelope, Some(w)) => w.len() == n_q && w.iter().all(|&d| d == top),
        (Family::Poly, Some(w)) => {
            w.len() == n_q && (w.iter().all(|&d| d == top) || w.iter().all(|&d| d == 0))
        }
    };
    let boundary = PropertyCheck {
        name: PROP_BOUNDARY,
        pass: boundary_ok,
        detail: format!("first codeword {}", first.map(|w| format_codeword(w)).unwrap_or_default()),
    };

    let bad_step = words.windows(2).position(|w| {
        w[0].iter()
            .zip(&w[1])
            .map(|(a, b)| a.abs_diff(*b) as usize)
            .sum::<usize>()
            != 1
    });
    let steps = PropertyCheck {
        name: PROP_UNIT_STEPS,
        pass: bad_step.is_none(),
        detail: match bad_step {
            None => String::from("all consecutive codewords at L1 distance 1"),
            Some(i) => format!("codewords {} and {} are not adjacent", i, i + 1),
        },
    };

    let kappa = c.transition_counts();
    let trans = PropertyCheck {
        name: PROP_TRANSITIONS,
        pass: kappa.len() == n_q && kappa.iter().all(|&k| k == per_adc),
        detail: format!("kappa {:?}, expected {} each", kappa, per_adc),
    };

    let periodic_fail = (0..n_q).find(|&j| !periodic_position(words, j, top));
    let periodic = PropertyCheck {
        name: PROP_PERIODIC,
        pass: !words.is_empty() && periodic_fail.is_none(),
        detail: match periodic_fail {
            None => String::from("every position sweeps between 0 and the top level"),
            Some(j) => format!("position {j} reverses away from an extreme"),
        },
    };

    let bound = code_size_bound(family, delta, levels, n_q);
    let size = PropertyCheck {
        name: PROP_SIZE,
        pass: c.size() <= bound,
        detail: format!("size {} vs bound {}", c.size(), bound),
    };

    PropertyReport {
        checks: alloc::vec![count, boundary, steps, trans, periodic, size],
    }
}

// Values taken by position j start at an extreme, move in unit steps and only
// turn around at 0 or the top level.
fn periodic_position(words: &[Codeword], j: usize, top: u8) -> bool {
    let mut vals: Vec<u8> = Vec::new();
    for w in words {
        let Some(&v) = w.get(j) else { return false };
        if vals.last() != Some(&v) {
            vals.push(v);
        }
    }
    let Some(&start) = vals.first() else {
        return false;
    };
    if start != 0 && start != top {
        return false;
    }
    let mut dir = 0i32;
    for w in vals.windows(2) {
        let d = w[1] as i32 - w[0] as i32;
        if d.abs() != 1 {
            return false;
        }
        if dir != 0 && d != dir && w[0] != 0 && w[0] != top {
            return false;
        }
        dir = d;
    }
    true
}
