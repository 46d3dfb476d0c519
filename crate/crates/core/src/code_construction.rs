//! Building codes with prescribed transition counts, and realizing a code
//! with envelope-detector chains.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::analog_ops::{is_fully_symmetric, AnalogOp, EnvelopeChain, TOL};
use crate::scalar_quantizer::{
    extract_partition, AssociatedCode, Codeword, ScalarQuantizer, ThresholdMatrix,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstructionError {
    #[error("transition counts must be even, positive and within 2 of each other")]
    InfeasibleSpec,
    #[error("at most 16 positions are supported")]
    TooManyPositions,
    #[error("no cycle with the requested transition counts was found")]
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("code has {codewords} codewords for {roots} roots")]
    LengthMismatch { codewords: usize, roots: usize },
    #[error("roots must be strictly increasing")]
    UnsortedRoots,
    #[error("breakpoint {0} does not change exactly one ADC by one level")]
    NotUnitStep(usize),
    #[error("ADC {0} has a transition set whose size is not a power of two")]
    BadSetSize(usize),
    #[error("roots of ADC {0} are not fully symmetric")]
    SymmetryViolation(usize),
    #[error("synthesized quantizer does not reproduce the code")]
    Unrealizable,
}

/// Per-position transition counts `κ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSpec {
    kappa: Vec<usize>,
}

impl TransitionSpec {
    pub fn new(kappa: Vec<usize>) -> Result<Self, ConstructionError> {
        let lo = kappa.iter().copied().min().unwrap_or(0);
        let hi = kappa.iter().copied().max().unwrap_or(0);
        if kappa.is_empty() || lo == 0 || hi - lo > 2 || kappa.iter().any(|k| k % 2 == 1) {
            return Err(ConstructionError::InfeasibleSpec);
        }
        if kappa.len() > 16 {
            return Err(ConstructionError::TooManyPositions);
        }
        Ok(TransitionSpec { kappa })
    }

    pub fn kappa(&self) -> &[usize] {
        &self.kappa
    }

    pub fn n_q(&self) -> usize {
        self.kappa.len()
    }
}

fn digit(x: u32) -> usize {
    x.trailing_zeros() as usize
}

fn spectrum(code: &[u32], n: usize) -> Vec<usize> {
    let mut c = vec![0; n];
    for d in transitions(code) {
        c[d] += 1;
    }
    c
}

fn transitions(code: &[u32]) -> Vec<usize> {
    let n = code.len();
    (0..n).map(|k| digit(code[k] ^ code[(k + 1) % n])).collect()
}

/// Even bounds `(lo, hi)` that every transition count of a balanced
/// `n`-bit Gray cycle lies within.
pub fn balanced_bounds(n: usize) -> (usize, usize) {
    let total = 1usize << n;
    let lo = 2 * (total / (2 * n));
    let hi = 2 * total.div_ceil(2 * n);
    (lo, hi)
}

/// Cyclic Gray code on `n` bits with near-equal per-bit transition counts.
///
/// Built by doubling from `n - 2` bits: the old cycle is cut into blocks that
/// are threaded through the four 2-bit prefixes.
fn balanced_cycle(n: usize) -> Vec<u32> {
    match n {
        1 => return vec![0, 1],
        2 => return vec![0, 1, 3, 2],
        _ => {}
    }
    let m = n - 2;
    let g = balanced_cycle(m);
    let big_n = g.len();
    let lam = spectrum(&g, m);
    let (lo, hi) = balanced_bounds(n);
    let total = 1usize << n;

    let mut lengths = vec![lo, hi];
    lengths.dedup();
    for l in lengths {
        let Some(rest) = total.checked_sub(2 * l) else {
            continue;
        };
        let k = if hi == lo {
            if rest != m * lo {
                continue;
            }
            0
        } else {
            let Some(extra) = rest.checked_sub(m * lo) else {
                continue;
            };
            if extra % (hi - lo) != 0 {
                continue;
            }
            extra / (hi - lo)
        };
        if k > m {
            continue;
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&i| core::cmp::Reverse(lam[i]));
        let mut target = vec![lo; m];
        for &i in &order[..k] {
            target[i] = hi;
        }
        if (0..m).any(|i| 2 * lam[i] > target[i] || target[i] > 4 * lam[i]) {
            continue;
        }
        let cuts: Vec<usize> = (0..m).map(|i| 2 * lam[i] - target[i] / 2).collect();

        for r in 0..big_n {
            let gr: Vec<u32> = g[r..].iter().chain(&g[..r]).copied().collect();
            let d = transitions(&gr);
            let mut forced = vec![0, big_n - 2, big_n - 1];
            forced.sort_unstable();
            forced.dedup();
            let mut rem = cuts.clone();
            let mut feasible = true;
            for &f in &forced {
                if rem[d[f]] == 0 {
                    feasible = false;
                    break;
                }
                rem[d[f]] -= 1;
            }
            if !feasible {
                continue;
            }
            let mut boundaries = forced;
            for k in 1..big_n.saturating_sub(2) {
                if rem[d[k]] > 0 {
                    boundaries.push(k);
                    rem[d[k]] -= 1;
                }
            }
            if rem.iter().any(|&x| x > 0) {
                continue;
            }
            boundaries.sort_unstable();
            if let Some(code) = thread_blocks(&gr, m, &boundaries) {
                return code;
            }
        }
    }
    unreachable!("balanced doubling has a valid partition for every n")
}

fn thread_blocks(g: &[u32], m: usize, cuts: &[usize]) -> Option<Vec<u32>> {
    let n = g.len();
    let (p01, p11, p10) = (1u32 << m, 3u32 << m, 2u32 << m);
    let mut out = Vec::with_capacity(4 * n);
    out.push(g[0]);
    let mut start = 1;
    let mut top = true;
    for &k in cuts {
        if k == 0 {
            continue;
        }
        if k >= n - 1 {
            break;
        }
        let blk = &g[start..=k];
        let (first, last) = if top { (0, p11) } else { (p11, 0) };
        out.extend(blk.iter().map(|x| first | x));
        out.extend(blk.iter().rev().map(|x| p01 | x));
        out.extend(blk.iter().map(|x| last | x));
        top = !top;
        start = k + 1;
    }
    if !top {
        return None;
    }
    out.push(g[n - 1]);
    out.extend(g.iter().rev().map(|x| p10 | x));
    out.extend([p11 | g[0], p11 | g[n - 1], p01 | g[n - 1], p01 | g[0]]);
    Some(out)
}

fn words_to_code(words: &[u32], n: usize, msb_first: bool) -> AssociatedCode {
    let mut cw: Vec<Codeword> = words
        .iter()
        .map(|&w| {
            (0..n)
                .map(|j| {
                    let bit = if msb_first { n - 1 - j } else { j };
                    ((w >> bit) & 1) as u8
                })
                .collect()
        })
        .collect();
    cw.push(cw[0].clone());
    AssociatedCode::new(cw, 2)
}

/// True when the listing visits every `n`-bit word once, changes one bit per
/// step and returns to its start.
pub fn is_gray_cycle(c: &AssociatedCode) -> bool {
    let w = c.codewords();
    let n = c.n_q();
    if n == 0 || n >= usize::BITS as usize || w.len() != (1 << n) + 1 {
        return false;
    }
    let unit = w
        .windows(2)
        .all(|p| p[0].iter().zip(&p[1]).filter(|(a, b)| a != b).count() == 1);
    c.size() == 1 << n && unit && w[0] == w[w.len() - 1]
}

/// Balanced cyclic Gray code on `n` bits, listed with the closing codeword.
pub fn balanced_gray_code(n: usize) -> AssociatedCode {
    assert!((1..=16).contains(&n), "balanced_gray_code supports 1..=16 bits");
    words_to_code(&balanced_cycle(n), n, true)
}

// Relabel the balanced code's digits so its counts dominate `kappa`.
fn matched_balanced(kappa: &[usize]) -> Vec<usize> {
    let n = kappa.len();
    let g = balanced_cycle(n);
    let counts = spectrum(&g, n);
    let mut by_count: Vec<usize> = (0..n).collect();
    by_count.sort_by_key(|&i| counts[i]);
    let mut by_kappa: Vec<usize> = (0..n).collect();
    by_kappa.sort_by_key(|&i| kappa[i]);
    let mut perm = vec![0; n];
    for (a, b) in by_count.into_iter().zip(by_kappa) {
        perm[a] = b;
    }
    transitions(&g).into_iter().map(|d| perm[d]).collect()
}

fn counts_of(t: &[usize], n: usize) -> Vec<usize> {
    let mut c = vec![0; n];
    for &d in t {
        c[d] += 1;
    }
    c
}

fn is_simple_cycle(t: &[usize], n: usize) -> bool {
    let mut seen = vec![false; 1 << n];
    let mut v = 0usize;
    for &d in t {
        if seen[v] {
            return false;
        }
        seen[v] = true;
        v ^= 1 << d;
    }
    v == 0
}

// Shrink a dense cycle by replacing b,a,b runs with a single a.
fn unbump(kappa: &[usize], offset: usize) -> Option<Vec<usize>> {
    let n = kappa.len();
    let mut t = matched_balanced(kappa);
    let cnt = counts_of(&t, n);
    let mut excess: Vec<usize> = Vec::with_capacity(n);
    for j in 0..n {
        excess.push(cnt[j].checked_sub(kappa[j])?);
    }
    while excess.iter().any(|&e| e > 0) {
        let len = t.len();
        let mut hit = None;
        'digits: for b in 0..n {
            if excess[b] == 0 {
                continue;
            }
            for ii in 0..len {
                let i = (ii + offset) % len;
                if t[i] == b && t[(i + 2) % len] == b && t[(i + 1) % len] != b {
                    hit = Some((b, i));
                    break 'digits;
                }
            }
        }
        let (b, i) = hit?;
        let (i0, i2) = (i, (i + 2) % len);
        t = t
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i0 && k != i2)
            .map(|(_, &d)| d)
            .collect();
        excess[b] -= 2;
    }
    Some(t)
}

// Lift a cycle into one more dimension: the first `detours` even-indexed
// edges e become j, e, j.
fn detour(t: &[usize], j: usize, detours: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(t.len() + 2 * detours);
    let mut used = 0;
    for (i, &d) in t.iter().enumerate() {
        if i % 2 == 0 && used < detours {
            out.extend([j, d, j]);
            used += 1;
        } else {
            out.push(d);
        }
    }
    out
}

fn sparse_cycle(kappa: &[usize]) -> Option<Vec<usize>> {
    let n = kappa.len();
    let total: usize = kappa.iter().sum();
    if total == 1 << n {
        return Some(matched_balanced(kappa));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| core::cmp::Reverse(kappa[i]));
    for j in order {
        let rest = total - kappa[j];
        if n > 1 && rest <= 1 << (n - 1) && kappa[j] <= rest {
            let idx: Vec<usize> = (0..n).filter(|&i| i != j).collect();
            let sub: Vec<usize> = idx.iter().map(|&i| kappa[i]).collect();
            let Some(ts) = sparse_cycle(&sub) else {
                continue;
            };
            let ts: Vec<usize> = ts.into_iter().map(|d| idx[d]).collect();
            let out = detour(&ts, j, kappa[j] / 2);
            if counts_of(&out, n) == kappa && is_simple_cycle(&out, n) {
                return Some(out);
            }
        }
    }
    let len: usize = 1 << n;
    (0..len).find_map(|off| {
        unbump(kappa, off).filter(|t| counts_of(t, n) == kappa && is_simple_cycle(t, n))
    })
}

/// Code whose position `j` changes exactly `κ_j` times, starting from the
/// all-ones codeword.
///
/// With `Σκ ≥ 2^n` every codeword appears; otherwise all `Σκ` codewords are
/// distinct apart from the closing repeat of the first.
pub fn construct_code(spec: &TransitionSpec) -> Result<AssociatedCode, ConstructionError> {
    let kappa = spec.kappa();
    let n = kappa.len();
    let total: usize = kappa.iter().sum();
    let trans = if total >= 1 << n {
        let base = matched_balanced(kappa);
        let cnt = counts_of(&base, n);
        let mut t = Vec::with_capacity(total);
        // spare transitions become back-and-forth excursions from the start
        for j in 0..n {
            for _ in 0..(kappa[j] - cnt[j]) / 2 {
                t.extend([j, j]);
            }
        }
        t.extend(base);
        t
    } else {
        sparse_cycle(kappa).ok_or(ConstructionError::NotFound)?
    };

    let mut word: Codeword = vec![1; n];
    let mut words = Vec::with_capacity(trans.len() + 1);
    words.push(word.clone());
    for d in trans {
        word[d] ^= 1;
        words.push(word.clone());
    }
    Ok(AssociatedCode::new(words, 2))
}

/// A binary code together with the breakpoints where its codewords change.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisInput {
    pub code: AssociatedCode,
    pub roots: Vec<f64>,
}

/// Envelope-chain quantizer whose partition has the given roots and code.
///
/// Each ADC's crossings of one threshold must form a fully symmetric vector
/// of length `2^δ`; all ADCs share the same `δ`. For more than two levels the
/// crossings of every threshold give the same biases.
pub fn synthesize_quantizer(input: &SynthesisInput) -> Result<ScalarQuantizer, SynthesisError> {
    let code = &input.code;
    let roots = &input.roots;
    let words = code.codewords();
    if words.len() != roots.len() + 1 {
        return Err(SynthesisError::LengthMismatch {
            codewords: words.len(),
            roots: roots.len(),
        });
    }
    if roots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SynthesisError::UnsortedRoots);
    }
    let n_q = code.n_q();
    let levels = code.levels();
    // groups[j][k-1]: roots where ADC j crosses between levels k-1 and k
    let mut groups = vec![vec![Vec::new(); levels - 1]; n_q];
    for (i, pos) in code.transition_positions().iter().enumerate() {
        let j = pos.ok_or(SynthesisError::NotUnitStep(i))?;
        let k = words[i][j].max(words[i + 1][j]) as usize;
        groups[j][k - 1].push(roots[i]);
    }

    let mut ops = Vec::with_capacity(n_q);
    let mut rows = Vec::with_capacity(n_q);
    let mut depth = None;
    for (j, adc) in groups.iter().enumerate() {
        let size = adc[0].len();
        if !size.is_power_of_two() || size < 2 || adc.iter().any(|g| g.len() != size) {
            return Err(SynthesisError::BadSetSize(j));
        }
        let delta = size.trailing_zeros() as usize;
        if *depth.get_or_insert(delta) != delta {
            return Err(SynthesisError::BadSetSize(j));
        }
        let mut biases: Option<Vec<f64>> = None;
        let mut row = Vec::with_capacity(levels - 1);
        for g in adc {
            if !is_fully_symmetric(g).unwrap_or(false) {
                return Err(SynthesisError::SymmetryViolation(j));
            }
            let (a, t) = chain_from_roots(g, delta);
            match &biases {
                None => biases = Some(a),
                Some(b) => {
                    let scale = 1.0 + g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    if b.iter().zip(&a).any(|(x, y)| (x - y).abs() > TOL * scale) {
                        return Err(SynthesisError::SymmetryViolation(j));
                    }
                }
            }
            row.push(t);
        }
        let chain =
            EnvelopeChain::new(biases.unwrap()).map_err(|_| SynthesisError::Unrealizable)?;
        ops.push(AnalogOp::Envelope(chain));
        rows.push(row);
    }
    let thresholds = ThresholdMatrix::new(rows).map_err(|_| SynthesisError::Unrealizable)?;
    let q = ScalarQuantizer::new(ops, thresholds).map_err(|_| SynthesisError::Unrealizable)?;

    let p = extract_partition(&q).map_err(|_| SynthesisError::Unrealizable)?;
    let same_roots = p.breakpoints.len() == roots.len()
        && p
            .breakpoints
            .iter()
            .zip(roots)
            .all(|(a, b)| (a - b).abs() <= TOL * (1.0 + b.abs()));
    if !same_roots || p.labels != words {
        return Err(SynthesisError::Unrealizable);
    }
    Ok(q)
}

// Partial sums a_1 + .. + a_s are the centres of the top 2^(δ-s+1) roots.
fn chain_from_roots(r: &[f64], delta: usize) -> (Vec<f64>, f64) {
    let n = r.len();
    let last = r[n - 1];
    let mut biases = Vec::with_capacity(delta);
    let mut sum = 0.0;
    for s in 1..=delta {
        let eta = n - (1 << (delta - s + 1));
        let a = 0.5 * (last + r[eta]) - sum;
        biases.push(a);
        sum += a;
    }
    (biases, last - sum)
}

/// `n_q` single detectors `|y - j + (n_q+1)/2|` against `(n_q+1)/2`, giving
/// `2 n_q` distinct codewords.
pub fn single_detector_construction(n_q: usize) -> ScalarQuantizer {
    let half = (n_q as f64 + 1.0) / 2.0;
    let ops = (1..=n_q)
        .map(|j| AnalogOp::Envelope(EnvelopeChain::new(vec![j as f64 - half]).unwrap()))
        .collect();
    let t = ThresholdMatrix::new(vec![vec![half]; n_q]).unwrap();
    ScalarQuantizer::new(ops, t).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog_ops::Family;
    use crate::scalar_quantizer::{
        extract_code, validate_code_properties, PROP_BOUNDARY, PROP_COUNT, PROP_PERIODIC,
        PROP_UNIT_STEPS,
    };

    #[test]
    fn gray_small_cases() {
        let c = balanced_gray_code(2);
        let s: Vec<_> = c.codewords().iter().map(|w| crate::scalar_quantizer::format_codeword(w)).collect();
        assert_eq!(s, ["00", "01", "11", "10", "00"]);
        assert_eq!(c.transition_counts(), vec![2, 2]);

        let mut k = balanced_gray_code(3).transition_counts();
        k.sort();
        assert_eq!(k, vec![2, 2, 4]);

        let k = balanced_gray_code(5).transition_counts();
        assert!(k.iter().all(|&x| x == 6 || x == 8));
        assert_eq!(k.iter().sum::<usize>(), 32);
    }

    #[test]
    fn gray_is_balanced_hamiltonian() {
        for n in 1..=12 {
            let c = balanced_gray_code(n);
            assert!(is_gray_cycle(&c), "n={n}");
            let (lo, hi) = balanced_bounds(n);
            assert!(c.transition_counts().iter().all(|&k| lo <= k && k <= hi), "n={n}");
        }
    }

    #[test]
    fn spec_validation() {
        assert!(TransitionSpec::new(vec![2, 3]).is_err());
        assert!(TransitionSpec::new(vec![2, 6]).is_err());
        assert!(TransitionSpec::new(vec![0, 2]).is_err());
        assert!(TransitionSpec::new(vec![]).is_err());
        assert!(TransitionSpec::new(vec![2, 4]).is_ok());
    }

    fn check_constructed(kappa: &[usize]) {
        let spec = TransitionSpec::new(kappa.to_vec()).unwrap();
        let c = construct_code(&spec).unwrap();
        let n = kappa.len();
        let total: usize = kappa.iter().sum();
        assert_eq!(c.transition_counts(), kappa, "{kappa:?}");
        assert_eq!(c.size(), total.min(1 << n), "{kappa:?}");
        let r = validate_code_properties(&c, Family::Envelope, 1, 2, n);
        for p in [PROP_BOUNDARY, PROP_UNIT_STEPS, PROP_PERIODIC] {
            assert!(r.get(p).unwrap().pass, "{kappa:?} {p}");
        }
        assert_eq!(c.codewords().len(), total + 1);
        if total < 1 << n {
            assert_eq!(c.codewords().len() - c.size(), 1);
            assert_eq!(c.codewords()[0], c.codewords()[total]);
        }
    }

    #[test]
    fn construct_examples() {
        check_constructed(&[4, 4, 4]);
        check_constructed(&[2, 2]);
        check_constructed(&[2, 2, 2, 2]);
        let c = construct_code(&TransitionSpec::new(vec![2, 2, 2, 2]).unwrap()).unwrap();
        let r = validate_code_properties(&c, Family::Envelope, 1, 2, 4);
        assert!(r.get(PROP_COUNT).unwrap().pass);
    }

    #[test]
    fn construct_all_specs_up_to_eight_positions() {
        for n in 1..=8usize {
            for base in (2..=(1 << n) + 2).step_by(2) {
                for extra in 0..=n {
                    if extra > 0 && n == 1 {
                        continue;
                    }
                    let mut k = vec![base; n - extra];
                    k.extend(vec![base + 2; extra]);
                    check_constructed(&k);
                    k.reverse();
                    check_constructed(&k);
                }
            }
        }
    }

    #[test]
    fn synthesis_examples() {
        let code = extract_code(&single_detector_construction(3)).unwrap();
        let q = synthesize_quantizer(&SynthesisInput {
            code,
            roots: vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0],
        })
        .unwrap();
        for (j, op) in q.ops().iter().enumerate() {
            let AnalogOp::Envelope(c) = op else { panic!() };
            assert!((c.biases()[0] - (j as f64 - 1.0)).abs() < 1e-12);
            assert!((q.thresholds().row(j)[0] - 2.0).abs() < 1e-12);
        }

        let code = AssociatedCode::new(vec![vec![1], vec![0], vec![1]], 2);
        let q = synthesize_quantizer(&SynthesisInput {
            code,
            roots: vec![-1.0, 1.0],
        })
        .unwrap();
        let AnalogOp::Envelope(c) = &q.ops()[0] else { panic!() };
        assert_eq!(c.biases(), &[0.0]);
        assert_eq!(q.thresholds().row(0), &[1.0]);

        let code = AssociatedCode::new(
            vec![vec![1], vec![0], vec![1], vec![0], vec![1]],
            2,
        );
        let q = synthesize_quantizer(&SynthesisInput {
            code,
            roots: vec![-3.0, -1.0, 5.0, 7.0],
        })
        .unwrap();
        let AnalogOp::Envelope(c) = &q.ops()[0] else { panic!() };
        assert_eq!(c.biases(), &[2.0, 4.0]);
        assert_eq!(q.thresholds().row(0), &[1.0]);
    }

    #[test]
    fn synthesis_rejects_asymmetric_roots() {
        let code = AssociatedCode::new(
            vec![vec![1], vec![0], vec![1], vec![0], vec![1]],
            2,
        );
        let err = synthesize_quantizer(&SynthesisInput {
            code,
            roots: vec![0.0, 1.0, 2.0, 4.0],
        });
        assert_eq!(err, Err(SynthesisError::SymmetryViolation(0)));
    }

    #[test]
    fn single_detector_construction_size() {
        for n in 2..=8 {
            let c = extract_code(&single_detector_construction(n)).unwrap();
            assert_eq!(c.size(), 2 * n);
        }
    }
}
