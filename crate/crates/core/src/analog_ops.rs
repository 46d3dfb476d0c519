//! Analog front-end operators: chains of envelope detectors and polynomials.
//!
//! An envelope chain with biases `a_1..a_s` computes
//! `A_s(y) = |A_{s-1}(y) - a_s|` with `A_1(y) = |y - a_1|`.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

/// Absolute tolerance used for root merging and tangency detection.
pub const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpError {
    #[error("operator needs at least one coefficient")]
    Empty,
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("leading polynomial coefficient is zero")]
    ZeroLeading,
    #[error("vector length {0} is not a power of two")]
    LengthNotPowerOfTwo(usize),
    #[error("root isolation did not converge")]
    IllConditioned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub value: f64,
    pub multiplicity: u32,
}

impl Root {
    /// Even multiplicity: the function touches the level without crossing it.
    pub fn is_tangent(&self) -> bool {
        self.multiplicity % 2 == 0
    }
}

/// Sorted real roots with multiplicities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RootList {
    roots: Vec<Root>,
}

impl RootList {
    fn from_unsorted(mut roots: Vec<Root>) -> Self {
        roots.sort_by(|a, b| a.value.total_cmp(&b.value));
        let mut merged: Vec<Root> = Vec::with_capacity(roots.len());
        for r in roots {
            match merged.last_mut() {
                Some(last) if (r.value - last.value).abs() <= TOL => {
                    last.multiplicity += r.multiplicity
                }
                _ => merged.push(r),
            }
        }
        RootList { roots: merged }
    }

    pub fn as_slice(&self) -> &[Root] {
        &self.roots
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.roots.iter().map(|r| r.value).collect()
    }

    /// Roots where the function changes sign.
    pub fn crossings(&self) -> Vec<f64> {
        self.roots
            .iter()
            .filter(|r| !r.is_tangent())
            .map(|r| r.value)
            .collect()
    }

    pub fn total_multiplicity(&self) -> u32 {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeChain {
    biases: Vec<f64>,
}

impl EnvelopeChain {
    pub fn new(biases: Vec<f64>) -> Result<Self, OpError> {
        if biases.is_empty() {
            return Err(OpError::Empty);
        }
        if biases.iter().any(|a| !a.is_finite()) {
            return Err(OpError::NonFinite);
        }
        Ok(EnvelopeChain { biases })
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Number of concatenated detectors.
    pub fn depth(&self) -> usize {
        self.biases.len()
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.biases.iter().fold(y, |v, a| (v - a).abs())
    }

    /// Solutions of `A_s(y) = t` by unfolding each detector backwards.
    pub fn roots(&self, t: f64) -> RootList {
        // (value, multiplicity) of A_{s} at the current level
        let mut level: Vec<(f64, u32)> = vec![(t, 1)];
        for (s, &a) in self.biases.iter().enumerate().rev() {
            let mut next = Vec::with_capacity(level.len() * 2);
            for &(v, m) in &level {
                if v < -TOL {
                    continue;
                }
                if v <= TOL {
                    next.push((a, 2 * m));
                } else {
                    next.push((a + v, m));
                    next.push((a - v, m));
                }
            }
            if s > 0 {
                // values of A_{s-1} must be non-negative
                next.retain(|&(v, _)| v >= -TOL);
                for e in next.iter_mut() {
                    if e.0 < 0.0 {
                        e.0 = 0.0;
                    }
                }
            }
            level = next;
        }
        RootList::from_unsorted(
            level
                .into_iter()
                .map(|(value, multiplicity)| Root {
                    value,
                    multiplicity,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialOp {
    coeffs: Vec<f64>,
}

impl PolynomialOp {
    /// Coefficients in increasing order of power, `a_0..a_d`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self, OpError> {
        if coeffs.len() < 2 {
            return Err(OpError::Empty);
        }
        if coeffs.iter().any(|a| !a.is_finite()) {
            return Err(OpError::NonFinite);
        }
        if *coeffs.last().unwrap() == 0.0 {
            return Err(OpError::ZeroLeading);
        }
        Ok(PolynomialOp { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, y: f64) -> f64 {
        horner(&self.coeffs, y)
    }

    pub fn roots(&self, t: f64) -> Result<RootList, OpError> {
        let mut p = self.coeffs.clone();
        p[0] -= t;
        Ok(RootList::from_unsorted(real_roots(&p)?))
    }
}

fn horner(p: &[f64], y: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &a| acc * y + a)
}

fn magnitude(p: &[f64], y: f64) -> f64 {
    let ay = y.abs();
    p.iter().rev().fold(0.0, |acc, &a| acc * ay + a.abs())
}

// Roots of p (leading coefficient non-zero) via the critical points of p',
// which split the line into monotone pieces.
fn real_roots(p: &[f64]) -> Result<Vec<Root>, OpError> {
    let d = p.len() - 1;
    if d == 0 {
        return Ok(Vec::new());
    }
    if d == 1 {
        return Ok(vec![Root {
            value: -p[0] / p[1],
            multiplicity: 1,
        }]);
    }
    let dp: Vec<f64> = (1..=d).map(|i| p[i] * i as f64).collect();
    let crit = RootList::from_unsorted(real_roots(&dp)?).roots;

    let lead = p[d];
    let bound = 1.0 + p[..d].iter().map(|a| (a / lead).abs()).fold(0.0, f64::max);

    let mut out = Vec::new();
    let mut knots: Vec<(f64, bool)> = Vec::with_capacity(crit.len() + 2);
    knots.push((-bound - 1.0, false));
    for c in &crit {
        let v = horner(p, c.value);
        let is_root = v.abs() <= 1e-12 * magnitude(p, c.value).max(1.0);
        if is_root {
            out.push(Root {
                value: c.value,
                multiplicity: c.multiplicity + 1,
            });
        }
        knots.push((c.value, is_root));
    }
    knots.push((bound + 1.0, false));

    for w in knots.windows(2) {
        let ((a, ra), (b, rb)) = (w[0], w[1]);
        if ra || rb || b <= a {
            continue;
        }
        let (fa, fb) = (horner(p, a), horner(p, b));
        if fa == 0.0 || fb == 0.0 || (fa > 0.0) == (fb > 0.0) {
            continue;
        }
        out.push(Root {
            value: bisect(p, a, b, fa)?,
            multiplicity: 1,
        });
    }
    Ok(out)
}

fn bisect(p: &[f64], mut lo: f64, mut hi: f64, flo: f64) -> Result<f64, OpError> {
    let neg = flo < 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = horner(p, mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo <= TOL {
        Ok(0.5 * (lo + hi))
    } else {
        Err(OpError::IllConditioned)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Envelope,
    Poly,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalogOp {
    Envelope(EnvelopeChain),
    Poly(PolynomialOp),
}

impl AnalogOp {
    pub fn family(&self) -> Family {
        match self {
            AnalogOp::Envelope(_) => Family::Envelope,
            AnalogOp::Poly(_) => Family::Poly,
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            AnalogOp::Envelope(c) => c.eval(y),
            AnalogOp::Poly(p) => p.eval(y),
        }
    }

    pub fn roots(&self, t: f64) -> Result<RootList, OpError> {
        match self {
            AnalogOp::Envelope(c) => Ok(c.roots(t)),
            AnalogOp::Poly(p) => p.roots(t),
        }
    }

    /// Chain depth or polynomial degree.
    pub fn order(&self) -> usize {
        match self {
            AnalogOp::Envelope(c) => c.depth(),
            AnalogOp::Poly(p) => p.degree(),
        }
    }
}

impl From<EnvelopeChain> for AnalogOp {
    fn from(c: EnvelopeChain) -> Self {
        AnalogOp::Envelope(c)
    }
}

impl From<PolynomialOp> for AnalogOp {
    fn from(p: PolynomialOp) -> Self {
        AnalogOp::Poly(p)
    }
}

pub fn eval_envelope(chain: &EnvelopeChain, y: f64) -> f64 {
    chain.eval(y)
}

pub fn eval_poly(op: &PolynomialOp, y: f64) -> f64 {
    op.eval(y)
}

pub fn roots_envelope_minus_threshold(chain: &EnvelopeChain, t: f64) -> RootList {
    chain.roots(t)
}

pub fn roots_poly_minus_threshold(op: &PolynomialOp, t: f64) -> Result<RootList, OpError> {
    op.roots(t)
}

/// Sign test `0 < t_1 + sum_{i>=2} ±a_i` over every sign pattern.
///
/// This is the bias condition in its literal form. It does not by itself
/// guarantee `2^s` distinct level crossings; use [`has_full_level_sets`] for
/// that.
pub fn is_nondegenerate(chain: &EnvelopeChain, thresholds: &[f64]) -> bool {
    let Some(&t1) = thresholds.first() else {
        return false;
    };
    // the worst sign pattern subtracts every |a_i|
    let worst = t1 - chain.biases()[1..].iter().map(|a| a.abs()).sum::<f64>();
    worst > 0.0
}

/// True when every `A_s - t_k` has exactly `2^s` distinct sign-crossing roots.
pub fn has_full_level_sets(chain: &EnvelopeChain, thresholds: &[f64]) -> bool {
    let full = 1usize << chain.depth();
    thresholds.iter().all(|&t| {
        let r = chain.roots(t);
        r.len() == full && r.as_slice().iter().all(|x| x.multiplicity == 1)
    })
}

/// Recursive mirror symmetry of a vector whose length is a power of two.
pub fn is_fully_symmetric(v: &[f64]) -> Result<bool, OpError> {
    if !v.len().is_power_of_two() {
        return Err(OpError::LengthNotPowerOfTwo(v.len()));
    }
    Ok(fully_symmetric(v))
}

fn fully_symmetric(v: &[f64]) -> bool {
    let n = v.len();
    if n <= 2 {
        return true;
    }
    let c = v[0] + v[n - 1];
    if (0..n / 2).any(|i| (v[i] + v[n - 1 - i] - c).abs() > TOL) {
        return false;
    }
    fully_symmetric(&v[..n / 2]) && fully_symmetric(&v[n / 2..])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(a: &[f64]) -> EnvelopeChain {
        EnvelopeChain::new(a.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9)
    }

    #[test]
    fn envelope_eval_examples() {
        assert_eq!(eval_envelope(&chain(&[2.0, 4.0]), 7.0), 1.0);
        assert_eq!(eval_envelope(&chain(&[0.0]), -3.0), 3.0);
        // ||y| - 4| written with the inner bias first
        assert_eq!(eval_envelope(&chain(&[0.0, 4.0]), -5.0), 1.0);
    }

    #[test]
    fn poly_eval_examples() {
        let p = |c: &[f64]| PolynomialOp::new(c.to_vec()).unwrap();
        assert_eq!(eval_poly(&p(&[0.0, 2.0, 1.0]), 1.0), 3.0);
        assert_eq!(eval_poly(&p(&[0.0, 0.0, 1.0]), 0.0), 0.0);
        assert_eq!(eval_poly(&p(&[0.0, 3.0, 1.0]), 2.0), 10.0);
    }

    #[test]
    fn envelope_roots_examples() {
        let r = chain(&[2.0, 4.0]).roots(1.0);
        assert!(close(&r.values(), &[-3.0, -1.0, 5.0, 7.0]));
        let r = chain(&[0.0, 4.0]).roots(2.0);
        assert!(close(&r.values(), &[-6.0, -2.0, 2.0, 6.0]));
        assert!(chain(&[0.0]).roots(-1.0).is_empty());
    }

    #[test]
    fn envelope_tangent_roots() {
        let r = chain(&[2.0, 4.0]).roots(0.0);
        assert!(close(&r.values(), &[-2.0, 6.0]));
        assert!(r.as_slice().iter().all(|x| x.is_tangent()));
        assert!(r.crossings().is_empty());

        let r = chain(&[0.0, 1.0]).roots(1.0);
        assert!(close(&r.values(), &[-2.0, 0.0, 2.0]));
        assert_eq!(r.as_slice()[1].multiplicity, 2);
    }

    #[test]
    fn poly_roots_examples() {
        let p = |c: &[f64]| PolynomialOp::new(c.to_vec()).unwrap();
        assert!(close(&p(&[0.0, 2.0, 1.0]).roots(3.0).unwrap().values(), &[-3.0, 1.0]));
        assert!(close(&p(&[0.0, 3.0, 1.0]).roots(18.0).unwrap().values(), &[-6.0, 3.0]));
        let r = p(&[0.0, 0.0, 1.0]).roots(0.0).unwrap();
        assert_eq!(r.as_slice(), &[Root { value: 0.0, multiplicity: 2 }]);
        let r = p(&[0.0, 0.0, 0.0, 1.0]).roots(0.0).unwrap();
        assert_eq!(r.as_slice(), &[Root { value: 0.0, multiplicity: 3 }]);
        assert!(p(&[1.0, 0.0, 1.0]).roots(0.0).unwrap().is_empty());
    }

    #[test]
    fn poly_rejects_bad_coeffs() {
        assert_eq!(PolynomialOp::new(vec![1.0, 0.0]), Err(OpError::ZeroLeading));
        assert_eq!(PolynomialOp::new(vec![1.0]), Err(OpError::Empty));
        assert_eq!(EnvelopeChain::new(vec![]), Err(OpError::Empty));
    }

    #[test]
    fn nondegeneracy_examples() {
        assert!(is_nondegenerate(&chain(&[7.0, 0.5]), &[1.0]));
        assert!(!is_nondegenerate(&chain(&[7.0, 3.0]), &[1.0]));
        assert!(is_nondegenerate(&chain(&[0.0, 2.0, 0.5]), &[3.0]));
    }

    #[test]
    fn full_level_sets() {
        assert!(has_full_level_sets(&chain(&[2.0, 4.0]), &[1.0]));
        assert!(!has_full_level_sets(&chain(&[2.0, 0.5]), &[1.0]));
        assert!(has_full_level_sets(&chain(&[0.0, 6.0, 2.0]), &[1.0, 1.5]));
    }

    #[test]
    fn symmetry_examples() {
        assert_eq!(
            is_fully_symmetric(&[-7.0, -6.0, -5.0, -4.0, 4.0, 5.0, 6.0, 7.0]),
            Ok(true)
        );
        assert_eq!(is_fully_symmetric(&[-3.0, -1.0, 5.0, 7.0]), Ok(true));
        assert_eq!(is_fully_symmetric(&[0.0, 1.0, 2.0, 4.0]), Ok(false));
        assert_eq!(is_fully_symmetric(&[0.0, 1.0, 2.0]), Err(OpError::LengthNotPowerOfTwo(3)));
        // symmetric overall, halves not
        assert_eq!(
            is_fully_symmetric(&[0.0, 1.0, 3.0, 5.0, 5.0, 7.0, 9.0, 10.0]),
            Ok(false)
        );
    }
}
