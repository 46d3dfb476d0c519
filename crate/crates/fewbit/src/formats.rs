//! JSON documents for quantizers, codes and comparators, and CSV writers.

use std::io::Write;

use fewbit_core::analog_ops::{AnalogOp, EnvelopeChain, Family, PolynomialOp};
use fewbit_core::code_construction::SynthesisInput;
use fewbit_core::hybrid_sim::{Comparator, Functional, VectorQuantizer};
use fewbit_core::scalar_quantizer::{AssociatedCode, Codeword, ScalarQuantizer, ThresholdMatrix};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Envelope,
    Poly,
}

impl From<FamilyName> for Family {
    fn from(f: FamilyName) -> Self {
        match f {
            FamilyName::Envelope => Family::Envelope,
            FamilyName::Poly => Family::Poly,
        }
    }
}

impl From<Family> for FamilyName {
    fn from(f: Family) -> Self {
        match f {
            Family::Envelope => FamilyName::Envelope,
            Family::Poly => FamilyName::Poly,
        }
    }
}

impl FamilyName {
    pub fn as_str(self) -> &'static str {
        match self {
            FamilyName::Envelope => "envelope",
            FamilyName::Poly => "poly",
        }
    }
}

/// Scalar quantizer. Envelope ops list chain biases innermost first;
/// polynomial ops list coefficients from the constant term up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerDoc {
    pub family: FamilyName,
    pub ops: Vec<Vec<f64>>,
    pub thresholds: Vec<Vec<f64>>,
}

impl QuantizerDoc {
    pub fn build(&self) -> Result<ScalarQuantizer, CliError> {
        let ops = self
            .ops
            .iter()
            .map(|v| -> Result<AnalogOp, CliError> {
                Ok(match self.family {
                    FamilyName::Envelope => EnvelopeChain::new(v.clone())?.into(),
                    FamilyName::Poly => PolynomialOp::new(v.clone())?.into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let t = ThresholdMatrix::new(self.thresholds.clone())?;
        Ok(ScalarQuantizer::new(ops, t)?)
    }

    pub fn from_quantizer(q: &ScalarQuantizer) -> Self {
        let ops = q
            .ops()
            .iter()
            .map(|op| match op {
                AnalogOp::Envelope(c) => c.biases().to_vec(),
                AnalogOp::Poly(p) => p.coeffs().to_vec(),
            })
            .collect();
        let t = q.thresholds();
        let thresholds = (0..q.n_q())
            .map(|j| {
                let mut row = vec![0.0; t.row(j).len()];
                for (k, &orig) in t.permutation(j).iter().enumerate() {
                    row[orig] = t.row(j)[k];
                }
                row
            })
            .collect();
        QuantizerDoc {
            family: q.family().into(),
            ops,
            thresholds,
        }
    }
}

fn check_digits(words: &[Codeword], levels: usize) -> Result<(), CliError> {
    let n = words.first().map_or(0, |w| w.len());
    if levels < 2 || words.is_empty() || n == 0 {
        return Err(CliError::invalid("code needs codewords and at least 2 levels"));
    }
    if words.iter().any(|w| w.len() != n || w.iter().any(|&d| d as usize >= levels)) {
        return Err(CliError::invalid("codewords must share a length and use digits below the level count"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeDoc {
    pub levels: usize,
    pub codewords: Vec<Codeword>,
}

impl CodeDoc {
    pub fn build(&self) -> Result<AssociatedCode, CliError> {
        check_digits(&self.codewords, self.levels)?;
        Ok(AssociatedCode::new(self.codewords.clone(), self.levels))
    }

    pub fn from_code(c: &AssociatedCode) -> Self {
        CodeDoc {
            levels: c.levels(),
            codewords: c.codewords().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisDoc {
    pub levels: usize,
    pub codewords: Vec<Codeword>,
    pub roots: Vec<f64>,
}

impl SynthesisDoc {
    pub fn build(&self) -> Result<SynthesisInput, CliError> {
        check_digits(&self.codewords, self.levels)?;
        Ok(SynthesisInput {
            code: AssociatedCode::new(self.codewords.clone(), self.levels),
            roots: self.roots.clone(),
        })
    }

    pub fn from_input(s: &SynthesisInput) -> Self {
        SynthesisDoc {
            levels: s.code.levels(),
            codewords: s.code.codewords().to_vec(),
            roots: s.roots.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparatorKind {
    Linear,
    Abs,
}

/// `w·y - offset` (linear) or `|w·y - offset|` (abs) against sorted thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparatorDoc {
    pub kind: ComparatorKind,
    pub w: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
    pub thresholds: Vec<f64>,
}

impl ComparatorDoc {
    pub fn build(&self) -> Comparator {
        let (w, offset) = (self.w.clone(), self.offset);
        let functional = match self.kind {
            ComparatorKind::Linear => Functional::Linear { w, offset },
            ComparatorKind::Abs => Functional::Abs { w, offset },
        };
        Comparator {
            functional,
            thresholds: self.thresholds.clone(),
        }
    }

    pub fn from_comparator(c: &Comparator) -> Self {
        let (kind, w, offset) = match &c.functional {
            Functional::Linear { w, offset } => (ComparatorKind::Linear, w.clone(), *offset),
            Functional::Abs { w, offset } => (ComparatorKind::Abs, w.clone(), *offset),
        };
        ComparatorDoc {
            kind,
            w,
            offset,
            thresholds: c.thresholds.clone(),
        }
    }
}

pub fn vector_quantizer(n_s: usize, comparators: &[ComparatorDoc]) -> Result<VectorQuantizer, CliError> {
    Ok(VectorQuantizer::new(n_s, comparators.iter().map(ComparatorDoc::build).collect())?)
}

/// CSV writer over any byte sink.
pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fewbit_core::scalar_quantizer::extract_code;

    #[test]
    fn quantizer_round_trip_keeps_threshold_order() {
        let text = r#"{"family":"poly","ops":[[0,2,1],[0,3,1]],"thresholds":[[3,0],[10,18]]}"#;
        let doc: QuantizerDoc = serde_json::from_str(text).unwrap();
        let q = doc.build().unwrap();
        let back = QuantizerDoc::from_quantizer(&q);
        assert_eq!(back, doc);
        let again: QuantizerDoc = serde_json::from_str(&serde_json::to_string(&back).unwrap()).unwrap();
        assert_eq!(extract_code(&again.build().unwrap()).unwrap().size(), 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"family":"poly","ops":[[0,1]],"thresholds":[[0]],"extra":1}"#;
        assert!(serde_json::from_str::<QuantizerDoc>(text).is_err());
        let text = r#"{"kind":"abs","w":[1,0],"thresholds":[1],"bias":2}"#;
        assert!(serde_json::from_str::<ComparatorDoc>(text).is_err());
    }

    #[test]
    fn synthesis_and_code_round_trip() {
        let doc = SynthesisDoc {
            levels: 2,
            codewords: vec![vec![1], vec![0], vec![1], vec![0], vec![1]],
            roots: vec![-3.0, -1.0, 5.0, 7.0],
        };
        let text = serde_json::to_string(&doc).unwrap();
        let input = serde_json::from_str::<SynthesisDoc>(&text).unwrap().build().unwrap();
        assert_eq!(SynthesisDoc::from_input(&input), doc);
        let code = CodeDoc::from_code(&input.code);
        assert_eq!(code.build().unwrap(), input.code);
        let bad = CodeDoc {
            levels: 2,
            codewords: vec![vec![0], vec![2]],
        };
        assert!(bad.build().is_err());
    }

    #[test]
    fn comparator_round_trip() {
        let doc = ComparatorDoc {
            kind: ComparatorKind::Abs,
            w: vec![1.0, -1.0],
            offset: 0.5,
            thresholds: vec![1.0, 2.0],
        };
        assert_eq!(ComparatorDoc::from_comparator(&doc.build()), doc);
    }
}
