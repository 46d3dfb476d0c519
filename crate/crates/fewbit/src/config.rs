//! Per-command JSON configs. Unknown keys are rejected.

use std::path::Path;

use fewbit_core::capacity_engine::{BaConfig, SearchConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::formats::{ComparatorDoc, FamilyName};

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text)
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    Ok(serde_json::from_str(text)?)
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetDoc {
    pub n_q: usize,
    pub ell: usize,
}

/// Overrides for the threshold search and the Blahut-Arimoto runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchDoc {
    pub grid_points: Option<usize>,
    pub input_step: Option<f64>,
    pub screen_inputs: Option<usize>,
    pub refine_top: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub bisect_iters: Option<usize>,
    pub lambda_hi: Option<f64>,
}

impl SearchDoc {
    pub fn build(&self) -> Result<SearchConfig, CliError> {
        let mut s = SearchConfig::default();
        let fine = &mut s.fine;
        if let Some(v) = self.tol {
            fine.tol = v;
        }
        if let Some(v) = self.max_iter {
            fine.max_iter = v;
        }
        if let Some(v) = self.bisect_iters {
            fine.bisect_iters = v;
        }
        if let Some(v) = self.lambda_hi {
            fine.lambda_hi = v;
        }
        let BaConfig {
            tol,
            max_iter,
            lambda_hi,
            bisect_iters,
        } = *fine;
        s.screen.tol = s.screen.tol.max(tol);
        s.screen.max_iter = s.screen.max_iter.min(max_iter);
        s.screen.lambda_hi = lambda_hi;
        s.screen.bisect_iters = s.screen.bisect_iters.min(bisect_iters);
        if let Some(v) = self.grid_points {
            s.grid_points = v;
        }
        if let Some(v) = self.input_step {
            s.input_step = v;
        }
        if let Some(v) = self.screen_inputs {
            s.screen_inputs = v;
        }
        if let Some(v) = self.refine_top {
            s.refine_top = v;
        }
        if !(tol > 0.0) || max_iter == 0 || !(lambda_hi > 0.0) {
            return Err(CliError::invalid("tol, max_iter and lambda_hi must be positive"));
        }
        if s.grid_points == 0 || !(s.input_step > 0.0) || s.screen_inputs == 0 || s.refine_top == 0 {
            return Err(CliError::invalid("search sizes and the input step must be positive"));
        }
        Ok(s)
    }
}

/// `capacity-sweep`: either explicit `(n_q, ℓ)` configurations, one curve
/// each, or an ADC budget `p_adc` (with `alpha`) reduced to its best curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub family: FamilyName,
    pub delta: usize,
    #[serde(default)]
    pub configs: Vec<BudgetDoc>,
    pub p_adc: Option<f64>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub h: f64,
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub search: SearchDoc,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridDoc {
    pub n_q: usize,
    #[serde(default = "two")]
    pub ell: usize,
    #[serde(default = "one")]
    pub zeta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CensusMethod {
    #[default]
    Grid,
    Separable,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDoc {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelGridDoc {
    pub resolution: usize,
    pub path: String,
}

/// `regions`: comparators given explicitly or by the sign-plus-magnitude
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsConfig {
    pub n_s: usize,
    #[serde(default)]
    pub comparators: Vec<ComparatorDoc>,
    pub hybrid: Option<HybridDoc>,
    #[serde(rename = "box")]
    pub bounds: Option<BoxDoc>,
    #[serde(default = "sixteen")]
    pub base_resolution: usize,
    #[serde(default)]
    pub method: CensusMethod,
    pub label_grid: Option<LabelGridDoc>,
}

fn sixteen() -> usize {
    16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrayConfig {
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeDoc {
    pub budget: usize,
}

fn samples() -> usize {
    15_000
}

/// `hybrid-sim`: Monte Carlo rates of the sign-plus-magnitude quantizer.
/// The constellation defaults to the construction's interval centres with
/// uniform probabilities and the gain to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridSimConfig {
    pub n_s: usize,
    pub n_q: usize,
    #[serde(default = "two")]
    pub ell: usize,
    #[serde(default = "one")]
    pub zeta: f64,
    pub snr_db: Vec<f64>,
    #[serde(default = "samples")]
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub gain: Option<Vec<Vec<f64>>>,
    pub constellation: Option<Vec<Vec<f64>>>,
    pub p_x: Option<Vec<f64>>,
    pub optimize: Option<OptimizeDoc>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_defaults_and_rejection() {
        let c: SweepConfig = parse(r#"{"family":"envelope","delta":2,"configs":[{"n_q":2,"ell":2}],"snr_db":[0]}"#).unwrap();
        assert_eq!(c.h, 1.0);
        assert!(!c.strict);
        assert_eq!(c.search.build().unwrap(), SearchConfig::default());
        assert!(parse::<SweepConfig>(r#"{"family":"envelope","delta":2,"snr_db":[0],"snr":1}"#).is_err());
        assert!(parse::<SweepConfig>(r#"{"family":"cubic","delta":2,"snr_db":[0]}"#).is_err());
    }

    #[test]
    fn search_overrides_cap_screening() {
        let s = SearchDoc {
            max_iter: Some(1),
            ..SearchDoc::default()
        }
        .build()
        .unwrap();
        assert_eq!(s.fine.max_iter, 1);
        assert_eq!(s.screen.max_iter, 1);
        assert!(SearchDoc {
            tol: Some(0.0),
            ..SearchDoc::default()
        }
        .build()
        .is_err());
    }

    #[test]
    fn regions_box_key() {
        let c: RegionsConfig = parse(r#"{"n_s":2,"hybrid":{"n_q":6},"box":{"lo":[-5,-5],"hi":[5,5]}}"#).unwrap();
        assert_eq!(c.bounds.unwrap().hi, vec![5.0, 5.0]);
        assert_eq!(c.hybrid.unwrap().zeta, 1.0);
        assert_eq!(c.method, CensusMethod::Grid);
    }
}
