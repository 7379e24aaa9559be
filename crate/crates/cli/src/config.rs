//! Experiment configuration files.
//!
//! A config is a JSON object; unknown keys are rejected at every level. A
//! manifest written by a previous run is also accepted: its `config` member
//! is used.

use std::path::{Path, PathBuf};

use linhop_core::limit_process::{LimitParams, LimitSamplerConfig};
use linhop_core::quadrature::QuadratureTolerance;
use linhop_core::randomness::{EntryLaw, InitialLaw};
use linhop_core::word_combinatorics::EnumerationBudget;
use linhop_core::ModelParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelParams,
    pub replicas: usize,
    /// Tracked 1-based coordinates.
    #[serde(default = "default_coords")]
    pub coords: Vec<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub compare_cov: CompareCovConfig,
    #[serde(default)]
    pub moments: MomentsConfig,
    #[serde(default)]
    pub lemma_scan: LemmaScanConfig,
    #[serde(default)]
    pub chaos: ChaosConfig,
    #[serde(default)]
    pub longtime: LongtimeConfig,
}

fn default_coords() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative truncation target of the matrix-exponential action.
    pub action: f64,
    /// Omitted variance allowed in the limit series, relative to `phi0`.
    pub series_variance: f64,
    pub quadrature_abs: f64,
    pub quadrature_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { action: 1e-12, series_variance: 1e-12, quadrature_abs: 1e-10, quadrature_rel: 1e-10 }
    }
}

impl Tolerances {
    pub fn quadrature(&self) -> QuadratureTolerance {
        QuadratureTolerance { abs: self.quadrature_abs, rel: self.quadrature_rel, ..QuadratureTolerance::default() }
    }

    pub fn limit_sampler(&self, p: &LimitParams) -> LimitSamplerConfig {
        LimitSamplerConfig {
            var_tol: self.series_variance * p.phi0.max(f64::MIN_POSITIVE),
            quadrature: self.quadrature(),
        }
    }
}

/// Where `compare-cov` takes its samples from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSource {
    #[default]
    Finite,
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareCovConfig {
    pub source: PathSource,
    pub coord: usize,
}

impl Default for CompareCovConfig {
    fn default() -> Self {
        Self { source: PathSource::Finite, coord: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordShape {
    pub l: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsConfig {
    pub cases: Vec<WordShape>,
    pub sizes: Vec<usize>,
    /// Entry laws to tabulate; empty means the model's law.
    pub entry_laws: Vec<EntryLaw>,
    /// Laws of the i.i.d. vector `Y`.
    pub y_laws: Vec<InitialLaw>,
    pub budget: EnumerationBudget,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            cases: [(1, 2), (2, 2), (3, 2), (1, 4)].iter().map(|&(l, n)| WordShape { l, n }).collect(),
            sizes: vec![4, 8, 16],
            entry_laws: Vec::new(),
            y_laws: vec![InitialLaw::PointMass { c: 1.0 }],
            budget: EnumerationBudget::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaScanConfig {
    /// Shapes to scan; empty means every odd `n` and every `l` with `n l <= max_letters`.
    pub cases: Vec<WordShape>,
    pub budget: EnumerationBudget,
}

impl LemmaScanConfig {
    pub fn resolved_cases(&self) -> Vec<WordShape> {
        if !self.cases.is_empty() {
            return self.cases.clone();
        }
        let max = self.budget.max_letters;
        (1..=max)
            .step_by(2)
            .flat_map(|n| (1..=max / n).map(move |l| WordShape { l, n }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChaosConfig {
    pub pairs: Vec<[usize; 2]>,
    /// Observation time; defaults to the last grid time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    /// Finite-N allowance added to `3 SE` on `|corr|`.
    pub budget: f64,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self { pairs: vec![[1, 2]], time: None, budget: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LongtimeConfig {
    pub window: [f64; 2],
    /// Allowed relative deviation of the Monte Carlo slope from `2 (sigma - lambda)`.
    pub relative_tolerance: f64,
}

impl Default for LongtimeConfig {
    fn default() -> Self {
        Self { window: [10.0, 20.0], relative_tolerance: 0.25 }
    }
}

impl ExperimentConfig {
    /// Reads a config or a manifest from disk.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        let value = match value {
            serde_json::Value::Object(mut map) if map.contains_key("command") && map.contains_key("config") => {
                map.remove("config").expect("checked above")
            }
            other => other,
        };
        let config: Self =
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        if self.replicas < 3 {
            return Err(CliError::Config(format!("replicas must be at least 3, got {}", self.replicas)));
        }
        if self.coords.is_empty() {
            return Err(CliError::Config("coords must not be empty".into()));
        }
        if let Some(&c) = self.coords.iter().find(|&&c| c == 0 || c > self.model.n) {
            return Err(CliError::Config(format!("coordinate {c} outside 1..={}", self.model.n)));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.action", t.action),
            ("tolerances.series_variance", t.series_variance),
            ("tolerances.quadrature_abs", t.quadrature_abs),
            ("tolerances.quadrature_rel", t.quadrature_rel),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CliError::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    pub fn limit_params(&self) -> LimitParams {
        LimitParams::from_model(&self.model)
    }

    pub fn entry_laws(&self) -> Vec<EntryLaw> {
        if self.moments.entry_laws.is_empty() {
            vec![self.model.entry_law]
        } else {
            self.moments.entry_laws.clone()
        }
    }
}
