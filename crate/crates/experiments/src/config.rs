//! Experiment configuration files.
//!
//! A config names one experiment and overrides any of the grid parameters;
//! everything left out falls back to the desk-scale defaults of that
//! experiment. TOML and JSON are both accepted.

use std::path::{Path, PathBuf};

use ias_core::{Correction, DecisionConfig, Density, InterventionCount};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    OracleLowdim,
    OracleHighdim,
    FiniteSample,
    MaxMi,
    Alpha0Sweep,
    WeakInterventions,
    CorrectionAblation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::OracleLowdim => "oracle_lowdim",
            ExperimentKind::OracleHighdim => "oracle_highdim",
            ExperimentKind::FiniteSample => "finite_sample",
            ExperimentKind::MaxMi => "max_mi",
            ExperimentKind::Alpha0Sweep => "alpha0_sweep",
            ExperimentKind::WeakInterventions => "weak_interventions",
            ExperimentKind::CorrectionAblation => "correction_ablation",
        }
    }

    pub fn is_finite_sample(self) -> bool {
        matches!(
            self,
            ExperimentKind::FiniteSample
                | ExperimentKind::Alpha0Sweep
                | ExperimentKind::WeakInterventions
                | ExperimentKind::CorrectionAblation
        )
    }
}

/// Config as written by the user. `None` means "use the experiment default".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    /// Number of predictors; one grid axis.
    pub d: Option<Vec<usize>>,
    pub densities: Option<Vec<Density>>,
    /// Intervention counts for the oracle grids. Defaults to `1..=d` (low-dim) or `1..=d/10` (high-dim).
    pub n_interventions: Option<Vec<usize>>,
    /// Intervention count law for the finite-sample SCMs.
    pub interventions: Option<InterventionCount>,
    /// Graphs per oracle cell.
    pub graphs: Option<usize>,
    /// Search size caps for the high-dimensional oracle and large-d finite-sample runs.
    pub m: Option<Vec<usize>>,
    /// Sample sizes.
    pub n: Option<Vec<usize>>,
    pub scms: Option<usize>,
    pub datasets: Option<usize>,
    pub strength: Option<f64>,
    /// Strength used next to `strength` by the weak-intervention study.
    pub weak_strength: Option<f64>,
    pub decision: Option<DecisionConfig>,
    pub alpha0_values: Option<Vec<f64>>,
    pub corrections: Option<Vec<Correction>>,
    /// Largest Markov boundary estimate handed to ICP when `d` is large.
    pub screen_size: Option<usize>,
    /// Enumeration budget per graph.
    pub budget: Option<u64>,
    /// Draws for the max-count simulation.
    pub batches: Option<usize>,
    pub patience: Option<usize>,
}

/// Config with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub d: Vec<usize>,
    pub densities: Vec<Density>,
    pub n_interventions: Option<Vec<usize>>,
    pub interventions: Option<InterventionCount>,
    pub graphs: usize,
    pub m: Option<Vec<usize>>,
    pub n: Vec<usize>,
    pub scms: usize,
    pub datasets: usize,
    pub strength: f64,
    pub weak_strength: f64,
    pub decision: DecisionConfig,
    pub alpha0_values: Vec<f64>,
    pub corrections: Vec<Correction>,
    pub screen_size: usize,
    pub budget: Option<u64>,
    pub batches: usize,
    pub patience: Option<usize>,
}

/// Below this many predictors the finite-sample search covers all set sizes.
pub const FULL_SEARCH_MAX_D: usize = 20;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }

    pub fn for_experiment(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment: Some(kind),
            ..Default::default()
        }
    }

    /// Fills in defaults for `kind`, which must agree with the file's `experiment` if present.
    pub fn resolve(&self, kind: Option<ExperimentKind>) -> Result<Resolved, ConfigError> {
        let experiment = match (self.experiment, kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(ConfigError::Invalid(format!(
                    "config is for {} but {} was requested",
                    a.name(),
                    b.name()
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(ConfigError::Invalid("no experiment given".into())),
        };
        use ExperimentKind::*;
        let d = self.d.clone().unwrap_or_else(|| match experiment {
            OracleLowdim => (4..=20).step_by(2).collect(),
            OracleHighdim => vec![100],
            _ => vec![6],
        });
        let densities = self.densities.clone().unwrap_or_else(|| match experiment {
            OracleLowdim => vec![Density::Sparse, Density::Dense],
            MaxMi => vec![Density::Uniform { lo: 0.0, hi: 1.0 }],
            _ => vec![Density::Sparse],
        });
        let n = self.n.clone().unwrap_or_else(|| match experiment {
            Alpha0Sweep => vec![100, 1_000, 10_000],
            _ => vec![100, 1_000, 10_000, 100_000],
        });
        let r = Resolved {
            experiment,
            seed: self.seed.unwrap_or(0),
            output: self.output.clone(),
            d,
            densities,
            n_interventions: self.n_interventions.clone(),
            interventions: self.interventions,
            graphs: self.graphs.unwrap_or(match experiment {
                OracleHighdim => 1_000,
                _ => 5_000,
            }),
            m: self.m.clone(),
            n,
            scms: self.scms.unwrap_or(20),
            datasets: self.datasets.unwrap_or(20),
            strength: self.strength.unwrap_or(1.0),
            weak_strength: self.weak_strength.unwrap_or(0.5),
            decision: self.decision.clone().unwrap_or_default(),
            alpha0_values: self.alpha0_values.clone().unwrap_or_else(|| vec![0.05, 1e-6, 1e-12]),
            corrections: self
                .corrections
                .clone()
                .unwrap_or_else(|| vec![Correction::Heuristic3Pow, Correction::Full2d]),
            screen_size: self.screen_size.unwrap_or(10),
            budget: self.budget,
            batches: self.batches.unwrap_or(10_000),
            patience: self.patience,
        };
        r.validate()?;
        Ok(r)
    }
}

impl Resolved {
    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.d.is_empty() || self.d.contains(&0) {
            return bad("d must be a non-empty list of positive integers".into());
        }
        if self.densities.is_empty() {
            return bad("densities must not be empty".into());
        }
        for (name, v) in [
            ("graphs", self.graphs),
            ("scms", self.scms),
            ("datasets", self.datasets),
            ("batches", self.batches),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.n.is_empty() || self.n.iter().any(|&n| n < 10) {
            return bad("n must be a non-empty list of sample sizes of at least 10".into());
        }
        if let Some(ks) = &self.n_interventions {
            if ks.is_empty() || ks.contains(&0) {
                return bad("n_interventions must be a non-empty list of positive counts".into());
            }
        }
        if let Some(m) = &self.m {
            if m.is_empty() || m.contains(&0) {
                return bad("m must be a non-empty list of positive sizes".into());
            }
        }
        if !(self.strength.is_finite() && self.weak_strength.is_finite()) {
            return bad("intervention strengths must be finite".into());
        }
        if self.alpha0_values.is_empty() || self.corrections.is_empty() {
            return bad("alpha0_values and corrections must not be empty".into());
        }
        for &d in &self.d {
            let mut decision = self.decision.clone();
            decision.m = decision.m.map(|m| m.min(d));
            decision
                .validate(d)
                .map_err(|e| ConfigError::Invalid(format!("decision config at d = {d}: {e}")))?;
            for &a0 in &self.alpha0_values {
                if !(0.0..=decision.alpha).contains(&a0) {
                    return bad(format!("alpha0 = {a0} must lie in [0, alpha]"));
                }
            }
        }
        Ok(())
    }

    /// Intervention counts of an oracle grid at `d`.
    pub fn intervention_grid(&self, d: usize) -> Vec<usize> {
        let cap = match self.experiment {
            ExperimentKind::OracleHighdim => (d / 10).max(1),
            _ => d,
        };
        match &self.n_interventions {
            Some(ks) => ks.iter().copied().filter(|&k| k <= d).collect(),
            None => (1..=cap).collect(),
        }
    }

    /// Intervention law of the finite-sample SCMs at `d`.
    pub fn intervention_law(&self, d: usize) -> InterventionCount {
        self.interventions.unwrap_or(if d <= FULL_SEARCH_MAX_D {
            InterventionCount::Fixed(1)
        } else {
            InterventionCount::Uniform { lo: 1, hi: (d / 10).max(1) }
        })
    }

    /// Search cap for the finite-sample estimator at `d`; `None` searches every size.
    pub fn search_cap(&self, d: usize) -> Option<usize> {
        if let Some(m) = self.decision.m {
            return Some(m.min(d));
        }
        match &self.m {
            Some(ms) => Some(ms[0].min(d)),
            None if d > FULL_SEARCH_MAX_D => Some(1),
            None => None,
        }
    }

    /// Size caps for the high-dimensional oracle grid.
    pub fn oracle_caps(&self, d: usize) -> Vec<usize> {
        self.m
            .clone()
            .unwrap_or_else(|| vec![1])
            .into_iter()
            .map(|m| m.min(d))
            .collect()
    }
}
