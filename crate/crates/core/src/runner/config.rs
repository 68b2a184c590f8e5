//! Experiment configuration: JSON documents, flag overrides and defaults.
//!
//! Precedence is flag > file > default. Unknown keys are rejected and every
//! error names the offending field path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisitions::AcquisitionSpec;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::objectives::{ObjectiveSpec, ThresholdPolicy};
use crate::posterior::HyperBounds;
use crate::strategies::Algorithm;
use crate::theory::{BetaScheduleSpec, LowerBoundConstants, ManualBeta};

/// Default noiseless regularizer.
pub const NOISELESS_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationMode {
    /// Fraction of runs that sampled a good action by round t.
    FractionFound,
    /// Fraction of runs whose highest-posterior-mean point is good.
    BestEstimate,
    /// Cumulative standard and lenient regrets.
    RegretCurves,
}

/// Confidence-width schedule as written in a config. Omitted noise and
/// regularizer fields are taken from the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaConfig {
    Rkhs {
        norm_bound: f64,
        #[serde(default)]
        noise_std: Option<f64>,
        #[serde(default)]
        lambda: Option<f64>,
        delta: f64,
    },
    BayesianFinite {
        delta: f64,
    },
    Manual(ManualBeta),
}

impl Default for BetaConfig {
    fn default() -> Self {
        BetaConfig::Manual(ManualBeta::sqrt_log())
    }
}

impl BetaConfig {
    pub fn resolve(&self, noise_std: f64, lambda: f64) -> BetaScheduleSpec {
        match *self {
            BetaConfig::Rkhs {
                norm_bound,
                noise_std: s,
                lambda: l,
                delta,
            } => BetaScheduleSpec::Rkhs {
                norm_bound,
                noise_std: s.unwrap_or(noise_std),
                lambda: l.unwrap_or(lambda),
                delta,
            },
            BetaConfig::BayesianFinite { delta } => BetaScheduleSpec::BayesianFinite { delta, domain_size: None },
            BetaConfig::Manual(m) => BetaScheduleSpec::Manual(m),
        }
    }
}

/// Acquisition knobs shared by every algorithm of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionOptions {
    pub intersect_bounds: bool,
    pub gs_fantasies: usize,
    pub max_samples: usize,
    pub gs_grid_size: usize,
    pub sts_center: Option<Vec<f64>>,
    pub mes_grid_size: usize,
    pub candidate_limit: usize,
}

impl Default for AcquisitionOptions {
    fn default() -> Self {
        let s = AcquisitionSpec::new(crate::acquisitions::AcquisitionKind::Ucb, None).expect("defaults are valid");
        AcquisitionOptions {
            intersect_bounds: s.intersect_bounds,
            gs_fantasies: s.gs_fantasies,
            max_samples: s.max_samples,
            gs_grid_size: s.gs_grid_size,
            sts_center: s.sts_center,
            mes_grid_size: s.mes_grid_size,
            candidate_limit: s.candidate_limit,
        }
    }
}

impl AcquisitionOptions {
    pub fn spec_for(&self, algorithm: Algorithm, eta: Option<f64>) -> AcquisitionSpec {
        AcquisitionSpec {
            kind: algorithm.acquisition_kind(),
            eta,
            intersect_bounds: self.intersect_bounds,
            gs_fantasies: self.gs_fantasies,
            max_samples: self.max_samples,
            gs_grid_size: self.gs_grid_size,
            sts_center: self.sts_center.clone(),
            mes_grid_size: self.mes_grid_size,
            candidate_limit: self.candidate_limit,
        }
    }
}

/// Theory mode: bound reports and measured-vs-bound comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    pub norm_bound: f64,
    pub delta: f64,
    #[serde(default)]
    pub lower_bound: bool,
    #[serde(default)]
    pub constants: LowerBoundConstants,
    /// Largest N scanned for the bad-round counts; defaults to 100·T.
    #[serde(default)]
    pub n_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub threshold: Option<ThresholdPolicy>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub acquisition: AcquisitionOptions,
    #[serde(default)]
    pub beta: BetaConfig,
    /// Regularizer; `None` means σ² when noisy, [`NOISELESS_LAMBDA`] otherwise.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Observation noise std; overrides `objective.noise` when set.
    #[serde(default)]
    pub noise: Option<f64>,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_experiments")]
    pub experiments_per_trial: usize,
    #[serde(default = "default_initial")]
    pub initial_design_size: usize,
    /// `null` or 0 disables refitting.
    #[serde(default = "default_refit")]
    pub refit_every: Option<usize>,
    /// Fit and model standardized targets while refitting; off keeps raw
    /// values, so the scale bounds act in objective units.
    #[serde(default = "default_standardize")]
    pub standardize_targets: bool,
    #[serde(default)]
    pub hyper_bounds: HyperBounds,
    #[serde(default = "default_restarts")]
    pub fit_restarts: usize,
    /// Lenient-regret tolerance Δ; defaults to the threshold offset, else 0.
    #[serde(default)]
    pub gap: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_mode")]
    pub mode: EvaluationMode,
    /// Defaults to on for noiseless fraction-found runs.
    #[serde(default)]
    pub early_stop: Option<bool>,
    #[serde(default)]
    pub regret_includes_initial: bool,
    #[serde(default)]
    pub theory: Option<TheoryConfig>,
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::GpUcb]
}
fn default_kernel() -> KernelSpec {
    KernelSpec::squared_exponential(0.2, 1.0)
}
fn default_horizon() -> usize {
    100
}
fn default_trials() -> usize {
    25
}
fn default_experiments() -> usize {
    10
}
fn default_initial() -> usize {
    3
}
fn default_refit() -> Option<usize> {
    Some(3)
}
fn default_standardize() -> bool {
    true
}
fn default_restarts() -> usize {
    5
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_mode() -> EvaluationMode {
    EvaluationMode::FractionFound
}

/// Flag-level overrides; `None` leaves the file or default value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub objective: Option<String>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub noise: Option<f64>,
    pub xi: Option<f64>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Config with every default and the named objective.
    pub fn for_objective(name: &str) -> Self {
        let doc = serde_json::json!({ "objective": { "name": name } });
        serde_json::from_value(doc).expect("defaults deserialize")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_json_with(text, &Overrides::default())
    }

    /// Parses a document (possibly empty) and applies overrides. An empty
    /// document needs `--objective`.
    pub fn from_json_with(text: &str, overrides: &Overrides) -> Result<Self> {
        let mut value: serde_json::Value = if text.trim().is_empty() {
            serde_json::json!({})
        } else {
            serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?
        };
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::config("<document>", "top level must be an object"))?;
        if let Some(name) = &overrides.objective {
            match obj.get_mut("objective").and_then(|o| o.as_object_mut()) {
                Some(o) => {
                    o.insert("name".into(), serde_json::Value::String(name.clone()));
                }
                None => {
                    obj.insert("objective".into(), serde_json::json!({ "name": name }));
                }
            }
        }
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<document>".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_with(&text, overrides)
    }

    fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(a) = &o.algorithms {
            self.algorithms = a.clone();
        }
        if let Some(t) = o.horizon {
            self.horizon = t;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.trials {
            self.trials = n;
        }
        if let Some(s) = o.noise {
            self.noise = Some(s);
        }
        let picked = [o.xi.is_some(), o.eta.is_some(), o.delta.is_some()].iter().filter(|&&b| b).count();
        if picked > 1 {
            return Err(Error::config("threshold", "--xi, --eta and --delta are mutually exclusive"));
        }
        if let Some(xi) = o.xi {
            self.threshold = Some(ThresholdPolicy::Quantile { xi, samples: 10_000 });
        }
        if let Some(value) = o.eta {
            self.threshold = Some(ThresholdPolicy::Explicit { value });
        }
        if let Some(delta) = o.delta {
            self.threshold = Some(ThresholdPolicy::OffsetFromMax { delta });
        }
        if let Some(out) = &o.output {
            self.output = out.clone();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "at least one algorithm is required"));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(Error::config(format!("algorithms[{i}]"), format!("{} listed twice", a.name())));
            }
            if a.needs_threshold() && self.threshold.is_none() {
                return Err(Error::config("threshold", format!("{} needs a threshold policy", a.name())));
            }
        }
        if let Some(t) = &self.threshold {
            t.validate()?;
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be positive"));
        }
        if self.experiments_per_trial == 0 {
            return Err(Error::config("experiments_per_trial", "must be positive"));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::config("lambda", format!("must be positive, got {l}")));
            }
        }
        let noise = self.noise_std();
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::config("noise", format!("must be nonnegative, got {noise}")));
        }
        if let Some(g) = self.gap {
            if !(g >= 0.0) {
                return Err(Error::config("gap", format!("must be nonnegative, got {g}")));
            }
        }
        self.kernel.validate().map_err(|e| Error::config("kernel", e.to_string()))?;
        self.hyper_bounds.validate()?;
        self.beta.resolve(noise, self.lambda_value()).validate()?;
        if let Some(th) = &self.theory {
            if !(th.norm_bound >= 0.0) {
                return Err(Error::config("theory.norm_bound", "must be nonnegative"));
            }
            if !(th.delta > 0.0 && th.delta < 1.0) {
                return Err(Error::config("theory.delta", "must lie in (0,1)"));
            }
        }
        for a in &self.algorithms {
            let spec = self.acquisition.spec_for(*a, Some(0.0));
            spec.validate().map_err(|e| Error::config("acquisition", e.to_string()))?;
        }
        Ok(())
    }

    pub fn noise_std(&self) -> f64 {
        self.noise.unwrap_or(self.objective.noise)
    }

    pub fn lambda_value(&self) -> f64 {
        self.lambda.unwrap_or_else(|| {
            let s = self.noise_std();
            if s > 0.0 {
                s * s
            } else {
                NOISELESS_LAMBDA
            }
        })
    }

    pub fn gap_value(&self) -> f64 {
        match (self.gap, self.threshold) {
            (Some(g), _) => g,
            (None, Some(ThresholdPolicy::OffsetFromMax { delta })) => delta,
            _ => 0.0,
        }
    }

    pub fn early_stop_value(&self) -> bool {
        self.early_stop
            .unwrap_or(self.mode == EvaluationMode::FractionFound && self.noise_std() == 0.0)
    }

    pub fn refit_value(&self) -> Option<usize> {
        self.refit_every.filter(|&k| k > 0)
    }

    /// Hex FNV-1a digest of the canonical JSON form, output path excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}
