//! Trial orchestration: objective and threshold setup, seeded episodes,
//! optional parallelism, and deterministic output files.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{bound_comparison, BoundCheck};
use crate::objectives::{make_objective, resolve_threshold, Objective};
use crate::strategies::{run_episode, Algorithm, EpisodeSpec, EpisodeTrace};
use crate::theory::{
    beta_halfwidth, lower_bound_quantities, upper_bounds, BetaScheduleSpec, BoundReport, LowerBoundKind,
    BOUND_SCHEMA_VERSION,
};

use super::config::{EvaluationMode, ExperimentConfig, TheoryConfig};
use super::csvio::{
    curves_to_bytes, rounds_to_bytes, summaries_to_bytes, write_atomic, CurvePoint, RoundRow, SummaryRow,
};
use super::curves::{best_estimate_curve, failed_episodes, fraction_found_curve, regret_curves, simple_regret_curve};
use super::seeds::{derive, Purpose, SHARED};

/// Bound report and measured comparison for one episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeBound {
    pub algorithm: Algorithm,
    pub trial: usize,
    pub experiment: usize,
    pub report: BoundReport,
    pub checks: Vec<BoundCheck>,
}

impl EpisodeBound {
    pub fn holds(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub algorithm: Algorithm,
    pub trial: usize,
    pub experiment: usize,
    pub seed: u64,
    pub trace: EpisodeTrace,
    pub bound: Option<EpisodeBound>,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub eta: Option<f64>,
    pub gap: f64,
    pub episodes: Vec<EpisodeResult>,
}

#[derive(Serialize)]
struct BoundsFile<'a> {
    schema_version: u32,
    config_hash: &'a str,
    delta_gap: f64,
    lambda: f64,
    norm_bound: f64,
    delta: f64,
    episodes: Vec<&'a EpisodeBound>,
}

/// Builds the configured objective with the experiment's noise level.
pub fn build_objective(config: &ExperimentConfig) -> Result<Objective> {
    let mut spec = config.objective.clone();
    spec.noise = config.noise_std();
    make_objective(&spec)
}

/// Initial design for `(trial, experiment)`, shared by all algorithms.
pub fn initial_design(config: &ExperimentConfig, objective: &Objective, trial: usize, experiment: usize) -> Vec<Vec<f64>> {
    let seed = derive(config.seed, trial as u64, experiment as u64, SHARED, Purpose::InitialDesign);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..config.initial_design_size).map(|_| objective.domain().sample(&mut rng)).collect()
}

pub fn resolve_eta(config: &ExperimentConfig, objective: &Objective) -> Result<Option<f64>> {
    match &config.threshold {
        None => Ok(None),
        Some(policy) => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, 0, 0, SHARED, Purpose::Threshold));
            resolve_threshold(policy, objective, &mut rng).map(Some)
        }
    }
}

/// `(algorithm index, trial, experiment)` in output order.
fn jobs(config: &ExperimentConfig) -> Vec<(usize, usize, usize)> {
    let mut v = Vec::new();
    for trial in 0..config.trials {
        for experiment in 0..config.experiments_per_trial {
            for a in 0..config.algorithms.len() {
                v.push((a, trial, experiment));
            }
        }
    }
    v
}

/// Bound report for one GP-UCB or elimination trace. The information gain
/// at N is read from the trace; past its end the last value is reused.
pub fn episode_bound(
    theory: &TheoryConfig,
    config: &ExperimentConfig,
    algorithm: Algorithm,
    trace: &EpisodeTrace,
    gap: f64,
    dim: usize,
) -> Result<Option<(BoundReport, Vec<BoundCheck>)>> {
    if !matches!(algorithm, Algorithm::GpUcb | Algorithm::Elimination) {
        return Ok(None);
    }
    if !(gap > 0.0) {
        return Err(Error::config("gap", "theory mode needs a positive lenient tolerance"));
    }
    let lambda = config.lambda_value();
    let noise = config.noise_std();
    let schedule = BetaScheduleSpec::Rkhs {
        norm_bound: theory.norm_bound,
        noise_std: noise,
        lambda,
        delta: theory.delta,
    };
    schedule.validate()?;
    let gains: Vec<f64> = {
        let mut g = vec![trace.rows.iter().filter(|r| r.t <= 0).last().map_or(0.0, |r| r.info_gain)];
        g.extend(trace.rows.iter().filter(|r| r.t > 0).map(|r| r.info_gain));
        g
    };
    let gain_of = |n: usize| gains[n.min(gains.len() - 1)];
    let beta_of = |n: usize| {
        let n = n.max(1);
        beta_halfwidth(&schedule, n, gain_of(n - 1)).map_or(f64::INFINITY, |b| b * b)
    };
    let horizon = config.horizon;
    let cap = theory.n_cap.unwrap_or(100 * horizon.max(1));
    let mut report = upper_bounds(gap, lambda, theory.norm_bound, horizon, beta_of, gain_of, cap);
    if theory.lower_bound {
        let lb = |kind| {
            lower_bound_quantities(
                &config.kernel,
                dim,
                theory.norm_bound,
                gap,
                noise,
                theory.delta,
                horizon as f64,
                kind,
                &theory.constants,
            )
        };
        report.lower_indicator = Some(lb(LowerBoundKind::Indicator));
        report.lower_hinge = Some(lb(LowerBoundKind::Hinge));
    }
    let checks = bound_comparison(&trace.ledger, &report, algorithm == Algorithm::Elimination);
    Ok(Some((report, checks)))
}

/// Runs every (trial, experiment, algorithm) episode. `parallel` caps the
/// worker count; `None` uses every core. Results come back in job order
/// whatever the scheduling.
pub fn run_suite(config: &ExperimentConfig, parallel: Option<usize>) -> Result<SuiteResult> {
    config.validate()?;
    let objective = build_objective(config)?;
    let eta = resolve_eta(config, &objective)?;
    let gap = config.gap_value();
    let beta = config.beta.resolve(config.noise_std(), config.lambda_value());
    let jobs = jobs(config);
    let run_one = |&(a, trial, experiment): &(usize, usize, usize)| -> Result<EpisodeResult> {
        let algorithm = config.algorithms[a];
        let (t, e, ai) = (trial as u64, experiment as u64, a as u64);
        let selection_seed = derive(config.seed, t, e, ai, Purpose::Selection);
        let spec = EpisodeSpec {
            objective: objective.clone(),
            algorithm,
            acquisition: config.acquisition.spec_for(algorithm, eta),
            beta,
            kernel: config.kernel,
            lambda: config.lambda_value(),
            horizon: config.horizon,
            initial_design: initial_design(config, &objective, trial, experiment),
            refit_every: config.refit_value(),
            standardize: config.standardize_targets,
            hyper_bounds: config.hyper_bounds,
            fit_restarts: config.fit_restarts,
            gap,
            eta,
            early_stop: config.early_stop_value(),
            regret_includes_initial: config.regret_includes_initial,
            selection_seed,
            noise_seed: derive(config.seed, t, e, ai, Purpose::Noise),
        };
        let trace = run_episode(&spec)?;
        let bound = match &config.theory {
            Some(th) => episode_bound(th, config, algorithm, &trace, gap, objective.dim())?.map(|(report, checks)| {
                EpisodeBound {
                    algorithm,
                    trial,
                    experiment,
                    report,
                    checks,
                }
            }),
            None => None,
        };
        Ok(EpisodeResult {
            algorithm,
            trial,
            experiment,
            seed: selection_seed,
            trace,
            bound,
        })
    };
    let results: Vec<Result<EpisodeResult>> = match parallel {
        Some(1) => jobs.iter().map(run_one).collect(),
        _ => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = parallel {
                builder = builder.num_threads(n);
            }
            let pool = builder
                .build()
                .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
            pool.install(|| jobs.par_iter().map(run_one).collect())
        }
    };
    let episodes = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SuiteResult {
        config: config.clone(),
        config_hash: config.hash(),
        eta,
        gap,
        episodes,
    })
}

impl SuiteResult {
    pub fn all_failed(&self) -> bool {
        self.episodes.iter().all(|e| e.trace.termination.is_failure())
    }

    pub fn round_rows(&self) -> Vec<RoundRow> {
        self.episodes
            .iter()
            .flat_map(|e| {
                e.trace.rows.iter().map(move |r| RoundRow {
                    algorithm: e.algorithm,
                    trial: e.trial,
                    experiment: e.experiment,
                    seed: e.seed,
                    record: r.clone(),
                })
            })
            .collect()
    }

    pub fn summaries(&self) -> Vec<SummaryRow> {
        self.episodes
            .iter()
            .map(|e| {
                let last = e.trace.rows.last();
                SummaryRow {
                    config_hash: self.config_hash.clone(),
                    algorithm: e.algorithm,
                    trial: e.trial,
                    experiment: e.experiment,
                    seed: e.seed,
                    termination: e.trace.termination,
                    error: e.trace.error.clone(),
                    rounds: e.trace.rows.iter().filter(|r| r.t > 0).count(),
                    first_good_round: e.trace.first_good,
                    regret: e.trace.ledger.row(),
                    simple_regret: last.map_or(f64::NAN, |r| r.simple_regret),
                    estimate_good: last.is_some_and(|r| r.estimate_good),
                    eta: e.trace.eta,
                    f_star: e.trace.f_star,
                    lengthscale: e.trace.final_kernel.lengthscale,
                    scale: e.trace.final_kernel.scale,
                }
            })
            .collect()
    }

    /// Curve tables for the evaluation mode, keyed by file stem.
    pub fn curves(&self) -> Result<Vec<(String, Vec<CurvePoint>)>> {
        curve_tables(self.config.mode, &self.summaries(), &self.round_rows(), self.config.horizon)
    }

    pub fn bound_reports(&self) -> Vec<&EpisodeBound> {
        self.episodes.iter().filter_map(|e| e.bound.as_ref()).collect()
    }

    pub fn bounds_json(&self) -> Option<String> {
        let th = self.config.theory?;
        let file = BoundsFile {
            schema_version: BOUND_SCHEMA_VERSION,
            config_hash: &self.config_hash,
            delta_gap: self.gap,
            lambda: self.config.lambda_value(),
            norm_bound: th.norm_bound,
            delta: th.delta,
            episodes: self.bound_reports(),
        };
        Some(serde_json::to_string_pretty(&file).expect("bound report serializes"))
    }

    /// Writes every output file under `dir` and returns their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
            let p = dir.join(name);
            write_atomic(&p, bytes)?;
            written.push(p);
            Ok(())
        };
        let config = serde_json::to_string_pretty(&self.config).expect("config serializes");
        put("config.json", config.as_bytes())?;
        put("rounds.csv", &rounds_to_bytes(&self.round_rows())?)?;
        put("summaries.csv", &summaries_to_bytes(&self.summaries())?)?;
        if !self.all_failed() {
            for (stem, points) in self.curves()? {
                put(&format!("{stem}.csv"), &curves_to_bytes(&points)?)?;
            }
        }
        if let Some(json) = self.bounds_json() {
            put("bounds.json", json.as_bytes())?;
        }
        Ok(written)
    }
}

/// Curve files for a mode from parsed rows: `(file stem, points)`.
pub fn curve_tables(
    mode: EvaluationMode,
    summaries: &[SummaryRow],
    rows: &[RoundRow],
    horizon: usize,
) -> Result<Vec<(String, Vec<CurvePoint>)>> {
    let failed = failed_episodes(summaries);
    Ok(match mode {
        EvaluationMode::FractionFound => vec![("curves_fraction_found".into(), fraction_found_curve(summaries, horizon))],
        EvaluationMode::BestEstimate => vec![
            ("curves_best_estimate".into(), best_estimate_curve(rows, horizon, &failed)?),
            ("curves_simple_regret".into(), simple_regret_curve(rows, horizon, &failed)?),
        ],
        EvaluationMode::RegretCurves => vec![
            ("curves_regret".into(), regret_curves(rows, horizon, &failed)?),
            ("curves_simple_regret".into(), simple_regret_curve(rows, horizon, &failed)?),
        ],
    })
}
