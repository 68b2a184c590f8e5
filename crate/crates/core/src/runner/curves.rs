//! Aggregate curves: per-trial averages over experiments, then mean and
//! spread across trials. `half_std` is the plotted error bar.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::strategies::{Algorithm, RoundRecord};

use super::csvio::{CurvePoint, RoundRow, SummaryRow};

pub const FRACTION_FOUND: &str = "fraction_found";
pub const BEST_ESTIMATE: &str = "best_estimate";
pub const SIMPLE_REGRET: &str = "simple_regret";
pub const REGRET_CURVES: [&str; 4] = ["regret_standard", "regret_indicator", "regret_large_gap", "regret_hinge"];

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn push_stats(out: &mut Vec<CurvePoint>, curve: &str, algorithm: Algorithm, t: usize, per_trial: &[f64]) {
    let (mean, std) = mean_std(per_trial);
    out.push(CurvePoint {
        curve: curve.to_string(),
        algorithm,
        t,
        mean,
        std,
        half_std: 0.5 * std,
        trials: per_trial.len(),
    });
}

/// Fraction of episodes with `first_good_round ≤ t` for `t = 1..=horizon`.
/// Failed episodes are left out.
pub fn fraction_found_curve(summaries: &[SummaryRow], horizon: usize) -> Vec<CurvePoint> {
    let mut groups: BTreeMap<Algorithm, BTreeMap<usize, Vec<Option<usize>>>> = BTreeMap::new();
    for s in summaries.iter().filter(|s| !s.termination.is_failure()) {
        groups
            .entry(s.algorithm)
            .or_default()
            .entry(s.trial)
            .or_default()
            .push(s.first_good_round);
    }
    let mut out = Vec::new();
    for (alg, trials) in groups {
        for t in 1..=horizon {
            let per_trial: Vec<f64> = trials
                .values()
                .map(|eps| eps.iter().filter(|f| f.is_some_and(|g| g <= t)).count() as f64 / eps.len() as f64)
                .collect();
            push_stats(&mut out, FRACTION_FOUND, alg, t, &per_trial);
        }
    }
    out
}

type EpisodeKey = (Algorithm, usize, usize);

/// Curve of a per-round quantity. Each episode contributes its value at the
/// last row with `t' ≤ t`, so early-stopped traces carry their final state
/// forward. `exclude` drops episodes by key.
pub fn per_round_curve(
    curve: &str,
    rows: &[RoundRow],
    horizon: usize,
    value: impl Fn(&RoundRecord) -> f64,
    exclude: &HashSet<EpisodeKey>,
) -> Result<Vec<CurvePoint>> {
    let mut episodes: BTreeMap<EpisodeKey, Vec<&RoundRecord>> = BTreeMap::new();
    for r in rows {
        let key = (r.algorithm, r.trial, r.experiment);
        if !exclude.contains(&key) {
            episodes.entry(key).or_default().push(&r.record);
        }
    }
    if episodes.is_empty() {
        return Err(Error::input(format!("no traces to build the `{curve}` curve from")));
    }
    // (algorithm, trial) -> per-episode value series over t = 1..=horizon.
    let mut groups: BTreeMap<Algorithm, BTreeMap<usize, Vec<Vec<f64>>>> = BTreeMap::new();
    for ((alg, trial, _), recs) in episodes {
        let mut series = Vec::with_capacity(horizon);
        let mut i = 0;
        let mut last = None;
        for t in 1..=horizon as i64 {
            while i < recs.len() && recs[i].t <= t {
                last = Some(recs[i]);
                i += 1;
            }
            series.push(last.map_or(f64::NAN, &value));
        }
        groups.entry(alg).or_default().entry(trial).or_default().push(series);
    }
    let mut out = Vec::new();
    for (alg, trials) in groups {
        for t in 0..horizon {
            let per_trial: Vec<f64> = trials
                .values()
                .map(|eps| eps.iter().map(|s| s[t]).sum::<f64>() / eps.len() as f64)
                .collect();
            push_stats(&mut out, curve, alg, t + 1, &per_trial);
        }
    }
    Ok(out)
}

/// Fraction of episodes whose best estimate is good at each round.
pub fn best_estimate_curve(rows: &[RoundRow], horizon: usize, exclude: &HashSet<EpisodeKey>) -> Result<Vec<CurvePoint>> {
    per_round_curve(BEST_ESTIMATE, rows, horizon, |r| f64::from(u8::from(r.estimate_good)), exclude)
}

pub fn simple_regret_curve(rows: &[RoundRow], horizon: usize, exclude: &HashSet<EpisodeKey>) -> Result<Vec<CurvePoint>> {
    per_round_curve(SIMPLE_REGRET, rows, horizon, |r| r.simple_regret, exclude)
}

/// Standard and the three lenient cumulative regrets, concatenated.
pub fn regret_curves(rows: &[RoundRow], horizon: usize, exclude: &HashSet<EpisodeKey>) -> Result<Vec<CurvePoint>> {
    let pick: [fn(&RoundRecord) -> f64; 4] = [
        |r| r.regret.standard,
        |r| r.regret.indicator,
        |r| r.regret.large_gap,
        |r| r.regret.hinge,
    ];
    let mut out = Vec::new();
    for (name, f) in REGRET_CURVES.iter().zip(pick) {
        out.extend(per_round_curve(name, rows, horizon, f, exclude)?);
    }
    Ok(out)
}

/// Keys of episodes whose summaries record a failure.
pub fn failed_episodes(summaries: &[SummaryRow]) -> HashSet<EpisodeKey> {
    summaries
        .iter()
        .filter(|s| s.termination.is_failure())
        .map(|s| (s.algorithm, s.trial, s.experiment))
        .collect()
}
