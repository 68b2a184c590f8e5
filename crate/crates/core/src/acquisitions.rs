//! Acquisition functions. Scalar scores work on posterior marginals
//! `(μ, σ)`; the sampling-based rules work on a candidate set.
//!
//! Ties in every argmax go to the lowest candidate index.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::kernels::DomainSpec;
use crate::posterior::{GridPosterior, PosteriorState};

/// Below this posterior std a point is treated as known exactly.
pub const MIN_STD: f64 = 1e-12;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / SQRT_2)
}

pub fn normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u - LN_SQRT_2PI).exp()
}

/// `ln Φ(u)`, accurate far into the lower tail.
pub fn normal_log_cdf(u: f64) -> f64 {
    if u > -30.0 {
        normal_cdf(u).ln()
    } else {
        // Mills-ratio expansion: Φ(u) ≈ φ(u)/(-u) · (1 − 1/u² + 3/u⁴).
        let u2 = u * u;
        -0.5 * u2 - LN_SQRT_2PI - (-u).ln() + (1.0 - 1.0 / u2 + 3.0 / (u2 * u2)).ln()
    }
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    Ucb,
    Pi,
    Ei,
    Ts,
    Mes,
    Pg,
    Eg,
    Gs,
    Sts,
}

impl AcquisitionKind {
    pub fn needs_threshold(self) -> bool {
        matches!(self, AcquisitionKind::Pg | AcquisitionKind::Eg | AcquisitionKind::Gs | AcquisitionKind::Sts)
    }

    /// Chosen from a finite candidate set rather than by local search.
    pub fn is_discrete(self) -> bool {
        matches!(self, AcquisitionKind::Ts | AcquisitionKind::Mes | AcquisitionKind::Gs | AcquisitionKind::Sts)
    }
}

fn default_fantasies() -> usize {
    3
}
fn default_max_samples() -> usize {
    10
}
fn default_gs_grid() -> usize {
    1000
}
fn default_mes_grid() -> usize {
    10_000
}
fn default_candidates() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    /// Good-action threshold in objective units.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub intersect_bounds: bool,
    /// Fantasy observations per GS candidate.
    #[serde(default = "default_fantasies")]
    pub gs_fantasies: usize,
    /// Max-value samples per fantasy (GS) or per round (MES).
    #[serde(default = "default_max_samples")]
    pub max_samples: usize,
    /// Points over which GS fits its max-value distribution.
    #[serde(default = "default_gs_grid")]
    pub gs_grid_size: usize,
    /// STS reference point in objective units; defaults to the domain center.
    #[serde(default)]
    pub sts_center: Option<Vec<f64>>,
    #[serde(default = "default_mes_grid")]
    pub mes_grid_size: usize,
    /// Cap on the candidate set of the discrete rules.
    #[serde(default = "default_candidates")]
    pub candidate_limit: usize,
}

impl AcquisitionSpec {
    pub fn new(kind: AcquisitionKind, eta: Option<f64>) -> Result<Self> {
        let spec = AcquisitionSpec {
            kind,
            eta,
            intersect_bounds: false,
            gs_fantasies: default_fantasies(),
            max_samples: default_max_samples(),
            gs_grid_size: default_gs_grid(),
            sts_center: None,
            mes_grid_size: default_mes_grid(),
            candidate_limit: default_candidates(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.needs_threshold() {
            match self.eta {
                Some(e) if !e.is_nan() => {}
                _ => return Err(Error::config("acquisition.eta", format!("{:?} requires a threshold", self.kind))),
            }
        }
        for (name, v) in [
            ("gs_fantasies", self.gs_fantasies),
            ("max_samples", self.max_samples),
            ("gs_grid_size", self.gs_grid_size),
            ("mes_grid_size", self.mes_grid_size),
            ("candidate_limit", self.candidate_limit),
        ] {
            if v == 0 {
                return Err(Error::config(format!("acquisition.{name}"), "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Running intersection of confidence bounds over a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCache {
    domain: DomainSpec,
    ucb: Vec<f64>,
    lcb: Vec<f64>,
}

impl BoundCache {
    pub fn for_domain(domain: &DomainSpec) -> Result<Self> {
        let n = domain
            .grid_len()
            .ok_or_else(|| Error::Unsupported("bound intersection needs a grid domain".into()))?;
        Ok(BoundCache {
            domain: domain.clone(),
            ucb: vec![f64::INFINITY; n],
            lcb: vec![f64::NEG_INFINITY; n],
        })
    }

    pub fn len(&self) -> usize {
        self.ucb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ucb.is_empty()
    }

    /// Folds the current bounds at grid index `idx` into the cache and
    /// returns the intersected pair.
    pub fn intersect(&mut self, idx: usize, ucb: f64, lcb: f64) -> (f64, f64) {
        self.ucb[idx] = self.ucb[idx].min(ucb);
        self.lcb[idx] = self.lcb[idx].max(lcb);
        (self.ucb[idx], self.lcb[idx])
    }

    pub fn ucb(&self, idx: usize) -> f64 {
        self.ucb[idx]
    }

    pub fn lcb(&self, idx: usize) -> f64 {
        self.lcb[idx]
    }

    pub fn index_of(&self, x: &[f64]) -> usize {
        self.domain.nearest_grid_index(x).expect("cache domain is a grid")
    }
}

/// `(μ + β^{1/2}σ, μ − β^{1/2}σ)`, intersected through `cache` when given.
pub fn ucb_lcb(
    state: &PosteriorState,
    beta_sqrt: f64,
    x: &[f64],
    cache: Option<&mut BoundCache>,
) -> Result<(f64, f64)> {
    if !(beta_sqrt >= 0.0) {
        return Err(Error::input("confidence half-width must be nonnegative"));
    }
    let (m, v) = state.posterior_at(x)?;
    let w = beta_sqrt * v.sqrt();
    let (u, l) = (m + w, m - w);
    Ok(match cache {
        Some(c) => {
            let idx = c.index_of(x);
            c.intersect(idx, u, l)
        }
        None => (u, l),
    })
}

pub fn acq_ucb(state: &PosteriorState, beta_sqrt: f64, x: &[f64]) -> Result<f64> {
    Ok(ucb_lcb(state, beta_sqrt, x, None)?.0)
}

pub fn pi_value(mean: f64, std: f64, incumbent: f64) -> f64 {
    if std < MIN_STD {
        if mean > incumbent {
            1.0
        } else {
            0.0
        }
    } else {
        normal_cdf((mean - incumbent) / std)
    }
}

/// `(μ−τ)Φ(u) + σφ(u)` with `u = (μ−τ)/σ`; shared by EI and EG.
pub fn improvement_value(mean: f64, std: f64, target: f64) -> f64 {
    let d = mean - target;
    if std < MIN_STD {
        return d.max(0.0);
    }
    let u = d / std;
    (d * normal_cdf(u) + std * normal_pdf(u)).max(0.0)
}

/// `(μ−η)/σ`; infinite when `σ` vanishes.
pub fn pg_score(mean: f64, std: f64, eta: f64) -> f64 {
    if std < MIN_STD {
        if mean >= eta {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    } else {
        (mean - eta) / std
    }
}

pub fn pg_probability(mean: f64, std: f64, eta: f64) -> f64 {
    let s = pg_score(mean, std, eta);
    if s.is_infinite() {
        if s > 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        normal_cdf(s)
    }
}

fn marginal(state: &PosteriorState, x: &[f64]) -> Result<(f64, f64)> {
    let (m, v) = state.posterior_at(x)?;
    Ok((m, v.sqrt()))
}

pub fn acq_pi(state: &PosteriorState, incumbent: f64, x: &[f64]) -> Result<f64> {
    let (m, s) = marginal(state, x)?;
    Ok(pi_value(m, s, incumbent))
}

pub fn acq_ei(state: &PosteriorState, incumbent: f64, x: &[f64]) -> Result<f64> {
    let (m, s) = marginal(state, x)?;
    Ok(improvement_value(m, s, incumbent))
}

pub fn acq_pg(state: &PosteriorState, eta: f64, x: &[f64]) -> Result<f64> {
    let (m, s) = marginal(state, x)?;
    Ok(pg_score(m, s, eta))
}

pub fn acq_eg(state: &PosteriorState, eta: f64, x: &[f64]) -> Result<f64> {
    let (m, s) = marginal(state, x)?;
    Ok(improvement_value(m, s, eta))
}

/// Gumbel location and scale fitted to `P(max ≤ z) ≈ Π Φ((z−μ_i)/σ_i)`
/// at its quartiles.
pub fn fit_max_value_gumbel(means: &[f64], stds: &[f64]) -> Result<(f64, f64)> {
    if means.is_empty() || means.len() != stds.len() {
        return Err(Error::input("max-value fit needs matching, nonempty marginals"));
    }
    let m = means.len();
    let sd: Vec<f64> = stds.iter().map(|s| s.max(MIN_STD)).collect();
    let tail = normal_quantile(1.0 - 0.25 / m as f64);
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (mu, s) in means.iter().zip(&sd) {
        lo = lo.max(mu - 0.674_489_750_196_081_7 * s);
        hi = hi.max(mu + tail * s);
    }
    // Points that cannot move the product below the lower bracket.
    let live: Vec<(f64, f64)> = means
        .iter()
        .zip(&sd)
        .filter(|(mu, s)| *mu + 8.0 * *s >= lo)
        .map(|(mu, s)| (*mu, *s))
        .collect();
    let log_cdf = |z: f64| -> f64 { live.iter().map(|(mu, s)| normal_log_cdf((z - mu) / s)).sum() };
    let log_cdf_and_slope = |z: f64| -> (f64, f64) {
        live.iter().fold((0.0, 0.0), |(v, d), (mu, s)| {
            let u = (z - mu) / s;
            let l = normal_log_cdf(u);
            (v + l, d + (-0.5 * u * u - LN_SQRT_2PI - l).exp() / s)
        })
    };
    let quantile = |target: f64| -> Result<f64> {
        let (mut a, mut b) = (lo, hi);
        let width = (hi - lo).abs().max(1e-12);
        let mut expand = 0;
        while log_cdf(a) > target {
            a -= width * (1 << expand) as f64;
            expand += 1;
            if expand > 40 {
                return Err(Error::numerical("max-value quantile could not be bracketed"));
            }
        }
        expand = 0;
        while log_cdf(b) < target {
            b += width * (1 << expand) as f64;
            expand += 1;
            if expand > 40 {
                return Err(Error::numerical("max-value quantile could not be bracketed"));
            }
        }
        // Newton on the increasing log-CDF, falling back to bisection
        // whenever a step leaves the bracket.
        let tol = 1e-9 * (1.0 + a.abs().max(b.abs()));
        let mut z = 0.5 * (a + b);
        for _ in 0..200 {
            let (value, slope) = log_cdf_and_slope(z);
            if value < target {
                a = z;
            } else {
                b = z;
            }
            let step = (target - value) / slope;
            let next = z + step;
            if step.abs() <= tol || b - a <= tol {
                return Ok(if next > a && next < b { next } else { z });
            }
            z = if slope > 0.0 && next > a && next < b { next } else { 0.5 * (a + b) };
        }
        Ok(z)
    };
    let q1 = quantile(0.25f64.ln())?;
    let q2 = quantile(0.75f64.ln())?;
    let c1 = (-(0.25f64.ln())).ln();
    let c2 = (-(0.75f64.ln())).ln();
    let scale = ((q2 - q1) / (c1 - c2)).max(0.0);
    let loc = q1 + scale * c1;
    Ok((loc, scale))
}

fn gumbel_draws<R: Rng + ?Sized>(loc: f64, scale: f64, k: usize, rng: &mut R) -> Vec<f64> {
    (0..k)
        .map(|_| {
            let u: f64 = rng.random::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            loc - scale * (-u.ln()).ln()
        })
        .collect()
}

/// `k` approximate draws of `max f` over the given marginals.
pub fn sample_max_values_from<R: Rng + ?Sized>(means: &[f64], stds: &[f64], k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::input("need at least one max-value sample"));
    }
    let (loc, scale) = fit_max_value_gumbel(means, stds)?;
    Ok(gumbel_draws(loc, scale, k, rng))
}

pub fn sample_max_values<R: Rng + ?Sized>(
    state: &PosteriorState,
    grid: &[Vec<f64>],
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::input("max-value sampling needs a nonempty grid"));
    }
    let mut means = Vec::with_capacity(grid.len());
    let mut stds = Vec::with_capacity(grid.len());
    for g in grid {
        let (m, v) = state.posterior_at(g)?;
        means.push(m);
        stds.push(v.sqrt());
    }
    sample_max_values_from(&means, &stds, k, rng)
}

/// Mean over `y*` of `u φ(u)/(2Φ(u)) − ln Φ(u)` with `u = (y*−μ)/σ`.
pub fn mes_value(mean: f64, std: f64, max_samples: &[f64]) -> f64 {
    if std < MIN_STD || max_samples.is_empty() {
        return 0.0;
    }
    let total: f64 = max_samples
        .iter()
        .map(|y| {
            let u = (y - mean) / std;
            let log_cdf = normal_log_cdf(u);
            let ratio = (-0.5 * u * u - LN_SQRT_2PI - log_cdf).exp();
            (0.5 * u * ratio - log_cdf).max(0.0)
        })
        .sum();
    total / max_samples.len() as f64
}

pub fn acq_mes<R: Rng + ?Sized>(
    state: &PosteriorState,
    grid: &[Vec<f64>],
    x: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    let samples = sample_max_values(state, grid, k, rng)?;
    let (m, s) = marginal(state, x)?;
    Ok(mes_value(m, s, &samples))
}

/// Index of the largest value; first wins ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ if v.is_nan() => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Index of the maximizer of one joint posterior draw over `grid`.
pub fn acq_ts<R: Rng + ?Sized>(state: &PosteriorState, grid: &[Vec<f64>], rng: &mut R) -> Result<usize> {
    let draw = state.sample_posterior_on(grid, rng)?;
    argmax(&draw).ok_or_else(|| Error::numerical("posterior draw was all NaN"))
}

/// Satisficing rule on a given draw: closest qualifying point to `center`,
/// or the draw's argmax when nothing reaches `eta`.
pub fn sts_pick(draw: &[f64], grid: &[Vec<f64>], eta: f64, center: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (v, p)) in draw.iter().zip(grid).enumerate() {
        if *v >= eta {
            let d: f64 = p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
    }
    best.map(|(i, _)| i).or_else(|| argmax(draw))
}

pub fn acq_sts<R: Rng + ?Sized>(
    state: &PosteriorState,
    grid: &[Vec<f64>],
    eta: f64,
    center: &[f64],
    rng: &mut R,
) -> Result<usize> {
    let draw = state.sample_posterior_on(grid, rng)?;
    sts_pick(&draw, grid, eta, center).ok_or_else(|| Error::numerical("posterior draw was all NaN"))
}

/// Per-candidate GS score (fraction of pooled max-value samples at or above
/// `eta`) and the largest pooled sample.
pub fn gs_scores<R: Rng + ?Sized>(
    state: &PosteriorState,
    candidates: &[Vec<f64>],
    grid: &GridPosterior,
    eta: f64,
    fantasies: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    if candidates.is_empty() || grid.is_empty() {
        return Err(Error::input("GS needs nonempty candidate and grid sets"));
    }
    if fantasies == 0 || k == 0 {
        return Err(Error::input("GS needs at least one fantasy and one sample"));
    }
    let lam = state.effective_noise();
    let m = grid.len();
    let base_mean = grid.means().to_vec();
    let base_var: Vec<f64> = (0..m).map(|g| grid.variance(g)).collect();
    let mut means = vec![0.0; m];
    let mut stds = vec![0.0; m];
    let mut out = Vec::with_capacity(candidates.len());
    for x in candidates {
        let cross = state.cross(x);
        let var_x = (state.kernel().variance() - cross.iter().map(|v| v * v).sum::<f64>()).max(0.0);
        let cov = grid.covariance_with(x, &cross);
        let s2 = var_x + lam;
        let mut hits = 0usize;
        let mut top = f64::NEG_INFINITY;
        for _ in 0..fantasies {
            let z: f64 = rng.sample(StandardNormal);
            let shift = s2.sqrt() * z / s2;
            for g in 0..m {
                means[g] = base_mean[g] + cov[g] * shift;
                stds[g] = (base_var[g] - cov[g] * cov[g] / s2).max(0.0).sqrt();
            }
            for y in sample_max_values_from(&means, &stds, k, rng)? {
                if y >= eta {
                    hits += 1;
                }
                top = top.max(y);
            }
        }
        out.push((hits as f64 / (fantasies * k) as f64, top));
    }
    Ok(out)
}

/// GS selection with the highest-max-sample fallback when every score is 0.
pub fn acq_gs_select<R: Rng + ?Sized>(
    state: &PosteriorState,
    candidates: &[Vec<f64>],
    grid: &GridPosterior,
    eta: f64,
    fantasies: usize,
    k: usize,
    rng: &mut R,
) -> Result<usize> {
    let scores = gs_scores(state, candidates, grid, eta, fantasies, k, rng)?;
    let s: Vec<f64> = scores.iter().map(|p| p.0).collect();
    let pick = if s.iter().all(|&v| v == 0.0) {
        let tops: Vec<f64> = scores.iter().map(|p| p.1).collect();
        argmax(&tops)
    } else {
        argmax(&s)
    };
    pick.ok_or_else(|| Error::numerical("GS scores were all NaN"))
}
