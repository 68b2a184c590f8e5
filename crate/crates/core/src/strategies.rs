//! Sequential decision loops: GP-UCB, elimination, good-action elimination
//! and the acquisition-driven strategies.
//!
//! The GP works in unit-cube coordinates of the objective's domain; points
//! are mapped back to domain units before evaluation and reporting.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisitions::{
    argmax, gs_scores, improvement_value, mes_value, pg_score, pi_value, sample_max_values_from, sts_pick,
    AcquisitionKind, AcquisitionSpec, BoundCache,
};
use crate::error::{Error, Result};
use crate::kernels::{DomainSpec, KernelSpec};
use crate::metrics::{simple_regret, RegretLedger, RegretRow};
use crate::objectives::Objective;
use crate::posterior::{sample_mvn, GridPosterior, HyperBounds, PosteriorState};
use crate::theory::{beta_halfwidth, BetaScheduleSpec};

/// Restarts of the continuous acquisition search.
pub const SEARCH_RESTARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    GpUcb,
    Elimination,
    GoodElimination,
    Pi,
    Ei,
    Ts,
    Mes,
    Pg,
    Eg,
    Gs,
    Sts,
}

impl Algorithm {
    pub const ALL: [Algorithm; 11] = [
        Algorithm::GpUcb,
        Algorithm::Elimination,
        Algorithm::GoodElimination,
        Algorithm::Pi,
        Algorithm::Ei,
        Algorithm::Ts,
        Algorithm::Mes,
        Algorithm::Pg,
        Algorithm::Eg,
        Algorithm::Gs,
        Algorithm::Sts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::GpUcb => "gp_ucb",
            Algorithm::Elimination => "elimination",
            Algorithm::GoodElimination => "good_elimination",
            Algorithm::Pi => "pi",
            Algorithm::Ei => "ei",
            Algorithm::Ts => "ts",
            Algorithm::Mes => "mes",
            Algorithm::Pg => "pg",
            Algorithm::Eg => "eg",
            Algorithm::Gs => "gs",
            Algorithm::Sts => "sts",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = match s.to_ascii_lowercase().as_str() {
            "ucb" | "gp-ucb" | "gpucb" => "gp_ucb".to_string(),
            other => other.replace('-', "_"),
        };
        Algorithm::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Acquisition used for selection; elimination variants select by
    /// variance and report `Ucb`.
    pub fn acquisition_kind(self) -> AcquisitionKind {
        match self {
            Algorithm::GpUcb | Algorithm::Elimination | Algorithm::GoodElimination => AcquisitionKind::Ucb,
            Algorithm::Pi => AcquisitionKind::Pi,
            Algorithm::Ei => AcquisitionKind::Ei,
            Algorithm::Ts => AcquisitionKind::Ts,
            Algorithm::Mes => AcquisitionKind::Mes,
            Algorithm::Pg => AcquisitionKind::Pg,
            Algorithm::Eg => AcquisitionKind::Eg,
            Algorithm::Gs => AcquisitionKind::Gs,
            Algorithm::Sts => AcquisitionKind::Sts,
        }
    }

    pub fn needs_threshold(self) -> bool {
        self == Algorithm::GoodElimination || self.acquisition_kind().needs_threshold()
    }

    pub fn is_elimination(self) -> bool {
        matches!(self, Algorithm::Elimination | Algorithm::GoodElimination)
    }
}

/// Everything one episode needs.
#[derive(Debug, Clone)]
pub struct EpisodeSpec {
    pub objective: Objective,
    pub algorithm: Algorithm,
    pub acquisition: AcquisitionSpec,
    pub beta: BetaScheduleSpec,
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub horizon: usize,
    /// Initial design in domain coordinates.
    pub initial_design: Vec<Vec<f64>>,
    pub refit_every: Option<usize>,
    /// Only consulted when refitting.
    pub standardize: bool,
    pub hyper_bounds: HyperBounds,
    pub fit_restarts: usize,
    /// Lenient-regret tolerance Δ.
    pub gap: f64,
    /// Good-action threshold in objective units; `None` falls back to the
    /// regret view `f ≥ f* − Δ`.
    pub eta: Option<f64>,
    pub early_stop: bool,
    pub regret_includes_initial: bool,
    pub selection_seed: u64,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    EarlyStopGood,
    DomainExhausted,
    NoGoodActionCertified,
    ObjectiveError,
    NumericalError,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::EarlyStopGood => "early_stop_good",
            Termination::DomainExhausted => "domain_exhausted",
            Termination::NoGoodActionCertified => "no_good_action_certified",
            Termination::ObjectiveError => "objective_error",
            Termination::NumericalError => "numerical_error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Termination::Completed,
            Termination::EarlyStopGood,
            Termination::DomainExhausted,
            Termination::NoGoodActionCertified,
            Termination::ObjectiveError,
            Termination::NumericalError,
        ]
        .into_iter()
        .find(|t| t.name() == s)
    }

    /// Whether the episode produced usable results.
    pub fn is_failure(self) -> bool {
        matches!(self, Termination::ObjectiveError | Termination::NumericalError)
    }
}

/// One row of an episode trace. Initial-design rows have `t ≤ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: i64,
    pub x: Vec<f64>,
    pub y: f64,
    pub f: f64,
    pub regret: RegretRow,
    pub good: bool,
    pub estimate: Vec<f64>,
    pub estimate_value: f64,
    pub estimate_good: bool,
    pub simple_regret: f64,
    pub beta_sqrt: f64,
    pub info_gain: f64,
    /// Size of the candidate set after this round (elimination only).
    pub active: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub rows: Vec<RoundRecord>,
    pub termination: Termination,
    pub error: Option<String>,
    pub eta: Option<f64>,
    pub f_star: f64,
    pub ledger: RegretLedger,
    /// Round (0 for the initial design) of the first good sample.
    pub first_good: Option<usize>,
    pub final_kernel: KernelSpec,
}

impl EpisodeTrace {
    pub fn last(&self) -> Option<&RoundRecord> {
        self.rows.last()
    }
}

/// Mutable per-episode state of a strategy.
pub struct StrategyState {
    algorithm: Algorithm,
    acquisition: AcquisitionSpec,
    domain: DomainSpec,
    unit_domain: DomainSpec,
    unit_grid: Option<Vec<Vec<f64>>>,
    posterior: PosteriorState,
    raw_ys: Vec<f64>,
    shift: f64,
    scale: f64,
    standardize: bool,
    round: usize,
    beta: BetaScheduleSpec,
    active: Option<Vec<usize>>,
    bound_cache: Option<BoundCache>,
    grid_cache: Option<GridPosterior>,
    mes_cache: Option<GridPosterior>,
    gs_cache: Option<GridPosterior>,
    noiseless: bool,
    init_count: usize,
    rng: ChaCha8Rng,
}

impl StrategyState {
    pub fn new(
        algorithm: Algorithm,
        acquisition: AcquisitionSpec,
        domain: &DomainSpec,
        kernel: KernelSpec,
        lambda: f64,
        beta: BetaScheduleSpec,
        noiseless: bool,
        standardize: bool,
        seed: u64,
    ) -> Result<Self> {
        domain.validate()?;
        beta.validate()?;
        let mut acq = acquisition;
        acq.kind = algorithm.acquisition_kind();
        if algorithm.needs_threshold() && acq.eta.is_none() {
            return Err(Error::config("acquisition.eta", format!("{} requires a threshold", algorithm.name())));
        }
        acq.validate()?;
        let unit_domain = DomainSpec {
            bounds: vec![(0.0, 1.0); domain.dim()],
            grid: domain.grid.clone(),
            integer_dims: Vec::new(),
        };
        let unit_grid = unit_domain.grid_points();
        if algorithm.is_elimination() && unit_grid.is_none() {
            return Err(Error::Unsupported(format!("{} needs a grid domain", algorithm.name())));
        }
        let beta = match beta {
            BetaScheduleSpec::BayesianFinite { delta, domain_size: None } => BetaScheduleSpec::BayesianFinite {
                delta,
                domain_size: domain.grid_len(),
            },
            other => other,
        };
        let bound_cache = if acq.intersect_bounds {
            Some(BoundCache::for_domain(&unit_domain)?)
        } else {
            None
        };
        let posterior = PosteriorState::new(kernel, lambda)?;
        let grid_cache = match &unit_grid {
            Some(g) => Some(GridPosterior::new(g.clone(), &posterior)?),
            None => None,
        };
        let active = if algorithm.is_elimination() {
            Some((0..unit_grid.as_ref().map_or(0, |g| g.len())).collect())
        } else {
            None
        };
        Ok(StrategyState {
            algorithm,
            acquisition: acq,
            domain: domain.clone(),
            unit_domain,
            unit_grid,
            posterior,
            raw_ys: Vec::new(),
            shift: 0.0,
            scale: 1.0,
            standardize,
            round: 0,
            beta,
            active,
            bound_cache,
            grid_cache,
            mes_cache: None,
            gs_cache: None,
            noiseless,
            init_count: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn posterior(&self) -> &PosteriorState {
        &self.posterior
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn active(&self) -> Option<&[usize]> {
        self.active.as_deref()
    }

    pub fn bound_cache(&self) -> Option<&BoundCache> {
        self.bound_cache.as_ref()
    }

    pub fn grid(&self) -> Option<&GridPosterior> {
        self.grid_cache.as_ref()
    }

    /// Unit-cube grid points when the domain is a grid.
    pub fn unit_grid(&self) -> Option<&[Vec<f64>]> {
        self.unit_grid.as_deref()
    }

    /// Objective units to model units.
    fn model_value(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    /// Adds an observation; `x` is in domain coordinates.
    pub fn observe(&mut self, x: &[f64], y: f64, algorithmic: bool) -> Result<()> {
        let u = self.domain.to_unit(x);
        self.raw_ys.push(y);
        let z = self.model_value(y);
        self.posterior.append_observation(&u, z)?;
        if algorithmic {
            self.round += 1;
        } else {
            self.init_count += 1;
        }
        Ok(())
    }

    /// `β_t^{1/2}` for the upcoming round with the running information gain.
    pub fn beta_sqrt(&self, t: usize) -> Result<f64> {
        beta_halfwidth(&self.beta, t, self.posterior.information_gain())
    }

    /// Re-standardizes the targets (when enabled) and refits the kernel.
    pub fn refit(&mut self, bounds: &HyperBounds, restarts: usize) -> Result<()> {
        if self.posterior.len() < 2 {
            return Ok(());
        }
        if self.standardize {
            let n = self.raw_ys.len() as f64;
            let mean = self.raw_ys.iter().sum::<f64>() / n;
            let var = self.raw_ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            self.shift = mean;
            self.scale = if sd > 1e-12 { sd } else { 1.0 };
            let z: Vec<f64> = self.raw_ys.iter().map(|&y| self.model_value(y)).collect();
            self.posterior.set_targets(z)?;
        }
        let kernel = self.posterior.fit_hyperparameters(bounds, restarts, &mut self.rng);
        if kernel != *self.posterior.kernel() {
            self.posterior = self.posterior.with_kernel(kernel)?;
        }
        Ok(())
    }

    fn sync_caches(&mut self) {
        let post = &self.posterior;
        for cache in [&mut self.grid_cache, &mut self.mes_cache, &mut self.gs_cache].into_iter().flatten() {
            cache.sync(post);
        }
    }

    fn eta_model(&self) -> f64 {
        self.model_value(self.acquisition.eta.unwrap_or(f64::NAN))
    }

    fn incumbent(&self) -> f64 {
        if self.noiseless {
            self.posterior.targets().iter().copied().fold(f64::NEG_INFINITY, f64::max)
        } else {
            self.posterior.means_at_observations().into_iter().fold(f64::NEG_INFINITY, f64::max)
        }
    }

    /// Observed point with the highest posterior mean, in domain units.
    pub fn best_estimate(&self) -> Option<Vec<f64>> {
        let means = self.posterior.means_at_observations();
        let i = argmax(&means)?;
        let mut x = self.domain.from_unit(&self.posterior.inputs()[i]);
        self.domain.snap(&mut x);
        Some(x)
    }

    fn score(&self, kind: AcquisitionKind, mean: f64, std: f64, beta_sqrt: f64, target: f64) -> f64 {
        match kind {
            AcquisitionKind::Ucb => mean + beta_sqrt * std,
            AcquisitionKind::Pi => pi_value(mean, std, target),
            AcquisitionKind::Ei | AcquisitionKind::Eg => improvement_value(mean, std, target),
            AcquisitionKind::Pg => pg_score(mean, std, target),
            _ => unreachable!("discrete acquisitions are not scored pointwise"),
        }
    }

    /// Seeded candidate set for the discrete rules, in unit coordinates,
    /// with the grid indices when the domain is a grid.
    fn candidates(&mut self) -> (Vec<Vec<f64>>, Option<Vec<usize>>) {
        let limit = self.acquisition.candidate_limit;
        match &self.unit_grid {
            Some(g) => {
                let idx = subsample(g.len(), limit, &mut self.rng);
                (idx.iter().map(|&i| g[i].clone()).collect(), Some(idx))
            }
            None => {
                let d = self.domain.dim();
                let pts = (0..limit).map(|_| (0..d).map(|_| self.rng.random::<f64>()).collect()).collect();
                (pts, None)
            }
        }
    }

    /// Fixed per-episode point set for max-value fits: the grid itself when
    /// small enough, else a seeded subset or uniform sample.
    fn fit_set(&mut self, size: usize) -> Result<Option<GridPosterior>> {
        if let Some(g) = &self.unit_grid {
            if g.len() <= size {
                return Ok(None);
            }
            let idx = subsample(g.len(), size, &mut self.rng);
            let pts = idx.into_iter().map(|i| g[i].clone()).collect();
            return Ok(Some(GridPosterior::new(pts, &self.posterior)?));
        }
        let d = self.domain.dim();
        let pts = (0..size).map(|_| (0..d).map(|_| self.rng.random::<f64>()).collect()).collect();
        Ok(Some(GridPosterior::new(pts, &self.posterior)?))
    }

    fn mes_max_samples(&mut self) -> Result<Vec<f64>> {
        let k = self.acquisition.max_samples;
        let cache = self.mes_cache.as_ref().or(self.grid_cache.as_ref()).expect("fit set exists");
        let means = cache.means().to_vec();
        let stds: Vec<f64> = (0..cache.len()).map(|i| cache.std(i)).collect();
        sample_max_values_from(&means, &stds, k, &mut self.rng)
    }

    /// Chooses the next point (unit coordinates) and, on grid domains, its
    /// grid index.
    pub fn select_next(&mut self, beta_sqrt: f64) -> Result<(Vec<f64>, Option<usize>)> {
        self.sync_caches();
        if self.algorithm.is_elimination() {
            let grid = self.grid_cache.as_ref().expect("elimination has a grid");
            let active = self.active.as_ref().expect("elimination has a candidate set");
            if active.is_empty() {
                return Err(Error::DomainExhausted);
            }
            let mut best = active[0];
            let mut best_v = grid.variance(best);
            for &g in &active[1..] {
                let v = grid.variance(g);
                if v > best_v {
                    best = g;
                    best_v = v;
                }
            }
            return Ok((grid.point(best).to_vec(), Some(best)));
        }
        let kind = self.acquisition.kind;
        let target = match kind {
            AcquisitionKind::Pi | AcquisitionKind::Ei => self.incumbent(),
            AcquisitionKind::Pg | AcquisitionKind::Eg | AcquisitionKind::Sts | AcquisitionKind::Gs => self.eta_model(),
            _ => 0.0,
        };
        match kind {
            AcquisitionKind::Ucb
            | AcquisitionKind::Pi
            | AcquisitionKind::Ei
            | AcquisitionKind::Pg
            | AcquisitionKind::Eg => {
                if let Some(grid) = &self.grid_cache {
                    let mut scores = Vec::with_capacity(grid.len());
                    for g in 0..grid.len() {
                        let (m, s) = (grid.mean(g), grid.std(g));
                        let v = if kind == AcquisitionKind::Ucb {
                            match self.bound_cache.as_mut() {
                                Some(c) => c.intersect(g, m + beta_sqrt * s, m - beta_sqrt * s).0,
                                None => m + beta_sqrt * s,
                            }
                        } else {
                            self.score(kind, m, s, beta_sqrt, target)
                        };
                        scores.push(v);
                    }
                    let i = argmax(&scores).ok_or_else(|| Error::numerical("acquisition was NaN everywhere"))?;
                    Ok((grid.point(i).to_vec(), Some(i)))
                } else {
                    let post = &self.posterior;
                    let f = |u: &[f64]| {
                        let (m, v) = post.predict(u);
                        let s = v.sqrt();
                        match kind {
                            AcquisitionKind::Ucb => m + beta_sqrt * s,
                            AcquisitionKind::Pi => pi_value(m, s, target),
                            AcquisitionKind::Ei | AcquisitionKind::Eg => improvement_value(m, s, target),
                            _ => pg_score(m, s, target),
                        }
                    };
                    let x = maximize_in_unit_cube(f, self.domain.dim(), SEARCH_RESTARTS, &mut self.rng);
                    Ok((x, None))
                }
            }
            AcquisitionKind::Ts | AcquisitionKind::Sts => {
                let (pts, idx) = self.candidates();
                let (mean, cov) = self.posterior.joint(&pts)?;
                let draw = sample_mvn(&mean, &cov, &mut self.rng)?;
                let pick = if kind == AcquisitionKind::Ts {
                    argmax(&draw)
                } else {
                    let center = match &self.acquisition.sts_center {
                        Some(c) => self.domain.to_unit(c),
                        None => vec![0.5; self.domain.dim()],
                    };
                    sts_pick(&draw, &pts, target, &center)
                }
                .ok_or_else(|| Error::numerical("posterior draw was NaN"))?;
                Ok((pts[pick].clone(), idx.map(|v| v[pick])))
            }
            AcquisitionKind::Mes => {
                if self.mes_cache.is_none() {
                    self.mes_cache = self.fit_set(self.acquisition.mes_grid_size)?;
                }
                let ystar = self.mes_max_samples()?;
                if let Some(grid) = &self.grid_cache {
                    let scores: Vec<f64> = (0..grid.len()).map(|g| mes_value(grid.mean(g), grid.std(g), &ystar)).collect();
                    let i = argmax(&scores).ok_or_else(|| Error::numerical("MES was NaN everywhere"))?;
                    Ok((grid.point(i).to_vec(), Some(i)))
                } else {
                    let (pts, _) = self.candidates();
                    let scores: Vec<f64> = pts
                        .iter()
                        .map(|p| {
                            let (m, v) = self.posterior.predict(p);
                            mes_value(m, v.sqrt(), &ystar)
                        })
                        .collect();
                    let i = argmax(&scores).ok_or_else(|| Error::numerical("MES was NaN everywhere"))?;
                    Ok((pts[i].clone(), None))
                }
            }
            AcquisitionKind::Gs => {
                if self.gs_cache.is_none() {
                    self.gs_cache = self.fit_set(self.acquisition.gs_grid_size)?;
                }
                let (pts, idx) = self.candidates();
                let fit = self.gs_cache.as_ref().or(self.grid_cache.as_ref()).expect("fit set exists");
                let scores = gs_scores(
                    &self.posterior,
                    &pts,
                    fit,
                    target,
                    self.acquisition.gs_fantasies,
                    self.acquisition.max_samples,
                    &mut self.rng,
                )?;
                let s: Vec<f64> = scores.iter().map(|p| p.0).collect();
                let pick = if s.iter().all(|&v| v == 0.0) {
                    argmax(&scores.iter().map(|p| p.1).collect::<Vec<_>>())
                } else {
                    argmax(&s)
                }
                .ok_or_else(|| Error::numerical("GS scores were NaN"))?;
                Ok((pts[pick].clone(), idx.map(|v| v[pick])))
            }
        }
    }

    /// Recomputes the elimination candidate set from the current posterior
    /// with half-width `beta_sqrt`.
    pub fn update_candidates(&mut self, beta_sqrt: f64) -> std::result::Result<usize, Termination> {
        self.sync_caches();
        let grid = self.grid_cache.as_ref().expect("elimination has a grid");
        let n = grid.len();
        let mut ucb = Vec::with_capacity(n);
        let mut lcb = Vec::with_capacity(n);
        for g in 0..n {
            let (m, s) = (grid.mean(g), grid.std(g));
            let (u, l) = match self.bound_cache.as_mut() {
                Some(c) => c.intersect(g, m + beta_sqrt * s, m - beta_sqrt * s),
                None => (m + beta_sqrt * s, m - beta_sqrt * s),
            };
            ucb.push(u);
            lcb.push(l);
        }
        let threshold = match self.algorithm {
            Algorithm::GoodElimination => self.eta_model(),
            _ => lcb.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        let active = self.active.as_mut().expect("elimination has a candidate set");
        active.retain(|&g| ucb[g] >= threshold);
        if active.is_empty() {
            Err(match self.algorithm {
                Algorithm::GoodElimination => Termination::NoGoodActionCertified,
                _ => Termination::DomainExhausted,
            })
        } else {
            Ok(active.len())
        }
    }

    /// Unit-to-domain mapping with integer rounding; returns both forms.
    fn to_domain(&self, u: &[f64]) -> Vec<f64> {
        let mut x = self.domain.from_unit(u);
        self.domain.snap(&mut x);
        x
    }

    pub fn unit_domain(&self) -> &DomainSpec {
        &self.unit_domain
    }
}

/// Sorted seeded subset of `0..n` of size `min(n, limit)`.
pub fn subsample<R: Rng + ?Sized>(n: usize, limit: usize, rng: &mut R) -> Vec<usize> {
    if n <= limit {
        return (0..n).collect();
    }
    let mut idx = sample_indices(rng, n, limit).into_vec();
    idx.sort_unstable();
    idx
}

/// Multi-start maximization over `[0,1]^d`: each restart keeps the best of
/// `50·d` uniform draws, then refines it by compass search.
pub fn maximize_in_unit_cube<R: Rng + ?Sized>(
    f: impl Fn(&[f64]) -> f64,
    dim: usize,
    restarts: usize,
    rng: &mut R,
) -> Vec<f64> {
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..restarts.max(1) {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let mut v = eval(&x);
        for _ in 1..50 * dim {
            let c: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let cv = eval(&c);
            if cv > v {
                x = c;
                v = cv;
            }
        }
        let mut step = 0.05;
        let mut evals = 0;
        while step > 1e-4 && evals < 400 {
            let mut moved = false;
            for d in 0..dim {
                for dir in [1.0, -1.0] {
                    let mut c = x.clone();
                    c[d] = (c[d] + dir * step).clamp(0.0, 1.0);
                    if c[d] == x[d] {
                        continue;
                    }
                    let cv = eval(&c);
                    evals += 1;
                    if cv > v {
                        x = c;
                        v = cv;
                        moved = true;
                        break;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if best.as_ref().map_or(true, |(_, bv)| v > *bv) {
            best = Some((x, v));
        }
    }
    best.expect("at least one restart").0
}

struct Recorder<'a> {
    objective: &'a Objective,
    f_star: f64,
    gap: f64,
    eta: Option<f64>,
    ledger: RegretLedger,
    rows: Vec<RoundRecord>,
    first_good: Option<usize>,
    include_initial: bool,
}

impl Recorder<'_> {
    fn good(&self, f: f64) -> bool {
        match self.eta {
            Some(e) => f >= e,
            None => self.f_star - f <= self.gap,
        }
    }

    fn record(&mut self, state: &StrategyState, t: i64, x: Vec<f64>, y: f64, beta_sqrt: f64, active: Option<usize>) {
        let f = self.objective.eval(&x);
        let regret = if t > 0 || self.include_initial {
            self.ledger.record_round(self.f_star, f)
        } else {
            let mut row = self.ledger.row();
            row.r = (self.f_star - f).max(0.0);
            row
        };
        let good = self.good(f);
        if good && self.first_good.is_none() {
            self.first_good = Some(t.max(0) as usize);
        }
        let estimate = state.best_estimate().unwrap_or_else(|| x.clone());
        let estimate_value = self.objective.eval(&estimate);
        self.rows.push(RoundRecord {
            t,
            x,
            y,
            f,
            regret,
            good,
            estimate_good: self.good(estimate_value),
            simple_regret: simple_regret(self.f_star, estimate_value),
            estimate,
            estimate_value,
            beta_sqrt,
            info_gain: state.posterior.information_gain(),
            active,
        });
    }
}

fn failure(e: &Error) -> Termination {
    match e {
        Error::DomainExhausted => Termination::DomainExhausted,
        Error::Objective(_) | Error::Input(_) => Termination::ObjectiveError,
        _ => Termination::NumericalError,
    }
}

/// Runs one episode: initial design, then up to `horizon` rounds.
pub fn run_episode(spec: &EpisodeSpec) -> Result<EpisodeTrace> {
    let objective = &spec.objective;
    let f_star = objective.regret_reference().ok_or_else(|| {
        Error::config("objective", format!("{} has no known maximum for regret accounting", objective.name()))
    })?;
    let mut acq = spec.acquisition.clone();
    acq.eta = spec.eta.or(acq.eta);
    let noiseless = objective.noise() == 0.0;
    let mut state = StrategyState::new(
        spec.algorithm,
        acq,
        objective.domain(),
        spec.kernel,
        spec.lambda,
        spec.beta,
        noiseless,
        spec.refit_every.is_some() && spec.standardize,
        spec.selection_seed,
    )?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
    let mut rec = Recorder {
        objective,
        f_star,
        gap: spec.gap,
        eta: spec.eta,
        ledger: RegretLedger::new(spec.gap),
        rows: Vec::new(),
        first_good: None,
        include_initial: spec.regret_includes_initial,
    };
    let mut termination = Termination::Completed;
    let mut error = None;

    let init = spec.initial_design.len() as i64;
    for (i, x0) in spec.initial_design.iter().enumerate() {
        let mut x = x0.clone();
        objective.domain().snap(&mut x);
        let outcome = objective.observe(&x, &mut noise_rng).and_then(|y| state.observe(&x, y, false).map(|_| y));
        match outcome {
            Ok(y) => rec.record(&state, i as i64 - init + 1, x, y, 0.0, state.active().map(|a| a.len())),
            Err(e) => {
                termination = failure(&e);
                error = Some(e.to_string());
                break;
            }
        }
    }
    let stop_early = spec.early_stop && noiseless;
    if error.is_none() && stop_early && rec.first_good.is_some() {
        termination = Termination::EarlyStopGood;
    }

    if termination == Termination::Completed {
        for t in 1..=spec.horizon {
            let step = (|| -> Result<Option<Termination>> {
                if let Some(every) = spec.refit_every {
                    if every > 0 && (t - 1) % every == 0 {
                        state.refit(&spec.hyper_bounds, spec.fit_restarts)?;
                    }
                }
                let beta_sqrt = state.beta_sqrt(t)?;
                let (u, _) = state.select_next(beta_sqrt)?;
                let x = state.to_domain(&u);
                let y = objective.observe(&x, &mut noise_rng)?;
                state.observe(&x, y, true)?;
                let mut active = None;
                let mut stop = None;
                if spec.algorithm.is_elimination() {
                    let next = state.beta_sqrt(t + 1)?;
                    match state.update_candidates(next) {
                        Ok(n) => active = Some(n),
                        Err(reason) => {
                            active = Some(0);
                            stop = Some(reason);
                        }
                    }
                }
                rec.record(&state, t as i64, x, y, beta_sqrt, active);
                if stop.is_none() && stop_early && rec.first_good.is_some() {
                    stop = Some(Termination::EarlyStopGood);
                }
                Ok(stop)
            })();
            match step {
                Ok(None) => {}
                Ok(Some(reason)) => {
                    termination = reason;
                    break;
                }
                Err(e) => {
                    termination = failure(&e);
                    error = Some(e.to_string());
                    break;
                }
            }
        }
    }
    Ok(EpisodeTrace {
        rows: rec.rows,
        termination,
        error,
        eta: spec.eta,
        f_star,
        ledger: rec.ledger,
        first_good: rec.first_good,
        final_kernel: *state.posterior.kernel(),
    })
}
