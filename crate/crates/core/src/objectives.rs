//! Benchmark objectives in maximization form, GP-draw objectives on grids,
//! observation noise and good-action thresholds.

use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{DomainSpec, KernelFamily, KernelSpec};
use crate::linalg::Cholesky;

/// Built-in objective names with their canonical domains.
pub const REGISTRY: &[(&str, &str)] = &[
    ("ackley", "negated Ackley on [-32.768, 32.768]^d (dim, default 2); max 0 at the origin"),
    ("eggholder", "negated Eggholder on [-512, 512]^2; max 959.6407 at (512, 404.2319)"),
    ("keane", "Keane bump sin²(x1-x2)sin²(x1+x2)/sqrt(x1²+x2²) on [0, 10]^2; max 0.673668"),
    ("dropwave", "negated Dropwave on [-5.12, 5.12]^2; max 1 at the origin"),
    ("shifted_dropwave", "Dropwave recentred at the corner (-5.12, 5.12) on [-5.12, 5.12]^2; max 1"),
    ("alpine", "negated Alpine N.1 on [-10, 10]^d (dim, default 2); max 0 at the origin"),
    ("hartmann3", "negated Hartmann-3 on [0, 1]^3; max 3.86278"),
    ("gp_draw", "fixed GP sample on a grid over [0, 1]^d (default SE l=0.1, 50x50); max over the grid"),
];

/// Where the shifted Dropwave places its optimum.
pub const SHIFTED_DROPWAVE_CENTER: [f64; 2] = [-5.12, 5.12];

const HARTMANN3_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN3_A: [[f64; 3]; 4] = [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]];
const HARTMANN3_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

pub fn ackley(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / d;
    20.0 * (-0.2 * sq.sqrt()).exp() + cs.exp() - 20.0 - E
}

pub fn eggholder(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    (b + 47.0) * (b + a / 2.0 + 47.0).abs().sqrt().sin() + a * (a - (b + 47.0)).abs().sqrt().sin()
}

pub fn keane(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    let r = (a * a + b * b).sqrt();
    if r == 0.0 {
        return 0.0;
    }
    (a - b).sin().powi(2) * (a + b).sin().powi(2) / r
}

pub fn dropwave(x: &[f64]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    (1.0 + (12.0 * r2.sqrt()).cos()) / (0.5 * r2 + 2.0)
}

pub fn shifted_dropwave(x: &[f64]) -> f64 {
    dropwave(&[x[0] - SHIFTED_DROPWAVE_CENTER[0], x[1] - SHIFTED_DROPWAVE_CENTER[1]])
}

pub fn alpine(x: &[f64]) -> f64 {
    -x.iter().map(|v| (v * v.sin() + 0.1 * v).abs()).sum::<f64>()
}

pub fn hartmann3(x: &[f64]) -> f64 {
    (0..4)
        .map(|i| {
            let e: f64 = (0..3).map(|j| HARTMANN3_A[i][j] * (x[j] - HARTMANN3_P[i][j]).powi(2)).sum();
            HARTMANN3_ALPHA[i] * (-e).exp()
        })
        .sum()
}

type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Evaluator {
    Closed(fn(&[f64]) -> f64),
    /// Values at every grid point, in grid index order.
    Table(Arc<Vec<f64>>),
    Custom(CustomFn),
}

/// A deterministic function `f` on a domain plus an observation-noise level.
#[derive(Clone)]
pub struct Objective {
    name: String,
    domain: DomainSpec,
    eval: Evaluator,
    known_max: Option<f64>,
    noise: f64,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("known_max", &self.known_max)
            .field("noise", &self.noise)
            .finish_non_exhaustive()
    }
}

impl Objective {
    /// A user-supplied function, mainly for tests and the C bindings.
    pub fn custom(
        name: impl Into<String>,
        domain: DomainSpec,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        known_max: Option<f64>,
    ) -> Result<Self> {
        domain.validate()?;
        Ok(Objective {
            name: name.into(),
            domain,
            eval: Evaluator::Custom(Arc::new(f)),
            known_max,
            noise: 0.0,
        })
    }

    /// Grid-tabulated objective; `values[i]` is `f` at grid point `i`.
    pub fn from_table(name: impl Into<String>, domain: DomainSpec, values: Vec<f64>) -> Result<Self> {
        let n = domain
            .grid_len()
            .ok_or_else(|| Error::input("a tabulated objective needs a grid domain"))?;
        if values.len() != n {
            return Err(Error::input(format!("table has {} values for a grid of {n}", values.len())));
        }
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Objective {
            name: name.into(),
            domain,
            eval: Evaluator::Table(Arc::new(values)),
            known_max: Some(max),
            noise: 0.0,
        })
    }

    pub fn with_noise(mut self, noise: f64) -> Result<Self> {
        if !(noise >= 0.0) || !noise.is_finite() {
            return Err(Error::input(format!("noise std must be nonnegative, got {noise}")));
        }
        self.noise = noise;
        Ok(self)
    }

    /// Replaces the domain, keeping the function (e.g. to add a grid).
    pub fn with_domain(mut self, domain: DomainSpec) -> Result<Self> {
        domain.validate()?;
        if domain.dim() != self.domain.dim() {
            return Err(Error::input("replacement domain changes the dimension"));
        }
        if matches!(self.eval, Evaluator::Table(_)) && domain.grid != self.domain.grid {
            return Err(Error::input("a tabulated objective's grid cannot be changed"));
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn known_max(&self) -> Option<f64> {
        self.known_max
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// True value `f(x)`; tabulated objectives read the nearest grid point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.eval {
            Evaluator::Closed(f) => f(x),
            Evaluator::Custom(f) => f(x),
            Evaluator::Table(v) => v[self.domain.nearest_grid_index(x).expect("table objective has a grid")],
        }
    }

    /// `f(x) + σ z` with `z` standard normal.
    pub fn observe<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(Error::input(format!("point {x:?} lies outside the domain")));
        }
        let f = self.eval(x);
        if !f.is_finite() {
            return Err(Error::Objective(format!("{} returned {f} at {x:?}", self.name)));
        }
        if self.noise > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            Ok(f + self.noise * z)
        } else {
            Ok(f)
        }
    }

    pub fn is_good(&self, eta: f64, x: &[f64]) -> bool {
        self.eval(x) >= eta
    }

    /// Best value used for regret: the known maximum, else the maximum over
    /// the grid.
    pub fn regret_reference(&self) -> Option<f64> {
        self.known_max.or_else(|| {
            self.domain
                .grid_points()
                .map(|pts| pts.iter().map(|p| self.eval(p)).fold(f64::NEG_INFINITY, f64::max))
        })
    }

    /// Number of 4-connected (grid-adjacent) components of `{f ≥ η}` on a
    /// grid domain.
    pub fn good_regions(&self, eta: f64) -> Option<usize> {
        let g = self.domain.grid.clone()?;
        let n: usize = g.iter().product();
        let good: Vec<bool> = (0..n)
            .map(|i| self.eval(&self.domain.grid_point(i).expect("grid")) >= eta)
            .collect();
        let mut strides = vec![1usize; g.len()];
        for d in (0..g.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * g[d + 1];
        }
        let mut seen = vec![false; n];
        let mut regions = 0;
        for start in 0..n {
            if !good[start] || seen[start] {
                continue;
            }
            regions += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                for d in 0..g.len() {
                    let k = (i / strides[d]) % g[d];
                    let mut nb = Vec::with_capacity(2);
                    if k > 0 {
                        nb.push(i - strides[d]);
                    }
                    if k + 1 < g[d] {
                        nb.push(i + strides[d]);
                    }
                    for j in nb {
                        if good[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        Some(regions)
    }
}

/// Config-level description of an objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub name: String,
    #[serde(default)]
    pub dim: Option<usize>,
    /// Observation noise std σ.
    #[serde(default)]
    pub noise: f64,
    /// Discretize the canonical domain into this grid.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
    /// Override the canonical bounds.
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub integer_dims: Vec<usize>,
    /// Kernel of a `gp_draw` objective.
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    /// Seed of a `gp_draw` objective.
    #[serde(default)]
    pub seed: u64,
}

impl ObjectiveSpec {
    pub fn named(name: &str) -> Self {
        ObjectiveSpec {
            name: name.to_string(),
            dim: None,
            noise: 0.0,
            grid: None,
            bounds: None,
            integer_dims: Vec::new(),
            kernel: None,
            seed: 0,
        }
    }
}

pub fn make_objective(spec: &ObjectiveSpec) -> Result<Objective> {
    let fixed_dim = |want: usize| -> Result<usize> {
        match spec.dim {
            Some(d) if d != want => Err(Error::config("objective.dim", format!("{} is {want}-dimensional", spec.name))),
            _ => Ok(want),
        }
    };
    let (f, dim, half_width_or_box, known_max): (Option<fn(&[f64]) -> f64>, usize, (f64, f64), Option<f64>) =
        match spec.name.as_str() {
            "ackley" => (Some(ackley), spec.dim.unwrap_or(2), (-32.768, 32.768), Some(0.0)),
            "eggholder" => (Some(eggholder), fixed_dim(2)?, (-512.0, 512.0), Some(959.640_662_720_850_7)),
            "keane" => (Some(keane), fixed_dim(2)?, (0.0, 10.0), Some(0.673_667_521_146_855)),
            "dropwave" => (Some(dropwave), fixed_dim(2)?, (-5.12, 5.12), Some(1.0)),
            "shifted_dropwave" => (Some(shifted_dropwave), fixed_dim(2)?, (-5.12, 5.12), Some(1.0)),
            "alpine" => (Some(alpine), spec.dim.unwrap_or(2), (-10.0, 10.0), Some(0.0)),
            "hartmann3" => (Some(hartmann3), fixed_dim(3)?, (0.0, 1.0), Some(3.862_779_787_332_51)),
            "gp_draw" => (None, spec.dim.unwrap_or(2), (0.0, 1.0), None),
            other => {
                return Err(Error::config(
                    "objective.name",
                    format!("unknown objective `{other}`; see list-objectives"),
                ))
            }
        };
    if dim == 0 {
        return Err(Error::config("objective.dim", "dimension must be positive"));
    }
    let bounds = spec.bounds.clone().unwrap_or_else(|| vec![half_width_or_box; dim]);
    if bounds.len() != dim {
        return Err(Error::config("objective.bounds", format!("expected {dim} intervals")));
    }
    let grid = match (&spec.grid, f) {
        (Some(g), _) => Some(g.clone()),
        (None, None) => Some(vec![50; dim]),
        (None, Some(_)) => None,
    };
    let domain = DomainSpec {
        bounds,
        grid,
        integer_dims: spec.integer_dims.clone(),
    };
    domain.validate().map_err(|e| Error::config("objective", e.to_string()))?;
    let obj = match f {
        Some(f) => Objective {
            name: spec.name.clone(),
            domain,
            eval: Evaluator::Closed(f),
            known_max,
            noise: 0.0,
        },
        None => {
            let kernel = spec.kernel.unwrap_or(KernelSpec::squared_exponential(0.1, 1.0));
            kernel.validate().map_err(|e| Error::config("objective.kernel", e.to_string()))?;
            let values = gp_draw_values(&kernel, &domain, spec.seed)?;
            Objective::from_table("gp_draw", domain, values)?
        }
    };
    obj.with_noise(spec.noise)
        .map_err(|e| Error::config("objective.noise", e.to_string()))
}

/// One joint GP sample at every grid point. Kernel distances are measured
/// in the unit cube. SE factorizes over dimensions on a product grid, so
/// the draw is `(⊗_d L_d) z`; other kernels take a full factorization.
pub fn gp_draw_values(kernel: &KernelSpec, domain: &DomainSpec, seed: u64) -> Result<Vec<f64>> {
    let g = domain
        .grid
        .clone()
        .ok_or_else(|| Error::input("gp_draw needs a grid domain"))?;
    let n: usize = g.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    match kernel.family {
        KernelFamily::SquaredExponential => {
            let mut stride_after = n;
            for (d, &nd) in g.iter().enumerate() {
                let coords: Vec<f64> = (0..nd)
                    .map(|k| if nd == 1 { 0.5 } else { k as f64 / (nd - 1) as f64 })
                    .collect();
                let unit = KernelSpec::squared_exponential(kernel.lengthscale, 1.0);
                let (l, _) = Cholesky::factor_escalating(nd, |i, j| unit.from_distance((coords[i] - coords[j]).abs()))
                    .ok_or_else(|| Error::numerical(format!("1-D factor of axis {d} failed")))?;
                stride_after /= nd;
                apply_along_axis(&mut z, &l, nd, stride_after);
            }
            let s = kernel.scale;
            z.iter_mut().for_each(|v| *v *= s);
            Ok(z)
        }
        KernelFamily::Matern => {
            let unit_domain = DomainSpec::unit_cube(g.len()).with_grid(g)?;
            let pts = unit_domain.grid_points().expect("grid");
            let (l, _) = Cholesky::factor_escalating(n, |i, j| kernel.eval_unchecked(&pts[i], &pts[j]))
                .ok_or_else(|| Error::numerical("grid kernel matrix could not be factored"))?;
            Ok(l.mul_vec(&z))
        }
    }
}

/// Multiplies the tensor `z` by `l` along the axis with length `len` and
/// inner stride `stride`.
fn apply_along_axis(z: &mut [f64], l: &Cholesky, len: usize, stride: usize) {
    let outer = z.len() / (len * stride);
    let mut buf = vec![0.0; len];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * len * stride + s;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = z[base + k * stride];
            }
            for i in 0..len {
                let row = l.row(i);
                z[base + i * stride] = row.iter().zip(&buf).map(|(a, b)| a * b).sum();
            }
        }
    }
}

/// How the good-action threshold `η` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdPolicy {
    Explicit {
        value: f64,
    },
    /// Roughly a fraction `xi` of the domain is good.
    Quantile {
        xi: f64,
        #[serde(default = "default_quantile_samples")]
        samples: usize,
    },
    OffsetFromMax {
        delta: f64,
    },
}

fn default_quantile_samples() -> usize {
    10_000
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdPolicy::Explicit { value } if value.is_nan() => {
                Err(Error::config("threshold.value", "must be a number"))
            }
            ThresholdPolicy::Quantile { xi, samples } => {
                if !(xi > 0.0 && xi <= 1.0) {
                    return Err(Error::config("threshold.xi", format!("must lie in (0, 1], got {xi}")));
                }
                if samples < 1000 {
                    return Err(Error::config("threshold.samples", format!("need at least 1000, got {samples}")));
                }
                Ok(())
            }
            ThresholdPolicy::OffsetFromMax { delta } if !(delta >= 0.0) => {
                Err(Error::config("threshold.delta", format!("must be nonnegative, got {delta}")))
            }
            _ => Ok(()),
        }
    }
}

pub fn resolve_threshold<R: Rng + ?Sized>(policy: &ThresholdPolicy, obj: &Objective, rng: &mut R) -> Result<f64> {
    policy.validate()?;
    match *policy {
        ThresholdPolicy::Explicit { value } => Ok(value),
        ThresholdPolicy::OffsetFromMax { delta } => obj
            .known_max()
            .map(|m| m - delta)
            .ok_or_else(|| Error::config("threshold", format!("{} has no known maximum", obj.name()))),
        ThresholdPolicy::Quantile { xi, samples } => {
            let mut vals: Vec<f64> = (0..samples).map(|_| obj.eval(&obj.domain().sample(rng))).collect();
            vals.sort_by(f64::total_cmp);
            let idx = ((1.0 - xi) * (samples - 1) as f64).floor() as usize;
            Ok(vals[idx.min(samples - 1)])
        }
    }
}
