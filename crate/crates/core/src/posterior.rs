//! Exact GP posterior with an incrementally grown Cholesky factor.
//!
//! The state keeps `L` with `L Lᵀ = K_t + λI` and `α = L⁻¹ y`, so that
//!
//! * `μ_t(x) = vᵀα` and `σ_t²(x) = k(x,x) − vᵀv` with `v = L⁻¹ k_t(x)`,
//! * appending an observation borders `L` with one row in `O(n²)`.
//!
//! [`GridPosterior`] extends the same recursion to a fixed candidate set,
//! maintaining `V = L⁻¹ K_{X,G}` row by row so that each append updates the
//! mean and variance of every candidate in `O(n·|G|)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{sq_distance, KernelSpec};
use crate::linalg::{Cholesky, Matrix, JITTER_LADDER};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
/// Smallest log-space step of the hyperparameter search.
const FIT_TOLERANCE: f64 = 1e-2;
/// Likelihood evaluations per search start.
const FIT_EVALS: usize = 120;

#[derive(Debug, Clone)]
pub struct PosteriorState {
    kernel: KernelSpec,
    noise: f64,
    jitter: f64,
    dim: Option<usize>,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    factor: Cholesky,
    alpha: Vec<f64>,
    generation: u64,
    targets_version: u64,
}

impl PosteriorState {
    /// Empty posterior with fictitious noise variance `noise` (λ).
    pub fn new(kernel: KernelSpec, noise: f64) -> Result<Self> {
        kernel.validate()?;
        if !(noise > 0.0) || !noise.is_finite() {
            return Err(Error::input(format!("noise parameter λ must be positive, got {noise}")));
        }
        Ok(PosteriorState {
            kernel,
            noise,
            jitter: 0.0,
            dim: None,
            xs: Vec::new(),
            ys: Vec::new(),
            factor: Cholesky::new(),
            alpha: Vec::new(),
            generation: 0,
            targets_version: 0,
        })
    }

    /// Batch construction from scratch.
    pub fn from_data(kernel: KernelSpec, noise: f64, xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        let mut s = PosteriorState::new(kernel, noise)?;
        if xs.len() != ys.len() {
            return Err(Error::input("inputs and observations differ in length"));
        }
        if let Some(first) = xs.first() {
            if xs.iter().any(|x| x.len() != first.len()) {
                return Err(Error::input("observed points have inconsistent dimensions"));
            }
            s.dim = Some(first.len());
        }
        s.xs = xs;
        s.ys = ys;
        s.refactor()?;
        Ok(s)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Diagonal regularization actually in the factor: λ plus any jitter.
    pub fn effective_noise(&self) -> f64 {
        self.noise + self.jitter
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn targets(&self) -> &[f64] {
        &self.ys
    }

    pub fn factor(&self) -> &Cholesky {
        &self.factor
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Bumped whenever the factor is rebuilt from scratch.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Bumped whenever the targets are replaced wholesale.
    pub fn targets_version(&self) -> u64 {
        self.targets_version
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        match self.dim {
            Some(d) if d != x.len() => Err(Error::input(format!(
                "dimension mismatch: state has {d}, point has {}",
                x.len()
            ))),
            _ => Ok(()),
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let n = self.xs.len();
        let kernel = self.kernel;
        let xs = &self.xs;
        let noise = self.noise;
        let entry = |i: usize, j: usize| {
            let k = kernel.eval_unchecked(&xs[i], &xs[j]);
            if i == j {
                k + noise
            } else {
                k
            }
        };
        // Keep any jitter that was already needed; escalate from there.
        let start = self.jitter;
        let found = JITTER_LADDER
            .iter()
            .filter(|&&j| j >= start)
            .find_map(|&j| Cholesky::factor_with(n, j, entry).map(|c| (c, j)));
        match found {
            Some((factor, jitter)) => {
                self.factor = factor;
                self.jitter = jitter;
                self.alpha = self.factor.solve_lower(&self.ys);
                self.generation += 1;
                Ok(())
            }
            None => Err(Error::numerical(format!(
                "kernel matrix of {n} points is not positive definite even with jitter"
            ))),
        }
    }

    /// Adds `(x, y)`. Borders the factor in `O(n²)`; on breakdown the whole
    /// factor is recomputed with escalating jitter.
    pub fn append_observation(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.check_dim(x)?;
        if !y.is_finite() {
            return Err(Error::input("observation must be finite"));
        }
        let kvec: Vec<f64> = self.xs.iter().map(|xi| self.kernel.eval_unchecked(xi, x)).collect();
        let diag = self.kernel.variance() + self.noise + self.jitter;
        self.dim = Some(x.len());
        self.xs.push(x.to_vec());
        self.ys.push(y);
        if self.factor.push(&kvec, diag) {
            let n = self.factor.dim() - 1;
            let row = self.factor.row(n);
            let s: f64 = row[..n].iter().zip(&self.alpha).map(|(l, a)| l * a).sum();
            self.alpha.push((y - s) / row[n]);
            Ok(())
        } else {
            self.refactor()
        }
    }

    /// Replaces all targets (e.g. after re-standardization); the factor is
    /// unchanged since it does not depend on `y`.
    pub fn set_targets(&mut self, ys: Vec<f64>) -> Result<()> {
        if ys.len() != self.xs.len() {
            return Err(Error::input("target count does not match observation count"));
        }
        self.alpha = self.factor.solve_lower(&ys);
        self.ys = ys;
        self.targets_version += 1;
        Ok(())
    }

    /// Same data under a different kernel.
    pub fn with_kernel(&self, kernel: KernelSpec) -> Result<Self> {
        let mut s = PosteriorState::from_data(kernel, self.noise, self.xs.clone(), self.ys.clone())?;
        s.generation = self.generation + 1;
        s.targets_version = self.targets_version + 1;
        Ok(s)
    }

    /// `L⁻¹ k_t(x)`.
    pub fn cross(&self, x: &[f64]) -> Vec<f64> {
        let kvec: Vec<f64> = self.xs.iter().map(|xi| self.kernel.eval_unchecked(xi, x)).collect();
        self.factor.solve_lower(&kvec)
    }

    /// Mean and variance without the dimension check.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let v = self.cross(x);
        let mean = v.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let var = self.kernel.variance() - v.iter().map(|a| a * a).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Posterior mean and variance at `x`; the variance is clamped at 0.
    pub fn posterior_at(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(x)?;
        Ok(self.predict(x))
    }

    /// `(K_t + λI)⁻¹ y`.
    pub fn weights(&self) -> Vec<f64> {
        self.factor.solve_upper(&self.alpha)
    }

    /// Posterior means at the observed inputs: `y − λ_eff (K + λ_eff I)⁻¹ y`.
    pub fn means_at_observations(&self) -> Vec<f64> {
        let w = self.weights();
        let lam = self.effective_noise();
        self.ys.iter().zip(&w).map(|(y, w)| y - lam * w).collect()
    }

    /// Joint posterior mean vector and covariance matrix over `points`.
    pub fn joint(&self, points: &[Vec<f64>]) -> Result<(Vec<f64>, Matrix)> {
        for p in points {
            self.check_dim(p)?;
        }
        let cross: Vec<Vec<f64>> = points.iter().map(|p| self.cross(p)).collect();
        let mean = cross
            .iter()
            .map(|v| v.iter().zip(&self.alpha).map(|(a, b)| a * b).sum())
            .collect();
        let m = points.len();
        let mut cov = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let prior = self.kernel.eval_unchecked(&points[i], &points[j]);
                let c = prior - cross[i].iter().zip(&cross[j]).map(|(a, b)| a * b).sum::<f64>();
                cov.set(i, j, c);
                cov.set(j, i, c);
            }
        }
        Ok((mean, cov))
    }

    /// One joint draw of `f` at `points` from the posterior.
    pub fn sample_posterior_on<R: Rng + ?Sized>(&self, points: &[Vec<f64>], rng: &mut R) -> Result<Vec<f64>> {
        if points.is_empty() {
            return Err(Error::input("cannot sample on an empty point set"));
        }
        let (mean, cov) = self.joint(points)?;
        sample_mvn(&mean, &cov, rng)
    }

    /// `−½ yᵀ(K+λI)⁻¹y − ½ ln det(K+λI) − (n/2) ln 2π`.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::input("log marginal likelihood needs at least one observation"));
        }
        let n = self.len() as f64;
        let quad: f64 = self.alpha.iter().map(|a| a * a).sum();
        Ok(-0.5 * quad - 0.5 * self.factor.log_det() - 0.5 * n * LN_2PI)
    }

    /// Running information gain `½ ln det(I + λ⁻¹K)` read off the factor.
    pub fn information_gain(&self) -> f64 {
        let lam = self.effective_noise();
        (0..self.factor.dim())
            .map(|i| self.factor.diag(i).ln() - 0.5 * lam.ln())
            .sum()
    }

    /// Multi-start coordinate search over `(ln l, ln scale)` maximizing the
    /// log marginal likelihood within `bounds`. The incumbent is first
    /// clamped into the bounds; the result is never worse than that.
    pub fn fit_hyperparameters<R: Rng + ?Sized>(
        &self,
        bounds: &HyperBounds,
        restarts: usize,
        rng: &mut R,
    ) -> KernelSpec {
        let mut incumbent = self.kernel;
        incumbent.lengthscale = incumbent.lengthscale.clamp(bounds.lengthscale.0, bounds.lengthscale.1);
        incumbent.scale = incumbent.scale.clamp(bounds.scale.0, bounds.scale.1);
        if self.is_empty() {
            return incumbent;
        }
        let y0 = self.ys[0];
        if self.ys.iter().all(|&y| y == y0) && self.len() > 1 {
            return incumbent;
        }
        let n = self.len();
        let d2 = Matrix::from_fn(n, n, |i, j| sq_distance(&self.xs[i], &self.xs[j]));
        let lml = |theta: [f64; 2]| -> f64 {
            let mut k = incumbent;
            k.lengthscale = theta[0].exp();
            k.scale = theta[1].exp();
            lml_from_distances(&k, self.noise, &d2, &self.ys).unwrap_or(f64::NEG_INFINITY)
        };
        let lo = [bounds.lengthscale.0.ln(), bounds.scale.0.ln()];
        let hi = [bounds.lengthscale.1.ln(), bounds.scale.1.ln()];
        let clamp = |t: [f64; 2]| [t[0].clamp(lo[0], hi[0]), t[1].clamp(lo[1], hi[1])];

        let start0 = clamp([incumbent.lengthscale.ln(), incumbent.scale.ln()]);
        let incumbent_value = lml(start0);
        let mut best = (start0, incumbent_value);
        let mut starts = vec![start0];
        for _ in 0..restarts {
            starts.push([
                if hi[0] > lo[0] { rng.random_range(lo[0]..hi[0]) } else { lo[0] },
                if hi[1] > lo[1] { rng.random_range(lo[1]..hi[1]) } else { lo[1] },
            ]);
        }
        for start in starts {
            let mut theta = start;
            let mut value = lml(theta);
            let mut step = [0.25 * (hi[0] - lo[0]), 0.25 * (hi[1] - lo[1])];
            let mut evals = 0;
            while step.iter().any(|&s| s > FIT_TOLERANCE) && evals < FIT_EVALS {
                let mut moved = false;
                for c in 0..2 {
                    if step[c] <= FIT_TOLERANCE {
                        continue;
                    }
                    for dir in [1.0, -1.0] {
                        let mut cand = theta;
                        cand[c] += dir * step[c];
                        let cand = clamp(cand);
                        if cand == theta {
                            continue;
                        }
                        let v = lml(cand);
                        evals += 1;
                        if v > value {
                            theta = cand;
                            value = v;
                            moved = true;
                            break;
                        }
                    }
                }
                if !moved {
                    step[0] *= 0.5;
                    step[1] *= 0.5;
                }
            }
            if value > best.1 {
                best = (theta, value);
            }
        }
        if best.1 > incumbent_value {
            let mut k = incumbent;
            k.lengthscale = best.0[0].exp();
            k.scale = best.0[1].exp();
            k
        } else {
            incumbent
        }
    }
}

/// Log marginal likelihood for a kernel given precomputed squared
/// distances. `None` when the matrix cannot be factored.
fn lml_from_distances(kernel: &KernelSpec, noise: f64, d2: &Matrix, ys: &[f64]) -> Option<f64> {
    let n = ys.len();
    // Lower triangle only; retries along the jitter ladder reuse it.
    let k = Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => kernel.from_sq_distance(d2.get(i, j)),
        std::cmp::Ordering::Equal => kernel.variance() + noise,
        std::cmp::Ordering::Less => 0.0,
    });
    let (chol, _) = Cholesky::factor_escalating(n, |i, j| k.get(i, j))?;
    let alpha = chol.solve_lower(ys);
    let quad: f64 = alpha.iter().map(|a| a * a).sum();
    Some(-0.5 * quad - 0.5 * chol.log_det() - 0.5 * n as f64 * LN_2PI)
}

/// Draw from `N(mean, cov)` using a jitter-escalated Cholesky factor.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &[f64], cov: &Matrix, rng: &mut R) -> Result<Vec<f64>> {
    let m = mean.len();
    let (l, _) = Cholesky::factor_escalating(m, |i, j| cov.get(i, j))
        .ok_or_else(|| Error::numerical("posterior covariance is not positive semidefinite"))?;
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    Ok(l.mul_vec(&z).iter().zip(mean).map(|(a, b)| a + b).collect())
}

/// Box constraints for hyperparameter fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub scale: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            lengthscale: (1e-3, 1.0),
            scale: (5e-2, 1.5),
        }
    }
}

impl HyperBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("lengthscale", self.lengthscale), ("scale", self.scale)] {
            if !(lo > 0.0) || !(lo <= hi) || !hi.is_finite() {
                return Err(Error::config(
                    format!("hyper_bounds.{name}"),
                    format!("need 0 < lower <= upper, got ({lo}, {hi})"),
                ));
            }
        }
        Ok(())
    }
}

/// Posterior marginals over a fixed candidate set, kept in sync with a
/// [`PosteriorState`] incrementally.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    points: Vec<Vec<f64>>,
    kernel: KernelSpec,
    proj: Vec<Vec<f64>>,
    mean: Vec<f64>,
    var: Vec<f64>,
    generation: u64,
    targets_version: u64,
}

impl GridPosterior {
    pub fn new(points: Vec<Vec<f64>>, state: &PosteriorState) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::input("candidate set is empty"));
        }
        for p in &points {
            state.check_dim(p)?;
        }
        let m = points.len();
        let kernel = *state.kernel();
        let mut g = GridPosterior {
            points,
            kernel,
            proj: Vec::new(),
            mean: vec![0.0; m],
            var: vec![kernel.variance(); m],
            generation: state.generation(),
            targets_version: state.targets_version(),
        };
        g.extend(state);
        Ok(g)
    }

    fn reset(&mut self, state: &PosteriorState) {
        self.kernel = *state.kernel();
        self.proj.clear();
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        let pv = self.kernel.variance();
        self.var.iter_mut().for_each(|v| *v = pv);
        self.generation = state.generation();
        self.targets_version = state.targets_version();
    }

    fn extend(&mut self, state: &PosteriorState) {
        let factor = state.factor();
        let alpha = state.alpha();
        for i in self.proj.len()..state.len() {
            let xi = &state.inputs()[i];
            let lrow = factor.row(i);
            let mut v: Vec<f64> = self.points.iter().map(|p| self.kernel.eval_unchecked(xi, p)).collect();
            for (j, prev) in self.proj.iter().enumerate() {
                let l = lrow[j];
                if l != 0.0 {
                    v.iter_mut().zip(prev).for_each(|(a, b)| *a -= l * b);
                }
            }
            let inv = 1.0 / lrow[i];
            let a = alpha[i];
            for ((vg, mg), sg) in v.iter_mut().zip(self.mean.iter_mut()).zip(self.var.iter_mut()) {
                *vg *= inv;
                *mg += *vg * a;
                *sg -= *vg * *vg;
            }
            self.proj.push(v);
        }
    }

    fn recompute_means(&mut self, alpha: &[f64]) {
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        for (row, a) in self.proj.iter().zip(alpha) {
            self.mean.iter_mut().zip(row).for_each(|(m, v)| *m += v * a);
        }
    }

    /// Brings the cache up to date with `state`.
    pub fn sync(&mut self, state: &PosteriorState) {
        if state.generation() != self.generation
            || state.len() < self.proj.len()
            || *state.kernel() != self.kernel
        {
            self.reset(state);
            self.extend(state);
            return;
        }
        if state.targets_version() != self.targets_version {
            self.targets_version = state.targets_version();
            self.recompute_means(&state.alpha()[..self.proj.len()]);
        }
        self.extend(state);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.var[i].max(0.0)
    }

    pub fn std(&self, i: usize) -> f64 {
        self.variance(i).sqrt()
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    /// Posterior covariance between an arbitrary point `x` (with
    /// `cross = L⁻¹ k_t(x)`) and every candidate.
    pub fn covariance_with(&self, x: &[f64], cross: &[f64]) -> Vec<f64> {
        let mut c: Vec<f64> = self.points.iter().map(|p| self.kernel.eval_unchecked(x, p)).collect();
        for (row, v) in self.proj.iter().zip(cross) {
            if *v != 0.0 {
                c.iter_mut().zip(row).for_each(|(a, b)| *a -= v * b);
            }
        }
        c
    }
}
