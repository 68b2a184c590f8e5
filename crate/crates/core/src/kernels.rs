//! Stationary kernels (squared exponential and Matérn) and the domains they
//! are evaluated on.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Distances below this are treated as exactly zero.
pub const MIN_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SquaredExponential,
    Matern,
}

/// Kernel family plus hyperparameters. The lengthscale is isotropic and
/// measured in the (unit-cube normalized) input space the GP sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscale: f64,
    /// Output scale; the kernel variance is `scale²`.
    #[serde(default = "one")]
    pub scale: f64,
    /// Matérn smoothness; ignored for the squared exponential.
    #[serde(default = "default_nu")]
    pub nu: f64,
}

fn one() -> f64 {
    1.0
}

fn default_nu() -> f64 {
    2.5
}

impl KernelSpec {
    pub fn squared_exponential(lengthscale: f64, scale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::SquaredExponential,
            lengthscale,
            scale,
            nu: default_nu(),
        }
    }

    pub fn matern(nu: f64, lengthscale: f64, scale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Matern,
            lengthscale,
            scale,
            nu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.lengthscale) {
            return Err(Error::input(format!("lengthscale must be positive, got {}", self.lengthscale)));
        }
        if !positive(self.scale) {
            return Err(Error::input(format!("kernel scale must be positive, got {}", self.scale)));
        }
        if self.family == KernelFamily::Matern && !positive(self.nu) {
            return Err(Error::input(format!("Matérn smoothness must be positive, got {}", self.nu)));
        }
        Ok(())
    }

    /// `k(x, x)`.
    pub fn variance(&self) -> f64 {
        self.scale * self.scale
    }

    /// Kernel value as a function of the Euclidean distance.
    pub fn from_distance(&self, r: f64) -> f64 {
        let r = if r < MIN_DISTANCE { 0.0 } else { r };
        let var = self.variance();
        match self.family {
            KernelFamily::SquaredExponential => {
                var * (-(r * r) / (2.0 * self.lengthscale * self.lengthscale)).exp()
            }
            KernelFamily::Matern => var * matern_correlation(self.nu, r / self.lengthscale),
        }
    }

    /// Kernel value as a function of the squared distance; avoids the square
    /// root on the squared-exponential path.
    #[inline]
    pub fn from_sq_distance(&self, d2: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                let d2 = if d2 < MIN_DISTANCE * MIN_DISTANCE { 0.0 } else { d2 };
                self.variance() * (-d2 / (2.0 * self.lengthscale * self.lengthscale)).exp()
            }
            KernelFamily::Matern => self.from_distance(d2.sqrt()),
        }
    }

    /// Unchecked evaluation; callers guarantee matching dimensions.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.from_sq_distance(sq_distance(x, y))
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::input(format!(
                "dimension mismatch: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        Ok(self.eval_unchecked(x, y))
    }
}

#[inline]
pub fn sq_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}

/// Kernel matrix `[k(p_i, p_j)]` over a nonempty point list.
pub fn kernel_matrix(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<Matrix> {
    let first = points
        .first()
        .ok_or_else(|| Error::input("kernel matrix needs at least one point"))?;
    if points.iter().any(|p| p.len() != first.len()) {
        return Err(Error::input("points have inconsistent dimensions"));
    }
    let n = points.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m.set(i, i, spec.variance());
        for j in 0..i {
            let v = spec.eval_unchecked(&points[i], &points[j]);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    Ok(m)
}

/// Matérn correlation at scaled distance `s = r / l`, unit variance.
fn matern_correlation(nu: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    const HALF: f64 = 0.5;
    if nu == HALF {
        (-s).exp()
    } else if nu == 1.5 {
        let a = 3f64.sqrt() * s;
        (1.0 + a) * (-a).exp()
    } else if nu == 2.5 {
        let a = 5f64.sqrt() * s;
        (1.0 + a + a * a / 3.0) * (-a).exp()
    } else {
        matern_general(nu, s)
    }
}

/// General-ν Matérn correlation via the modified Bessel function:
/// `2^{1-ν}/Γ(ν) · z^ν K_ν(z)`, `z = √(2ν) s`.
pub(crate) fn matern_general(nu: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    let z = (2.0 * nu).sqrt() * s;
    let log_k = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu) + nu * z.ln()
        + ln_bessel_k_scaled(nu, z)
        - z;
    log_k.exp().min(1.0)
}

/// `ln(K_ν(x) eˣ)` for `x > 0`, from the integral
/// `K_ν(x) = ∫₀^∞ exp(-x cosh t) cosh(νt) dt`. The integrand is even and
/// entire, so the trapezoid rule converges geometrically in the step.
pub(crate) fn ln_bessel_k_scaled(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let h = (0.5 / x.max(1.0).sqrt()).min(0.05);
    let ln_cosh = |u: f64| u + (-2.0 * u).exp().ln_1p() - std::f64::consts::LN_2;
    let term = |t: f64| -x * (t.cosh() - 1.0) + ln_cosh(nu.abs() * t);
    let mut terms = vec![term(0.0) + 0.5f64.ln()];
    let mut peak = terms[0];
    let mut k = 1usize;
    loop {
        let v = term(k as f64 * h);
        terms.push(v);
        if v > peak {
            peak = v;
        }
        if (v < peak - 60.0 && k > 4) || k > 200_000 {
            break;
        }
        k += 1;
    }
    let sum: f64 = terms.iter().map(|v| (v - peak).exp()).sum();
    peak + sum.ln() + h.ln()
}

/// A box domain, optionally discretized into a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub bounds: Vec<(f64, f64)>,
    /// Points per dimension; endpoints are included.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
    /// Dimensions restricted to integer values.
    #[serde(default)]
    pub integer_dims: Vec<usize>,
}

impl DomainSpec {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let d = DomainSpec {
            bounds,
            grid: None,
            integer_dims: Vec::new(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_cube(dim: usize) -> Self {
        DomainSpec {
            bounds: vec![(0.0, 1.0); dim],
            grid: None,
            integer_dims: Vec::new(),
        }
    }

    pub fn with_grid(mut self, resolution: Vec<usize>) -> Result<Self> {
        self.grid = Some(resolution);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::input("domain needs at least one dimension"));
        }
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::input(format!("dimension {i}: lower bound {lo} must be below upper bound {hi}")));
            }
        }
        if let Some(g) = &self.grid {
            if g.len() != self.bounds.len() || g.iter().any(|&r| r == 0) {
                return Err(Error::input("grid resolution must be positive for every dimension"));
            }
        }
        if self.integer_dims.iter().any(|&i| i >= self.bounds.len()) {
            return Err(Error::input("integer dimension index out of range"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_grid(&self) -> bool {
        self.grid.is_some()
    }

    pub fn grid_len(&self) -> Option<usize> {
        self.grid.as_ref().map(|g| g.iter().product())
    }

    /// Coordinate `k` of `n` evenly spaced values on `[lo, hi]`.
    fn grid_coord(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    }

    /// Grid point with flat index `idx`; the last dimension varies fastest.
    pub fn grid_point(&self, idx: usize) -> Option<Vec<f64>> {
        let g = self.grid.as_ref()?;
        let mut rem = idx;
        let mut out = vec![0.0; g.len()];
        for d in (0..g.len()).rev() {
            let k = rem % g[d];
            rem /= g[d];
            out[d] = Self::grid_coord(self.bounds[d].0, self.bounds[d].1, g[d], k);
        }
        Some(out)
    }

    pub fn grid_points(&self) -> Option<Vec<Vec<f64>>> {
        let n = self.grid_len()?;
        Some((0..n).filter_map(|i| self.grid_point(i)).collect())
    }

    /// Flat index of the grid point nearest to `x`.
    pub fn nearest_grid_index(&self, x: &[f64]) -> Option<usize> {
        let g = self.grid.as_ref()?;
        let mut idx = 0usize;
        for d in 0..g.len() {
            let (lo, hi) = self.bounds[d];
            let k = if g[d] == 1 {
                0
            } else {
                let t = (x[d] - lo) / (hi - lo) * (g[d] - 1) as f64;
                (t.round().max(0.0) as usize).min(g[d] - 1)
            };
            idx = idx * g[d] + k;
        }
        Some(idx)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.bounds).all(|(v, (lo, hi))| {
                let slack = 1e-9 * (hi - lo);
                *v >= lo - slack && *v <= hi + slack
            })
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    /// Uniform draw from the box, or a uniform grid point on grid domains.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.grid_len() {
            Some(n) => self.grid_point(rng.random_range(0..n)).expect("grid domain"),
            None => self
                .bounds
                .iter()
                .map(|(lo, hi)| rng.random_range(*lo..*hi))
                .collect(),
        }
    }

    /// Maps a domain point to the unit cube.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    /// Maps a unit-cube point back to the domain.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| lo + v * (hi - lo))
            .collect()
    }

    /// Rounds integer-constrained coordinates, then clamps into the box.
    pub fn snap(&self, x: &mut [f64]) {
        for &d in &self.integer_dims {
            x[d] = x[d].round();
        }
        for (v, (lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn se_is_normalized_at_zero_distance() {
        let k = KernelSpec::squared_exponential(0.37, 1.0);
        assert_eq!(k.eval(&[0.3, 0.1], &[0.3, 0.1]).unwrap(), 1.0);
    }

    #[test]
    fn se_closed_form_value() {
        let k = KernelSpec::squared_exponential(0.1, 1.0);
        let v = k.eval(&[0.0], &[0.1]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-12);
        assert!((v - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn matern_half_is_exponential() {
        let k = KernelSpec::matern(0.5, 1.0, 1.0);
        let v = k.eval(&[0.0, 0.0], &[0.6, 0.8]).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn general_matern_matches_half_integer_closed_forms() {
        for &nu in &[0.5, 1.5, 2.5] {
            for &s in &[1e-6, 0.01, 0.3, 1.0, 2.7, 10.0, 40.0] {
                let closed = matern_correlation(nu, s);
                let bessel = matern_general(nu, s);
                assert!(
                    (closed - bessel).abs() < 1e-9 * closed.max(1e-300) + 1e-14,
                    "nu={nu} s={s}: {closed} vs {bessel}"
                );
            }
        }
    }

    #[test]
    fn general_matern_is_between_neighbours() {
        // Smoother kernels decay more slowly at short range.
        let s = 0.4;
        let a = matern_correlation(1.5, s);
        let b = matern_correlation(2.0, s);
        let c = matern_correlation(2.5, s);
        assert!(a < b && b < c, "{a} {b} {c}");
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let k = KernelSpec::squared_exponential(0.1, 1.0);
        assert!(matches!(k.eval(&[0.0], &[0.0, 1.0]), Err(Error::Input(_))));
    }

    #[test]
    fn kernel_matrix_small_cases() {
        let k = KernelSpec::squared_exponential(0.2, 1.3);
        let m = kernel_matrix(&k, &[vec![0.5]]).unwrap();
        assert_eq!(m.get(0, 0), 1.3 * 1.3);
        let k1 = KernelSpec::squared_exponential(0.2, 1.0);
        let m = kernel_matrix(&k1, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(m.get(i, j), 1.0);
            }
        }
        assert!(kernel_matrix(&k, &[]).is_err());
    }

    #[test]
    fn kernel_matrix_matches_entrywise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = KernelSpec::matern(1.5, 0.3, 0.8);
        let pts: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random(), rng.random()]).collect();
        let m = kernel_matrix(&k, &pts).unwrap();
        assert!(m.is_symmetric());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), eval_kernel(&k, &pts[i], &pts[j]).unwrap());
            }
        }
    }

    #[test]
    fn validation_rejects_nonpositive_parameters() {
        assert!(KernelSpec::squared_exponential(0.0, 1.0).validate().is_err());
        assert!(KernelSpec::squared_exponential(1.0, -1.0).validate().is_err());
        assert!(KernelSpec::matern(0.0, 1.0, 1.0).validate().is_err());
    }

    #[test]
    fn grid_enumeration() {
        let d = DomainSpec::new(vec![(0.0, 1.0), (-1.0, 1.0)])
            .unwrap()
            .with_grid(vec![3, 5])
            .unwrap();
        assert_eq!(d.grid_len(), Some(15));
        let pts = d.grid_points().unwrap();
        assert_eq!(pts.len(), 15);
        assert_eq!(pts[0], vec![0.0, -1.0]);
        assert_eq!(pts[1], vec![0.0, -0.5]);
        assert_eq!(pts[14], vec![1.0, 1.0]);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(d.nearest_grid_index(p), Some(i));
        }
        assert!(DomainSpec::new(vec![(1.0, 1.0)]).is_err());
    }

    #[test]
    fn unit_cube_round_trip() {
        let d = DomainSpec::new(vec![(-5.12, 5.12), (0.0, 10.0)]).unwrap();
        let x = vec![1.0, 7.5];
        let back = d.from_unit(&d.to_unit(&x));
        assert!((back[0] - 1.0).abs() < 1e-12 && (back[1] - 7.5).abs() < 1e-12);
    }
}
