//! Computable theoretical quantities: information gain, confidence-width
//! schedules, the bad-round counts of the upper bounds, and the
//! lower-bound instance sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::linalg::Cholesky;

/// How the confidence half-width `β_t^{1/2}` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaScheduleSpec {
    /// `B + σ λ^{-1/2} √(2(γ_{t−1} + ln(1/δ)))`.
    Rkhs {
        norm_bound: f64,
        noise_std: f64,
        lambda: f64,
        delta: f64,
    },
    /// `√(2 ln(|D| t² π² / (6δ)))`; `domain_size` is filled in from the grid.
    BayesianFinite {
        delta: f64,
        #[serde(default)]
        domain_size: Option<usize>,
    },
    /// `scale · max(0, log_base(multiplier · t))^power`.
    Manual(ManualBeta),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualBeta {
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "one")]
    pub multiplier: f64,
    #[serde(default = "half")]
    pub power: f64,
    /// `None` means natural log.
    #[serde(default)]
    pub log_base: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl ManualBeta {
    /// `√(ln t)`.
    pub fn sqrt_log() -> Self {
        ManualBeta {
            scale: 1.0,
            multiplier: 1.0,
            power: 0.5,
            log_base: None,
        }
    }

    /// `√((ln 2t)³)`.
    pub fn cubed_log_two_t() -> Self {
        ManualBeta {
            scale: 1.0,
            multiplier: 2.0,
            power: 1.5,
            log_base: None,
        }
    }
}

impl BetaScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("beta.{field}"), msg));
        match *self {
            BetaScheduleSpec::Rkhs {
                norm_bound,
                noise_std,
                lambda,
                delta,
            } => {
                if !(norm_bound >= 0.0) {
                    return bad("norm_bound", format!("must be nonnegative, got {norm_bound}"));
                }
                if !(noise_std >= 0.0) {
                    return bad("noise_std", format!("must be nonnegative, got {noise_std}"));
                }
                if !(lambda > 0.0) {
                    return bad("lambda", format!("must be positive, got {lambda}"));
                }
                if !(delta > 0.0 && delta < 1.0) {
                    return bad("delta", format!("must lie in (0,1), got {delta}"));
                }
            }
            BetaScheduleSpec::BayesianFinite { delta, .. } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return bad("delta", format!("must lie in (0,1), got {delta}"));
                }
            }
            BetaScheduleSpec::Manual(m) => {
                if !(m.scale >= 0.0) || !(m.multiplier > 0.0) || !(m.power > 0.0) {
                    return bad("manual", "scale >= 0, multiplier > 0 and power > 0 required".into());
                }
                if let Some(b) = m.log_base {
                    if !(b > 1.0) {
                        return bad("manual.log_base", format!("must exceed 1, got {b}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `β_t^{1/2}` for round `t ≥ 1`; `gain` is the caller's `γ_{t−1}` estimate.
pub fn beta_halfwidth(spec: &BetaScheduleSpec, t: usize, gain: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::input("round index must be at least 1"));
    }
    let t = t as f64;
    match *spec {
        BetaScheduleSpec::Rkhs {
            norm_bound,
            noise_std,
            lambda,
            delta,
        } => Ok(norm_bound + noise_std / lambda.sqrt() * (2.0 * (gain.max(0.0) + (1.0 / delta).ln())).sqrt()),
        BetaScheduleSpec::BayesianFinite { delta, domain_size } => {
            let size = domain_size.ok_or_else(|| {
                Error::Unsupported("the finite-domain Bayesian schedule needs a grid domain".into())
            })?;
            let pi2 = std::f64::consts::PI * std::f64::consts::PI;
            Ok((2.0 * (size as f64 * t * t * pi2 / (6.0 * delta)).ln()).max(0.0).sqrt())
        }
        BetaScheduleSpec::Manual(m) => {
            let arg = m.multiplier * t;
            let log = match m.log_base {
                Some(b) => arg.log(b),
                None => arg.ln(),
            };
            Ok(m.scale * log.max(0.0).powf(m.power))
        }
    }
}

/// `½ ln det(I + λ⁻¹K)` of a specific point set.
pub fn empirical_info_gain(kernel: &KernelSpec, lambda: f64, points: &[Vec<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::input("information gain needs at least one point"));
    }
    if !(lambda > 0.0) {
        return Err(Error::input("λ must be positive"));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::input("points have inconsistent dimensions"));
    }
    let n = points.len();
    let inv = 1.0 / lambda;
    let chol = Cholesky::factor_with(n, 0.0, |i, j| {
        let k = kernel.eval_unchecked(&points[i], &points[j]) * inv;
        if i == j {
            1.0 + k
        } else {
            k
        }
    })
    .ok_or_else(|| Error::numerical("I + K/λ could not be factored"))?;
    Ok(0.5 * chol.log_det())
}

/// `(C1, C2) = (8λ⁻¹, 2λ⁻¹) / ln(1+λ⁻¹)`.
pub fn constants_c1_c2(lambda: f64) -> (f64, f64) {
    let inv = 1.0 / lambda;
    let c2 = 2.0 * inv / inv.ln_1p();
    (4.0 * c2, c2)
}

/// Which inequality defines the bad-round count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NMaxForm {
    /// `N ≤ C1 γ_N β_T / Δ²` with `β_T` fixed.
    GpUcb { beta_horizon: f64 },
    /// `N ≤ 4 C1 γ_N β_N / Δ²`.
    Elimination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NMax {
    pub value: usize,
    /// The inequality still held at the cap.
    pub overflow: bool,
}

/// Largest `N ≤ cap` satisfying the chosen inequality, by scan. `beta_of`
/// returns `β_N` (the squared half-width).
pub fn solve_n_max(
    delta_gap: f64,
    c1: f64,
    form: NMaxForm,
    beta_of: impl Fn(usize) -> f64,
    gain_of: impl Fn(usize) -> f64,
    cap: usize,
) -> NMax {
    let d2 = delta_gap * delta_gap;
    let mut best = 0;
    for n in 1..=cap {
        let rhs = match form {
            NMaxForm::GpUcb { beta_horizon } => c1 * gain_of(n) * beta_horizon / d2,
            NMaxForm::Elimination => 4.0 * c1 * gain_of(n) * beta_of(n) / d2,
        };
        if n as f64 <= rhs {
            best = n;
        }
    }
    let overflow = cap > 0 && best == cap;
    NMax { value: best, overflow }
}

/// Analytic growth models for `γ_N` with caller-chosen leading constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainModel {
    Constant { value: f64 },
    /// `c · (ln(1+N))^d`.
    SquaredExponential { coefficient: f64, dim: usize },
    /// `c · N^{d/(2ν+d)}`.
    Matern { coefficient: f64, dim: usize, nu: f64 },
}

impl GainModel {
    pub fn gain(&self, n: usize) -> f64 {
        let n = n as f64;
        match *self {
            GainModel::Constant { value } => value,
            GainModel::SquaredExponential { coefficient, dim } => coefficient * n.ln_1p().powi(dim as i32),
            GainModel::Matern { coefficient, dim, nu } => {
                let d = dim as f64;
                coefficient * n.powf(d / (2.0 * nu + d))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerBoundKind {
    Indicator,
    Hinge,
}

/// Universal constants of the lower-bound construction; all default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundConstants {
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
    /// Overrides the value derived from `c2` and `zeta`.
    #[serde(default)]
    pub c3: Option<f64>,
    #[serde(default = "one")]
    pub zeta: f64,
}

impl Default for LowerBoundConstants {
    fn default() -> Self {
        LowerBoundConstants {
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: None,
            zeta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub epsilon: f64,
    pub m: u64,
    pub t_tilde: f64,
    /// `T̃/2` (indicator) or `T̃Δ/2` (hinge).
    pub regret: f64,
    /// `M = 0` or the footnote case `Δ ≥ 2B`; the bound says nothing.
    pub vacuous: bool,
}

/// `min{T, M σ²/(4 c0 ε²) · ln(1/(2.4δ))}`.
pub fn t_tilde(horizon: f64, m: f64, noise_std: f64, c0: f64, epsilon: f64, delta: f64) -> f64 {
    let raw = m * noise_std * noise_std / (4.0 * c0 * epsilon * epsilon) * (1.0 / (2.4 * delta)).ln();
    horizon.min(raw.max(0.0))
}

/// Hard-instance count `M` for the kernel, with `ε` already chosen.
pub fn hard_instance_count(kernel: &KernelSpec, dim: usize, norm_bound: f64, epsilon: f64, k: &LowerBoundConstants) -> u64 {
    let d = dim as f64;
    let l = kernel.lengthscale;
    let raw = match kernel.family {
        KernelFamily::SquaredExponential => {
            let pi = std::f64::consts::PI;
            let inner = (norm_bound * (2.0 * pi * l * l).powf(d / 4.0) / epsilon).ln();
            if inner <= 0.0 {
                0.0
            } else {
                (k.c1 * inner.sqrt() / l).powf(d)
            }
        }
        KernelFamily::Matern => {
            let nu = kernel.nu;
            let c3 = k.c3.unwrap_or_else(|| matern_c3(nu, d, k.c2, k.zeta));
            (norm_bound * c3 / epsilon).powf(d / nu)
        }
    };
    if raw.is_finite() && raw >= 0.0 {
        raw.floor().min(u64::MAX as f64) as u64
    } else {
        0
    }
}

/// `(1/ζ)^ν · c2^{-1/2} / (2 (8π²)^{(ν+d/2)/2})`.
pub fn matern_c3(nu: f64, d: f64, c2: f64, zeta: f64) -> f64 {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    (1.0 / zeta).powf(nu) * c2.powf(-0.5) / (2.0 * (8.0 * pi2).powf((nu + d / 2.0) / 2.0))
}

#[allow(clippy::too_many_arguments)]
pub fn lower_bound_quantities(
    kernel: &KernelSpec,
    dim: usize,
    norm_bound: f64,
    delta_gap: f64,
    noise_std: f64,
    delta: f64,
    horizon: f64,
    kind: LowerBoundKind,
    constants: &LowerBoundConstants,
) -> LowerBound {
    let epsilon = match kind {
        LowerBoundKind::Indicator => delta_gap,
        LowerBoundKind::Hinge => 2.0 * delta_gap,
    };
    if delta_gap >= 2.0 * norm_bound {
        return LowerBound {
            epsilon,
            m: 0,
            t_tilde: 0.0,
            regret: 0.0,
            vacuous: true,
        };
    }
    let m = hard_instance_count(kernel, dim, norm_bound, epsilon, constants);
    let tt = t_tilde(horizon, m as f64, noise_std, constants.c0, epsilon, delta);
    let regret = match kind {
        LowerBoundKind::Indicator => tt / 2.0,
        LowerBoundKind::Hinge => tt * delta_gap / 2.0,
    };
    LowerBound {
        epsilon,
        m,
        t_tilde: tt,
        regret,
        vacuous: m == 0,
    }
}

/// Upper bounds from both theorems plus the lower-bound pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema_version: u32,
    pub delta_gap: f64,
    pub c1: f64,
    pub c2: f64,
    pub n_max: NMax,
    pub n_max_prime: NMax,
    /// `C1 γ_{N_max} β_T / Δ`.
    pub gap_bound_gp_ucb: f64,
    /// `2B + 8 C1 γ_{N'} β_{N'} / Δ`.
    pub gap_bound_elimination: f64,
    pub lower_indicator: Option<LowerBound>,
    pub lower_hinge: Option<LowerBound>,
}

pub const BOUND_SCHEMA_VERSION: u32 = 1;

/// Assembles the upper-bound part of a report. `beta_of(n)` is `β_n`
/// (squared half-width), `gain_of(n)` is `γ_n`.
pub fn upper_bounds(
    delta_gap: f64,
    lambda: f64,
    norm_bound: f64,
    horizon: usize,
    beta_of: impl Fn(usize) -> f64,
    gain_of: impl Fn(usize) -> f64,
    cap: usize,
) -> BoundReport {
    let (c1, c2) = constants_c1_c2(lambda);
    let beta_t = beta_of(horizon.max(1));
    let n_max = solve_n_max(delta_gap, c1, NMaxForm::GpUcb { beta_horizon: beta_t }, &beta_of, &gain_of, cap);
    let n_prime = solve_n_max(delta_gap, c1, NMaxForm::Elimination, &beta_of, &gain_of, cap);
    let gap_ucb = c1 * gain_of(n_max.value) * beta_t / delta_gap;
    let gap_elim = 2.0 * norm_bound
        + 8.0 * c1 * gain_of(n_prime.value) * beta_of(n_prime.value.max(1)) / delta_gap;
    BoundReport {
        schema_version: BOUND_SCHEMA_VERSION,
        delta_gap,
        c1,
        c2,
        n_max,
        n_max_prime: n_prime,
        gap_bound_gp_ucb: gap_ucb,
        gap_bound_elimination: gap_elim,
        lower_indicator: None,
        lower_hinge: None,
    }
}
