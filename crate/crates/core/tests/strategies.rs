use gpbandit::acquisitions::{improvement_value, pg_score, pi_value, AcquisitionSpec};
use gpbandit::kernels::{DomainSpec, KernelSpec};
use gpbandit::objectives::Objective;
use gpbandit::posterior::{HyperBounds, PosteriorState};
use gpbandit::strategies::{run_episode, Algorithm, EpisodeSpec, StrategyState, Termination};
use gpbandit::theory::{BetaScheduleSpec, ManualBeta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(n: usize) -> DomainSpec {
    DomainSpec::unit_cube(1).with_grid(vec![n]).unwrap()
}

fn episode(objective: Objective, algorithm: Algorithm, horizon: usize, init: Vec<Vec<f64>>) -> EpisodeSpec {
    let eta = objective.known_max().map(|m| m - 0.1);
    EpisodeSpec {
        objective,
        algorithm,
        acquisition: AcquisitionSpec::new(algorithm.acquisition_kind(), eta).unwrap(),
        beta: BetaScheduleSpec::Manual(ManualBeta::cubed_log_two_t()),
        kernel: KernelSpec::squared_exponential(0.5, 1.0),
        lambda: 0.01,
        horizon,
        initial_design: init,
        refit_every: None,
        standardize: true,
        hyper_bounds: HyperBounds::default(),
        fit_restarts: 2,
        gap: 0.1,
        eta: None,
        early_stop: false,
        regret_includes_initial: false,
        selection_seed: 1,
        noise_seed: 2,
    }
}

fn state(algorithm: Algorithm, domain: &DomainSpec, eta: Option<f64>, intersect: bool) -> StrategyState {
    let mut acq = AcquisitionSpec::new(algorithm.acquisition_kind(), eta).unwrap();
    acq.intersect_bounds = intersect;
    StrategyState::new(
        algorithm,
        acq,
        domain,
        KernelSpec::squared_exponential(0.3, 1.0),
        0.01,
        BetaScheduleSpec::Manual(ManualBeta::sqrt_log()),
        true,
        false,
        9,
    )
    .unwrap()
}

#[test]
fn ucb_two_rounds_match_hand_trace() {
    let values = vec![0.2, 1.0, 0.5];
    let obj = Objective::from_table("three", line(3), values.clone()).unwrap();
    let trace = run_episode(&episode(obj, Algorithm::GpUcb, 2, vec![vec![1.0]])).unwrap();

    // Closed forms with SE l = 0.5, unit scale, λ = 0.01.
    let lam = 0.01;
    let k = |a: f64, b: f64| (-(a - b) * (a - b) / 0.5).exp();
    let grid = [0.0, 0.5, 1.0];
    let argmax = |s: &[f64]| (0..s.len()).fold(0, |b, i| if s[i] > s[b] { i } else { b });

    // Round 1: one observation at x = 1.
    let b1 = (2.0f64).ln().powf(1.5);
    let y0 = values[2];
    let ucb1: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let kx = k(x, 1.0);
            let mu = kx * y0 / (1.0 + lam);
            let var = 1.0 - kx * kx / (1.0 + lam);
            mu + b1 * var.sqrt()
        })
        .collect();
    let i1 = argmax(&ucb1);
    assert_eq!(trace.rows[1].x, vec![grid[i1]]);

    // Round 2: explicit 2×2 inverse.
    let b2 = (4.0f64).ln().powf(1.5);
    let (xa, xb) = (1.0, grid[i1]);
    let (ya, yb) = (y0, values[i1]);
    let (a, c) = (1.0 + lam, k(xa, xb));
    let det = a * a - c * c;
    let inv = [[a / det, -c / det], [-c / det, a / det]];
    let ucb2: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let kv = [k(x, xa), k(x, xb)];
            let w = [inv[0][0] * kv[0] + inv[0][1] * kv[1], inv[1][0] * kv[0] + inv[1][1] * kv[1]];
            let mu = w[0] * ya + w[1] * yb;
            let var = 1.0 - (w[0] * kv[0] + w[1] * kv[1]);
            mu + b2 * var.max(0.0).sqrt()
        })
        .collect();
    let i2 = argmax(&ucb2);
    assert_eq!(trace.rows[2].x, vec![grid[i2]]);
    assert_eq!(trace.rows.len(), 3);
    assert!((trace.rows[1].beta_sqrt - b1).abs() < 1e-15);
}

#[test]
fn ucb_without_width_picks_posterior_mean_max() {
    let d = line(11);
    let mut s = state(Algorithm::GpUcb, &d, None, false);
    s.observe(&[0.3], 1.0, false).unwrap();
    let (_, idx) = s.select_next(0.0).unwrap();
    assert_eq!(idx, Some(3));
}

#[test]
fn grid_selection_is_exhaustive_argmax() {
    let d = DomainSpec::unit_cube(2).with_grid(vec![8, 8]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let obs: Vec<(Vec<f64>, f64)> = (0..6)
        .map(|_| (d.sample(&mut rng), rng.random_range(-1.0..1.0)))
        .collect();
    for alg in [Algorithm::GpUcb, Algorithm::Pi, Algorithm::Ei, Algorithm::Pg, Algorithm::Eg] {
        let eta = 0.4;
        let mut s = state(alg, &d, Some(eta), false);
        for (x, y) in &obs {
            s.observe(x, *y, false).unwrap();
        }
        let beta = 1.7;
        let (u, _) = s.select_next(beta).unwrap();
        let post = s.posterior();
        let best_y = obs.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
        let score = |x: &[f64]| {
            let (m, v) = post.predict(x);
            let sd = v.sqrt();
            match alg {
                Algorithm::GpUcb => m + beta * sd,
                Algorithm::Pi => pi_value(m, sd, best_y),
                Algorithm::Ei => improvement_value(m, sd, best_y),
                Algorithm::Pg => pg_score(m, sd, eta),
                _ => improvement_value(m, sd, eta),
            }
        };
        let best = d
            .grid_points()
            .unwrap()
            .iter()
            .map(|p| score(p))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((score(&u) - best).abs() <= 1e-12 * best.abs().max(1.0), "{alg:?}");
    }
}

#[test]
fn constant_objective_has_no_regret() {
    let obj = Objective::from_table("flat", line(5), vec![0.7; 5]).unwrap();
    let trace = run_episode(&episode(obj, Algorithm::GpUcb, 10, vec![vec![0.0]])).unwrap();
    assert!(trace.rows.iter().all(|r| r.regret.r == 0.0 && r.regret.standard == 0.0));
}

#[test]
fn intersected_ucb_never_increases() {
    let d = line(15);
    let mut s = state(Algorithm::GpUcb, &d, None, true);
    let f = |x: f64| (6.0 * x).sin();
    s.observe(&[0.5], f(0.5), false).unwrap();
    let mut prev: Option<Vec<f64>> = None;
    for t in 1..=10 {
        let beta = s.beta_sqrt(t).unwrap().max(0.5);
        let (u, _) = s.select_next(beta).unwrap();
        let cache = s.bound_cache().unwrap();
        let now: Vec<f64> = (0..15).map(|i| cache.ucb(i)).collect();
        if let Some(p) = &prev {
            assert!(now.iter().zip(p).all(|(a, b)| a <= b));
        }
        prev = Some(now);
        s.observe(&u, f(u[0]), true).unwrap();
    }
}

#[test]
fn elimination_first_round_picks_lowest_index() {
    let d = line(6);
    let mut s = state(Algorithm::Elimination, &d, None, false);
    assert_eq!(s.select_next(1.0).unwrap().1, Some(0));
}

#[test]
fn elimination_audit_on_2d_grid() {
    let d = DomainSpec::unit_cube(2).with_grid(vec![7, 7]).unwrap();
    let f = |x: &[f64]| (3.0 * x[0]).sin() * (2.0 * x[1]).cos();
    let mut s = state(Algorithm::Elimination, &d, None, false);
    s.observe(&[0.5, 0.5], f(&[0.5, 0.5]), false).unwrap();
    let mut prev: Vec<usize> = s.active().unwrap().to_vec();
    let mut eliminated: Vec<usize> = Vec::new();
    for t in 1..=20 {
        let (u, idx) = s.select_next(1.0).unwrap();
        let idx = idx.unwrap();
        // Maximum variance over the active set by exhaustive scan.
        let post = s.posterior();
        let best = prev
            .iter()
            .map(|&g| post.predict(&s.unit_grid().unwrap()[g]).1)
            .fold(f64::NEG_INFINITY, f64::max);
        let (_, v) = post.predict(&u);
        assert!((v - best).abs() <= 1e-10, "round {t}");
        assert!(!eliminated.contains(&idx), "eliminated point {idx} selected");
        s.observe(&u, f(&u), true).unwrap();
        let n = s.update_candidates(0.5).unwrap();
        let now = s.active().unwrap().to_vec();
        assert_eq!(n, now.len());
        assert!(now.iter().all(|g| prev.contains(g)), "candidate set grew");
        eliminated.extend(prev.iter().filter(|g| !now.contains(g)));
        prev = now;
    }
}

#[test]
fn huge_width_keeps_every_point() {
    let d = line(9);
    let mut s = state(Algorithm::Elimination, &d, None, false);
    for _ in 0..6 {
        let (u, _) = s.select_next(1e6).unwrap();
        s.observe(&u, u[0] * u[0], true).unwrap();
        assert_eq!(s.update_candidates(1e6).unwrap(), 9);
    }
}

/// Max-variance sampling by direct scan with ties to the lowest index.
fn max_variance_trace(d: &DomainSpec, f: impl Fn(f64) -> f64, start: f64, rounds: usize) -> Vec<f64> {
    let pts = d.grid_points().unwrap();
    let mut post = PosteriorState::new(KernelSpec::squared_exponential(0.5, 1.0), 0.01).unwrap();
    post.append_observation(&[start], f(start)).unwrap();
    let mut picks = Vec::new();
    for _ in 0..rounds {
        let vars: Vec<f64> = pts.iter().map(|p| post.predict(p).1).collect();
        let i = (0..pts.len()).fold(0, |b, i| if vars[i] > vars[b] { i } else { b });
        post.append_observation(&pts[i], f(pts[i][0])).unwrap();
        picks.push(pts[i][0]);
    }
    picks
}

#[test]
fn low_threshold_never_eliminates() {
    let d = line(11);
    let f = |x: f64| (5.0 * x).cos();
    let obj = Objective::from_table("cos", d.clone(), d.grid_points().unwrap().iter().map(|p| f(p[0])).collect()).unwrap();
    // An off-grid start avoids mirror-image variance ties.
    let mut spec = episode(obj, Algorithm::GoodElimination, 15, vec![vec![0.13]]);
    spec.eta = Some(-1e6);
    let trace = run_episode(&spec).unwrap();
    assert_eq!(trace.termination, Termination::Completed);
    assert!(trace.rows.iter().skip(1).all(|r| r.active == Some(11)));
    let xs: Vec<f64> = trace.rows.iter().skip(1).map(|r| r.x[0]).collect();
    let oracle = max_variance_trace(&d, f, 0.13, 15);
    for (a, b) in xs.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12, "{xs:?} vs {oracle:?}");
    }
}

#[test]
fn high_threshold_certifies_no_good_action() {
    let d = line(5);
    let mut s = state(Algorithm::GoodElimination, &d, Some(1e6), false);
    let mut certified = None;
    for t in 1..=50 {
        let (u, _) = s.select_next(1.0).unwrap();
        s.observe(&u, (3.0 * u[0]).sin(), true).unwrap();
        if let Err(reason) = s.update_candidates(1.0) {
            certified = Some((t, reason));
            break;
        }
    }
    assert_eq!(certified, Some((1, Termination::NoGoodActionCertified)));
}

#[test]
fn good_elimination_trace_reports_certification() {
    let d = line(5);
    let obj = Objective::from_table("low", d.clone(), vec![0.1, 0.2, 0.3, 0.2, 0.1]).unwrap();
    let mut spec = episode(obj, Algorithm::GoodElimination, 50, vec![]);
    spec.eta = Some(1e6);
    let trace = run_episode(&spec).unwrap();
    assert_eq!(trace.termination, Termination::NoGoodActionCertified);
    assert_eq!(trace.rows.last().unwrap().active, Some(0));
}

#[test]
fn zero_horizon_keeps_only_initial_design() {
    let obj = Objective::from_table("three", line(3), vec![0.0, 1.0, 0.0]).unwrap();
    let trace = run_episode(&episode(obj, Algorithm::GpUcb, 0, vec![vec![0.0], vec![1.0]])).unwrap();
    assert_eq!(trace.rows.iter().map(|r| r.t).collect::<Vec<_>>(), vec![-1, 0]);
    assert_eq!(trace.ledger.rounds(), 0);
}

#[test]
fn early_stop_when_design_already_good() {
    let obj = Objective::from_table("three", line(3), vec![0.0, 1.0, 0.0]).unwrap();
    let mut spec = episode(obj, Algorithm::Pg, 10, vec![vec![0.5]]);
    spec.eta = Some(0.9);
    spec.early_stop = true;
    let trace = run_episode(&spec).unwrap();
    assert_eq!(trace.termination, Termination::EarlyStopGood);
    assert_eq!(trace.first_good, Some(0));
    assert_eq!(trace.rows.len(), 1);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let d = DomainSpec::new(vec![(-2.0, 2.0), (0.0, 3.0)]).unwrap();
    let obj = Objective::custom("bowl", d, |x: &[f64]| -(x[0] * x[0] + (x[1] - 1.0).powi(2)), Some(0.0))
        .unwrap()
        .with_noise(0.05)
        .unwrap();
    for alg in [Algorithm::GpUcb, Algorithm::Ts, Algorithm::Mes, Algorithm::Gs, Algorithm::Sts] {
        let mut spec = episode(obj.clone(), alg, 6, vec![vec![0.0, 0.0], vec![1.0, 2.0]]);
        spec.eta = Some(-0.2);
        spec.refit_every = Some(3);
        spec.acquisition.mes_grid_size = 300;
        spec.acquisition.gs_grid_size = 100;
        spec.acquisition.candidate_limit = 64;
        let a = run_episode(&spec).unwrap();
        let b = run_episode(&spec).unwrap();
        assert_eq!(a, b, "{alg:?}");
        assert_eq!(a.termination, Termination::Completed, "{alg:?}: {:?}", a.error);
        assert_eq!(a.rows.len(), 8);
    }
}

#[test]
fn cumulative_regrets_never_decrease() {
    let d = DomainSpec::unit_cube(2).with_grid(vec![10, 10]).unwrap();
    let values: Vec<f64> = d.grid_points().unwrap().iter().map(|p| (4.0 * p[0]).sin() + p[1]).collect();
    let obj = Objective::from_table("wave", d, values).unwrap().with_noise(0.1).unwrap();
    for alg in [Algorithm::GpUcb, Algorithm::Elimination, Algorithm::Ei] {
        let trace = run_episode(&episode(obj.clone(), alg, 25, vec![vec![0.0, 0.0]])).unwrap();
        for w in trace.rows.windows(2) {
            let (a, b) = (&w[0].regret, &w[1].regret);
            assert!(b.standard >= a.standard && b.indicator >= a.indicator);
            assert!(b.large_gap >= a.large_gap && b.hinge >= a.hinge);
        }
    }
}

#[test]
fn integer_dimensions_are_rounded() {
    let mut d = DomainSpec::new(vec![(0.0, 5.0), (0.0, 1.0)]).unwrap();
    d.integer_dims = vec![0];
    let obj = Objective::custom("steps", d, |x: &[f64]| -(x[0] - 3.0).powi(2) - x[1], Some(0.0)).unwrap();
    let trace = run_episode(&episode(obj, Algorithm::Ei, 5, vec![vec![1.0, 0.5]])).unwrap();
    assert!(trace.rows.iter().all(|r| r.x[0].fract() == 0.0));
}

#[test]
fn unknown_maximum_is_a_config_error() {
    let d = DomainSpec::unit_cube(1);
    let obj = Objective::custom("open", d, |x: &[f64]| x[0], None).unwrap();
    assert!(run_episode(&episode(obj, Algorithm::GpUcb, 3, vec![])).is_err());
}
