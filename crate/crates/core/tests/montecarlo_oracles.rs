use hwgame_core::closedform::{expected_martingale_gap, utility, value_function, SolutionPair};
use hwgame_core::curve::{CoefficientCurve, Interpolation};
use hwgame_core::model::{MarketModel, StatePoint};
use hwgame_core::montecarlo::{
    estimate_j, estimate_j_with, fill_increments, martingale_gap_mc, mean_and_std_error, path_rng, simulate_rate_paths,
    simulate_wealth, terminal_outcomes, Executor, RateIntegral, Serial, SimConfig, StepPlan,
};

fn reference() -> MarketModel {
    MarketModel::constant(1.0, 0.5, 0.1, 0.02, &[0.3], &[0.01], &[0.2]).unwrap()
}

fn flat(value: &[f64]) -> CoefficientCurve {
    CoefficientCurve::constant_vector(1.0, value)
}

/// Runs jobs from the last index to the first on scoped threads.
struct ReversedThreads(usize);

impl Executor for ReversedThreads {
    fn map<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
        let chunk = count.div_ceil(self.0).max(1);
        std::thread::scope(|s| {
            for (c, part) in slots.chunks_mut(chunk).enumerate().rev() {
                let job = &job;
                s.spawn(move || {
                    for (k, slot) in part.iter_mut().enumerate().rev() {
                        *slot = Some(job(c * chunk + k));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.unwrap()).collect()
    }
}

#[test]
fn frozen_rate_without_dynamics() {
    let m = MarketModel::constant(1.0, 0.5, 0.0, 0.0, &[0.3], &[0.0], &[0.2]).unwrap();
    let s0 = StatePoint::new(1.0, 0.037, 0.0).unwrap();
    let paths = simulate_rate_paths(&m, &flat(&[0.4]), &s0, &SimConfig::new(10, 16, 1)).unwrap();
    assert!(paths.rates.iter().all(|&r| r == 0.037));
}

#[test]
fn deterministic_rate_matches_the_ode() {
    let (kappa, b, r0) = (0.4, 0.03, 0.01);
    let m = MarketModel::constant(2.0, 0.5, kappa, b, &[0.3], &[0.0], &[0.2]).unwrap();
    let s0 = StatePoint::new(1.0, r0, 0.5).unwrap();
    let eta = CoefficientCurve::constant_vector(2.0, &[0.0]);
    let paths = simulate_rate_paths(&m, &eta, &s0, &SimConfig::new(3, 30, 2)).unwrap();
    for p in 0..3 {
        for (&t, &r) in paths.times.iter().zip(paths.path(p)) {
            let s = t - 0.5;
            let exact = (-kappa * s).exp() * (r0 + (b / kappa) * ((kappa * s).exp() - 1.0));
            assert!((r - exact).abs() < 1e-10, "t={t}: {r} vs {exact}");
        }
    }
}

#[test]
fn terminal_rate_moments() {
    let (kappa, b, a, r0, eta) = (0.8, 0.02, 0.03, 0.05, 0.5);
    let m = MarketModel::constant(1.0, 0.5, kappa, b, &[0.3], &[a], &[0.2]).unwrap();
    let s0 = StatePoint::new(1.0, r0, 0.0).unwrap();
    let cfg = SimConfig::new(1_000_000, 4, 5);
    let paths = simulate_rate_paths(&m, &flat(&[eta]), &s0, &cfg).unwrap();
    let terminal: Vec<f64> = (0..paths.trajectories()).map(|p| *paths.path(p).last().unwrap()).collect();
    let (mean, se) = mean_and_std_error(&terminal);
    let decay = (-kappa).exp();
    let drift = b + a * eta;
    let expected_mean = r0 * decay + drift / kappa * (1.0 - decay);
    let expected_var = a * a * (1.0 - (-2.0 * kappa).exp()) / (2.0 * kappa);
    assert!((mean - expected_mean).abs() < 4.0 * se, "{mean} vs {expected_mean} (se {se})");
    let var = terminal.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (terminal.len() - 1) as f64;
    assert!((var / expected_var - 1.0).abs() < 0.02, "{var} vs {expected_var}");
}

#[test]
fn bank_account_wealth_is_pathwise_exact() {
    let m = reference();
    let s0 = StatePoint::new(1.5, 0.03, 0.0).unwrap();
    let cfg = SimConfig::new(50, 32, 9);
    let outcomes = terminal_outcomes(&Serial, &m, &flat(&[0.0]), &flat(&[-0.1]), &s0, &cfg).unwrap();
    for o in outcomes {
        assert!((o.log_x - 1.5f64.ln() - o.int_r).abs() < 1e-14);
    }
}

#[test]
fn geometric_brownian_wealth_mean() {
    let m = MarketModel::constant(1.0, 0.5, 0.0, 0.0, &[0.3], &[0.0], &[0.2]).unwrap();
    let s0 = StatePoint::new(1.0, 0.0, 0.0).unwrap();
    let pi = 0.5;
    let wealth = simulate_wealth(&m, &flat(&[pi]), &flat(&[0.0]), &s0, &SimConfig::new(1_000_000, 4, 13)).unwrap();
    let (mean, se) = mean_and_std_error(&wealth);
    let expected = (pi * 0.2 * 0.3f64).exp();
    assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected} (se {se})");
}

#[test]
fn wealth_stays_positive() {
    let m = reference();
    let s0 = StatePoint::new(0.01, 0.5, 0.0).unwrap();
    let wealth = simulate_wealth(&m, &flat(&[-40.0]), &flat(&[3.0]), &s0, &SimConfig::new(2000, 8, 4)).unwrap();
    assert!(wealth.iter().all(|&x| x > 0.0 && x.is_finite()));
}

#[test]
fn deterministic_bank_account_payoff() {
    let m = MarketModel::constant(1.0, 0.5, 0.0, 0.0, &[0.3], &[0.0], &[0.2]).unwrap();
    let s0 = StatePoint::new(1.0, 0.03, 0.0).unwrap();
    let est = estimate_j(&m, &flat(&[0.0]), &flat(&[0.0]), &s0, &SimConfig::new(1000, 16, 0)).unwrap();
    assert!((est.mean - 2.0 * 0.015f64.exp()).abs() < 1e-12);
    assert!(est.std_error < 1e-14);
}

#[test]
fn rate_and_wealth_share_the_noise() {
    let (a, sigma) = (0.01, 0.2);
    let m = MarketModel::constant(0.25, 0.5, 0.1, 0.02, &[0.3], &[a], &[sigma]).unwrap();
    let horizon_flat = |v: f64| CoefficientCurve::constant_vector(0.25, &[v]);
    let s0 = StatePoint::new(1.0, 0.03, 0.0).unwrap();
    let cfg = SimConfig::new(20_000, 16, 21);
    let eta = horizon_flat(0.0);
    let rates = simulate_rate_paths(&m, &eta, &s0, &cfg).unwrap();
    let pi = horizon_flat(a / sigma);
    let plan = StepPlan::new(&m, Some(&pi), &eta, 0.0, 0.25, 16).unwrap();
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for p in 0..rates.trajectories() {
        let dw = rates.path_increments(p);
        let outcome = plan.run_with_increments(s0.r, s0.x, dw);
        // the rate path of the wealth run is the simulated rate path
        assert!((outcome.r_end - rates.path(p)[16]).abs() < 1e-15);
        xs.push(outcome.log_x);
        ws.push(a * dw.iter().sum::<f64>());
    }
    let (mx, _) = mean_and_std_error(&xs);
    let (mw, _) = mean_and_std_error(&ws);
    let cov: f64 = xs.iter().zip(&ws).map(|(x, w)| (x - mx) * (w - mw)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let vw: f64 = ws.iter().map(|w| (w - mw) * (w - mw)).sum();
    let corr = cov / (vx * vw).sqrt();
    assert!(corr > 0.99, "{corr}");
}

#[test]
fn drift_discretization_converges_with_common_noise() {
    // a = 0 keeps the only bias in the integral of the rate
    let grid: Vec<f64> = (0..=32).map(|k| k as f64 / 32.0).collect();
    let b = CoefficientCurve::scalar(
        grid.clone(),
        grid.iter().map(|t| 0.6 * (6.0 * t).sin() + 0.4).collect(),
        Interpolation::PiecewiseLinear,
    )
    .unwrap();
    let mut m = MarketModel::constant(1.0, 0.5, 1.5, 0.0, &[0.3], &[0.0], &[0.2]).unwrap();
    m.b = b;
    let pi = flat(&[0.8]);
    let eta = flat(&[-0.1]);
    let fine = 128;
    let plans: Vec<StepPlan> = [32, 64, 128]
        .iter()
        .map(|&s| StepPlan::new(&m, Some(&pi), &eta, 0.0, 1.0, s).unwrap().with_rate_integral(RateIntegral::Trapezoid))
        .collect();
    let paths = 2000;
    let mut sums = [0.0; 3];
    let mut dw = vec![0.0; fine];
    for p in 0..paths {
        let mut rng = path_rng(77, p as u64);
        fill_increments(&mut rng, 1.0, 1.0 / fine as f64, &mut dw);
        for (k, plan) in plans.iter().enumerate() {
            let group = fine / plan.steps;
            let coarse: Vec<f64> = dw.chunks(group).map(|c| c.iter().sum()).collect();
            sums[k] += utility(m.gamma, plan.run_with_increments(0.02, 1.0, &coarse).wealth());
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / paths as f64).collect();
    let d1 = (means[0] - means[1]).abs();
    let d2 = (means[1] - means[2]).abs();
    assert!(d2 > 0.0);
    let ratio = d1 / d2;
    assert!(ratio >= 1.8, "{means:?}: ratio {ratio}");
}

#[test]
fn saddle_value_is_matched() {
    let m = reference();
    let sol = SolutionPair::solve(&m, 2048).unwrap();
    let s0 = StatePoint::new(1.0, 0.03, 0.0).unwrap();
    let v = value_function(&m, &sol, &s0).unwrap();
    let est = estimate_j(&m, &sol.pi_star, &sol.eta_star, &s0, &SimConfig::new(50_000, 128, 3)).unwrap();
    assert!((est.mean - v).abs() <= 3.0 * est.std_error, "{est:?} vs {v}");
}

#[test]
fn martingale_gap_estimates() {
    let m = reference();
    let sol = SolutionPair::solve(&m, 2048).unwrap();
    let cfg = SimConfig::new(200_000, 64, 8).with_antithetic(true);
    let worst = martingale_gap_mc(&m, &sol.eta_star, 1.0, &cfg).unwrap();
    assert_eq!(worst.rejects_zero(3.0), vec![true]);
    assert!(worst.mean[0] < 0.0);
    let expected = expected_martingale_gap(&m, &sol.eta_star, 1.0).unwrap()[0];
    assert!((worst.mean[0] - expected).abs() < 4.0 * worst.std_error[0]);

    let neutral = martingale_gap_mc(&m, &flat(&[-0.3]), 1.0, &cfg).unwrap();
    assert_eq!(neutral.rejects_zero(3.0), vec![false]);

    let calm = MarketModel::constant(1.0, 0.5, 0.1, 0.02, &[0.3], &[0.0], &[0.2]).unwrap();
    let sol = SolutionPair::solve(&calm, 256).unwrap();
    let est = martingale_gap_mc(&calm, &sol.eta_star, 1.0, &cfg).unwrap();
    assert_eq!(est.rejects_zero(3.0), vec![false]);
}

#[test]
fn results_do_not_depend_on_scheduling() {
    let m = reference();
    let sol = SolutionPair::solve(&m, 256).unwrap();
    let s0 = StatePoint::new(1.0, 0.03, 0.0).unwrap();
    let pi = flat(&[0.4]);
    for cfg in [SimConfig::new(1001, 12, 42), SimConfig::new(1001, 12, 42).with_antithetic(true)] {
        let serial = estimate_j(&m, &pi, &sol.eta_star, &s0, &cfg).unwrap();
        let again = estimate_j(&m, &pi, &sol.eta_star, &s0, &cfg).unwrap();
        let threaded = estimate_j_with(&ReversedThreads(4), &m, &pi, &sol.eta_star, &s0, &cfg).unwrap();
        assert_eq!(serial, again);
        assert_eq!(serial.mean.to_bits(), threaded.mean.to_bits());
        assert_eq!(serial.std_error.to_bits(), threaded.std_error.to_bits());
    }
    let other = estimate_j(&m, &pi, &sol.eta_star, &s0, &SimConfig::new(1001, 12, 43)).unwrap();
    let base = estimate_j(&m, &pi, &sol.eta_star, &s0, &SimConfig::new(1001, 12, 42)).unwrap();
    assert_ne!(other.mean, base.mean);
}

#[test]
fn antithetic_pairs_reduce_the_error() {
    let m = reference();
    let s0 = StatePoint::new(1.0, 0.03, 0.0).unwrap();
    let pi = flat(&[1.0]);
    let eta = flat(&[0.0]);
    let plain = estimate_j(&m, &pi, &eta, &s0, &SimConfig::new(20_000, 16, 1)).unwrap();
    let anti = estimate_j(&m, &pi, &eta, &s0, &SimConfig::new(20_000, 16, 1).with_antithetic(true)).unwrap();
    assert_eq!(anti.paths, 20_000);
    assert!(anti.std_error < 0.5 * plain.std_error);
}

#[test]
fn budget_is_checked_before_simulating() {
    let m = reference();
    let s0 = StatePoint::new(1.0, 0.03, 0.0).unwrap();
    let mut cfg = SimConfig::new(1_000_000, 1000, 0);
    cfg.budget = 1_000_000;
    let err = estimate_j(&m, &flat(&[0.0]), &flat(&[0.0]), &s0, &cfg).unwrap_err();
    assert!(matches!(err, hwgame_core::Error::BudgetExceeded { .. }));
}
