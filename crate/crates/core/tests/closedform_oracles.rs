// Oracles keep every digit they were frozen with.
#![allow(clippy::excessive_precision)]

use hwgame_core::closedform::{
    expected_martingale_gap, martingale_gap, saddle_point, solve_f, solve_g, traditional_strategy, value_function,
    SolutionPair, DEFAULT_NODES,
};
use hwgame_core::curve::{CoefficientCurve, Interpolation};
use hwgame_core::model::{bond_volatility, bond_volatility_curve, MarketModel, StatePoint};

// Frozen from an independent 30-digit quadrature of the reference model.
const F0: f64 = 0.475_812_909_820_202_13;
const G0: f64 = 0.004_104_068_842_242_431_8;
const V0: f64 = 2.037_096_758_681_952_7;
const PI0: f64 = -0.047_581_290_982_020_213;
const ETA0: f64 = -0.309_516_258_196_404_04;
const TRADITIONAL0: f64 = 3.047_581_290_982_020_2;

fn reference() -> MarketModel {
    MarketModel::constant(1.0, 0.5, 0.1, 0.02, &[0.3], &[0.01], &[0.2]).unwrap()
}

fn with_gamma(gamma: f64) -> MarketModel {
    MarketModel::constant(1.0, gamma, 0.1, 0.02, &[0.3], &[0.01], &[0.2]).unwrap()
}

/// Time-varying two-asset model with coefficients linear in time.
fn varying() -> MarketModel {
    let grid = vec![0.0, 2.0];
    let scalar = |f: &dyn Fn(f64) -> f64| {
        CoefficientCurve::scalar(grid.clone(), grid.iter().map(|&t| f(t)).collect(), Interpolation::PiecewiseLinear)
            .unwrap()
    };
    let vector = |f: &dyn Fn(f64) -> Vec<f64>| {
        let rows: Vec<Vec<f64>> = grid.iter().map(|&t| f(t)).collect();
        CoefficientCurve::vector(grid.clone(), &rows, Interpolation::PiecewiseLinear).unwrap()
    };
    let sigma = {
        let values: Vec<f64> = grid.iter().flat_map(|&t| [0.2 + 0.02 * t, 0.0, 0.05, 0.15 - 0.01 * t]).collect();
        CoefficientCurve::new(grid.clone(), values, hwgame_core::ValueShape::Matrix(2), Interpolation::PiecewiseLinear)
            .unwrap()
    };
    let m = MarketModel {
        n: 2,
        horizon: 2.0,
        gamma: 0.4,
        kappa: scalar(&|t| 0.2 + 0.15 * t),
        b: scalar(&|t| 0.01 + 0.005 * t),
        lambda: vector(&|t| vec![0.25 + 0.02 * t, 0.1]),
        a: vector(&|t| vec![0.01, -0.008 + 0.002 * t]),
        sigma,
    };
    m.ensure_valid().unwrap();
    m
}

/// `f` for constant coefficients.
fn f_closed(m_gamma: f64, kappa: f64, tau: f64) -> f64 {
    m_gamma * (1.0 - (-kappa * tau).exp()) / kappa
}

#[test]
fn f_at_zero_matches_closed_form() {
    let f = solve_f(&reference(), DEFAULT_NODES).unwrap();
    assert!((f.eval_scalar(0.0).unwrap() - F0).abs() < 1e-12);
    assert!((F0 - f_closed(0.5, 0.1, 1.0)).abs() < 1e-15);
    assert_eq!(f.eval_scalar(1.0).unwrap(), 0.0);
}

#[test]
fn f_for_constant_kappa_on_the_whole_grid() {
    let m = MarketModel::constant(3.0, 0.3, 0.7, 0.0, &[0.1], &[0.02], &[0.3]).unwrap();
    let f = solve_f(&m, 512).unwrap();
    for (t, v) in f.breakpoints().iter().zip(f.values()) {
        assert!((v - f_closed(0.3, 0.7, 3.0 - t)).abs() < 1e-10, "t = {t}");
    }
}

#[test]
fn zero_kappa_gives_linear_f() {
    let m = MarketModel::constant(2.0, 0.5, 0.0, 0.0, &[0.2], &[0.01], &[0.2]).unwrap();
    let f = solve_f(&m, 64).unwrap();
    assert!((f.eval_scalar(0.0).unwrap() - 1.0).abs() < 1e-14);
}

fn g_integrand_oracle(gamma: f64, kappa: f64, b: f64, lambda: f64, a: f64, t: f64) -> f64 {
    let f = f_closed(gamma, kappa, 1.0 - t);
    -a * a * f * f / (2.0 * gamma) - f * lambda * a + b * f
}

#[test]
fn g_at_zero_matches_trapezoid_oracle() {
    let nodes = 1_000_000;
    let h = 1.0 / nodes as f64;
    let mut trapezoid =
        0.5 * (g_integrand_oracle(0.5, 0.1, 0.02, 0.3, 0.01, 0.0) + g_integrand_oracle(0.5, 0.1, 0.02, 0.3, 0.01, 1.0));
    for k in 1..nodes {
        trapezoid += g_integrand_oracle(0.5, 0.1, 0.02, 0.3, 0.01, k as f64 * h);
    }
    trapezoid *= h;

    let m = reference();
    let f = solve_f(&m, DEFAULT_NODES).unwrap();
    let g = solve_g(&m, &f, DEFAULT_NODES).unwrap();
    let g0 = g.eval_scalar(0.0).unwrap();
    assert!((g0 - trapezoid).abs() < 1e-9, "{g0} vs {trapezoid}");
    assert!((g0 - G0).abs() < 1e-12);
    assert_eq!(g.eval_scalar(1.0).unwrap(), 0.0);
}

#[test]
fn g_vanishes_without_rate_volatility_or_drift() {
    let m = MarketModel::constant(1.0, 0.5, 0.1, 0.0, &[0.3], &[0.0], &[0.2]).unwrap();
    let sol = SolutionPair::solve(&m, 128).unwrap();
    assert!(sol.g.values().iter().all(|&v| v == 0.0));
}

#[test]
fn g_on_a_foreign_grid_is_rejected() {
    let m = reference();
    let f = solve_f(&m, 128).unwrap();
    assert!(solve_g(&m, &f, 256).is_err());
}

#[test]
fn saddle_point_values() {
    let m = reference();
    let f = solve_f(&m, DEFAULT_NODES).unwrap();
    let (pi, eta) = saddle_point(&m, &f).unwrap();
    assert!((pi.eval(0.0).unwrap()[0] - PI0).abs() < 1e-12);
    assert!((eta.eval(0.0).unwrap()[0] - ETA0).abs() < 1e-12);
    assert_eq!(pi.eval(1.0).unwrap()[0], 0.0);
    assert_eq!(eta.eval(1.0).unwrap()[0], -0.3);
}

#[test]
fn saddle_without_rate_volatility() {
    let m = MarketModel::constant(1.0, 0.5, 0.1, 0.02, &[0.3, 0.1], &[0.0, 0.0], &[0.2, 0.0, 0.1, 0.3]).unwrap();
    let sol = SolutionPair::solve(&m, 64).unwrap();
    assert!(sol.pi_star.values().iter().all(|&v| v == 0.0));
    for i in 0..sol.eta_star.len() {
        assert_eq!(sol.eta_star.value_at(i), &[-0.3, -0.1]);
    }
}

#[test]
fn traditional_strategy_values() {
    let m = reference();
    let f = solve_f(&m, DEFAULT_NODES).unwrap();
    let trad = traditional_strategy(&m, &f).unwrap();
    assert!((trad.eval(0.0).unwrap()[0] - TRADITIONAL0).abs() < 1e-11);
    assert!((trad.eval(1.0).unwrap()[0] - 0.3 / 0.2 / 0.5).abs() < 1e-15);

    let flat = MarketModel::constant(1.0, 0.5, 0.1, 0.02, &[0.0], &[0.0], &[0.2]).unwrap();
    let f = solve_f(&flat, 32).unwrap();
    assert!(traditional_strategy(&flat, &f).unwrap().values().iter().all(|&v| v == 0.0));
}

#[test]
fn value_function_values() {
    let m = reference();
    let sol = SolutionPair::solve(&m, DEFAULT_NODES).unwrap();
    let v = value_function(&m, &sol, &StatePoint::new(1.0, 0.03, 0.0).unwrap()).unwrap();
    assert!((v - V0).abs() < 1e-11, "{v}");
    assert!(((2.0 * (F0 * 0.03 + G0).exp()) - V0).abs() < 1e-14);
    assert_eq!(value_function(&m, &sol, &StatePoint::new(1.0, 0.7, 1.0).unwrap()).unwrap(), 2.0);
    assert_eq!(value_function(&m, &sol, &StatePoint::new(4.0, -0.2, 1.0).unwrap()).unwrap(), 4.0);
    let bad = StatePoint { x: 0.0, r: 0.0, t: 0.0 };
    assert!(value_function(&m, &sol, &bad).is_err());
}

#[test]
fn ode_residuals_on_a_varying_model() {
    let m = varying();
    let nodes = 4096;
    let sol = SolutionPair::solve(&m, nodes).unwrap();
    let h = m.horizon / nodes as f64;
    let (ts, fs, gs) = (sol.grid(), sol.f.values(), sol.g.values());
    let mut worst_f: f64 = 0.0;
    let mut worst_g: f64 = 0.0;
    for i in 1..nodes {
        let c = m.coefficients(ts[i]);
        let df = (fs[i + 1] - fs[i - 1]) / (2.0 * h);
        let dg = (gs[i + 1] - gs[i - 1]) / (2.0 * h);
        worst_f = worst_f.max((df - c.kappa * fs[i] + m.gamma).abs());
        let a2: f64 = c.a.iter().map(|a| a * a).sum();
        let la: f64 = c.lambda.iter().zip(&c.a).map(|(l, a)| l * a).sum();
        let f = fs[i];
        let integrand = 0.5 * f * f * a2 + 0.5 * a2 * f * f * (m.gamma - 1.0) / m.gamma - a2 * f * f - f * la + c.b * f;
        worst_g = worst_g.max((dg + integrand).abs());
    }
    assert!(worst_f < 1e-6, "{worst_f}");
    assert!(worst_g < 1e-6, "{worst_g}");
}

#[test]
fn gamma_invariance_is_exact() {
    let a = SolutionPair::solve(&with_gamma(0.2), 1024).unwrap();
    let b = SolutionPair::solve(&with_gamma(0.8), 1024).unwrap();
    assert_eq!(a.pi_star, b.pi_star);
    assert_eq!(a.eta_star, b.eta_star);
}

#[test]
fn both_forms_of_the_robust_strategy_agree() {
    let m = varying();
    let sol = SolutionPair::solve(&m, 256).unwrap();
    for (i, &t) in sol.grid().iter().enumerate() {
        let c = m.coefficients(t);
        let f = sol.f.scalar_value_at(i);
        let eta = sol.eta_star.value_at(i);
        let rhs: Vec<f64> = (0..2).map(|k| (c.lambda[k] + eta[k] + f * c.a[k]) / (1.0 - m.gamma)).collect();
        let alt = m.solve_sigma_row(t, &c.sigma, &rhs).unwrap();
        for (x, y) in alt.iter().zip(sol.pi_star.value_at(i)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn eta_deletion_identity() {
    let m = varying();
    let sol = SolutionPair::solve(&m, 512).unwrap();
    for (i, &t) in sol.grid().iter().enumerate() {
        let c = m.coefficients(t);
        let pi = sol.pi_star.value_at(i);
        let f = sol.f.scalar_value_at(i);
        for col in 0..2 {
            let exposure: f64 = (0..2).map(|row| pi[row] * c.sigma[row * 2 + col]).sum();
            assert!((m.gamma * exposure + c.a[col] * f).abs() < 1e-12);
        }
    }
}

#[test]
fn martingale_gap_cases() {
    let m = reference();
    let sol = SolutionPair::solve(&m, DEFAULT_NODES).unwrap();
    let neutral = CoefficientCurve::constant_vector(1.0, &[-0.3]);
    assert_eq!(martingale_gap(&m, &neutral, 0.4).unwrap(), vec![0.0]);
    let gap = martingale_gap(&m, &sol.eta_star, 0.0).unwrap()[0];
    assert!((gap - (-(F0 / 0.5) * 0.2 * 0.01)).abs() < 1e-14);
    // exp(\int_0^1 -(f/gamma) Sigma a) - 1, 30-digit oracle
    let expected = expected_martingale_gap(&m, &sol.eta_star, 1.0).unwrap()[0];
    assert!((expected - -0.000_967_015_745_821_721_4).abs() < 1e-10, "{expected}");

    let flat = MarketModel::constant(1.0, 0.5, 0.1, 0.02, &[0.3], &[0.0], &[0.2]).unwrap();
    let sol = SolutionPair::solve(&flat, 64).unwrap();
    assert_eq!(martingale_gap(&flat, &sol.eta_star, 0.5).unwrap(), vec![0.0]);
}

#[test]
fn bond_volatility_values() {
    let v = bond_volatility(1.0, 0.1, 1.0, 0.0);
    assert!((v + 0.063_212_055_882_855_77).abs() < 1e-16);
    assert_eq!(bond_volatility(0.3, 0.02, 5.0, 5.0), 0.0);
    let grid: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
    let curve = bond_volatility_curve(0.3, 0.02, 1.0, &grid).unwrap();
    assert_eq!(curve.eval_scalar(1.0).unwrap(), 0.0);
    assert!(bond_volatility_curve(0.0, 0.02, 1.0, &grid).is_err());
}

#[test]
fn mixed_stock_bond_model_solves() {
    let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
    let bond = bond_volatility_curve(0.1, 0.01, 2.0, &grid).unwrap();
    let values: Vec<f64> =
        grid.iter().enumerate().flat_map(|(i, _)| [0.2, 0.05, 0.0, bond.scalar_value_at(i)]).collect();
    let sigma =
        CoefficientCurve::new(grid.clone(), values, hwgame_core::ValueShape::Matrix(2), Interpolation::PiecewiseLinear)
            .unwrap();
    let m = MarketModel {
        n: 2,
        horizon: 1.0,
        gamma: 0.5,
        kappa: CoefficientCurve::constant(1.0, 0.1),
        b: CoefficientCurve::constant(1.0, 0.02),
        lambda: CoefficientCurve::constant_vector(1.0, &[0.3, 0.1]),
        a: CoefficientCurve::constant_vector(1.0, &[0.0, 0.01]),
        sigma,
    };
    assert!(m.validate().is_empty());
    let sol = SolutionPair::solve(&m, 256).unwrap();
    assert!(sol.pi_star.values().iter().all(|v| v.is_finite()));
}
