//! Closed-form solution of the unconstrained game.
//!
//! The value function is `V(x, r, t) = (x^gamma / gamma) exp(f(t) r + g(t))`
//! with `f(T) = g(T) = 0`, where
//!
//! ```text
//! f(t) = gamma exp(-\int_t^T kappa) \int_t^T exp(\int_k^T kappa) dk
//! g(t) = \int_t^T [ f^2 |a|^2 / 2 + |a|^2 f^2 (gamma - 1) / (2 gamma)
//!                   - |a|^2 f^2 - f lambda a^T + b f ] ds
//! ```
//!
//! and the saddle point is `pi* = -(f / gamma) a Sigma^{-1}`,
//! `eta* = -lambda - (f / gamma) a`. Both strategies depend on `f / gamma`
//! only, which is computed directly as a gamma-free integral so that the
//! strategies are exactly independent of the risk aversion.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::curve::{uniform_grid, CoefficientCurve, Interpolation, ValueShape};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Coefficients, MarketModel, StatePoint};
use crate::quadrature::{cumulative_from_end, simpson};

pub const DEFAULT_NODES: usize = 2048;
pub const MIN_NODES: usize = 16;

/// Solved exponents and the saddle strategies, all sampled on one uniform
/// grid of `quadrature_nodes + 1` points.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPair {
    pub f: CoefficientCurve,
    pub g: CoefficientCurve,
    /// `f / gamma`, computed without gamma.
    pub f_over_gamma: CoefficientCurve,
    pub pi_star: CoefficientCurve,
    pub eta_star: CoefficientCurve,
    pub quadrature_nodes: usize,
}

impl SolutionPair {
    pub fn solve(m: &MarketModel, nodes: usize) -> Result<Self> {
        let ratio = solve_f_over_gamma(m, nodes)?;
        let f = scale_curve(&ratio, m.gamma);
        let g = solve_g(m, &f, nodes)?;
        let (pi_star, eta_star) = saddle_from_ratio(m, &ratio)?;
        Ok(Self { f, g, f_over_gamma: ratio, pi_star, eta_star, quadrature_nodes: nodes })
    }

    pub fn grid(&self) -> &[f64] {
        self.f.breakpoints()
    }
}

/// A point of the value function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueQuery {
    pub state: StatePoint,
    pub value: f64,
}

fn check_nodes(nodes: usize) -> Result<()> {
    if nodes < MIN_NODES {
        return Err(Error::InvalidArgument(format!("quadrature needs at least {MIN_NODES} nodes, got {nodes}")));
    }
    Ok(())
}

fn scale_curve(c: &CoefficientCurve, k: f64) -> CoefficientCurve {
    let values = c.values().iter().map(|v| k * v).collect();
    CoefficientCurve::new(c.breakpoints().to_vec(), values, c.shape(), c.interpolation()).expect("same layout")
}

/// `f / gamma = exp(-\int_t^T kappa) \int_t^T exp(\int_k^T kappa) dk`.
pub fn solve_f_over_gamma(m: &MarketModel, nodes: usize) -> Result<CoefficientCurve> {
    m.ensure_valid()?;
    check_nodes(nodes)?;
    let grid = uniform_grid(m.horizon, nodes);
    let h = m.horizon / nodes as f64;
    let kappa: Vec<f64> = grid.iter().map(|&t| m.kappa.scalar_at(t)).collect();
    // K_i = \int_{t_i}^T kappa
    let big_k = cumulative_from_end(&kappa, h);
    let growth: Vec<f64> = big_k.iter().map(|&k| libm::exp(k)).collect();
    let outer = cumulative_from_end(&growth, h);
    let mut values: Vec<f64> = big_k.iter().zip(&outer).map(|(&k, &i)| libm::exp(-k) * i).collect();
    values[nodes] = 0.0;
    CoefficientCurve::scalar(grid, values, Interpolation::PiecewiseLinear)
}

pub fn solve_f(m: &MarketModel, nodes: usize) -> Result<CoefficientCurve> {
    Ok(scale_curve(&solve_f_over_gamma(m, nodes)?, m.gamma))
}

/// Integrand of `g` at one instant: `g' = -g_integrand`.
pub fn g_integrand(gamma: f64, c: &Coefficients, f: f64) -> f64 {
    let a2 = linalg::norm_sq(&c.a);
    let f2 = f * f;
    0.5 * f2 * a2 + 0.5 * a2 * f2 * (gamma - 1.0) / gamma - a2 * f2 - f * linalg::dot(&c.lambda, &c.a) + c.b * f
}

/// Checks that `f` sits on the uniform quadrature grid with `nodes` intervals.
pub(crate) fn check_on_grid(m: &MarketModel, f: &CoefficientCurve, nodes: usize) -> Result<Vec<f64>> {
    let grid = uniform_grid(m.horizon, nodes);
    if f.shape() != ValueShape::Scalar || f.breakpoints() != grid.as_slice() {
        return Err(Error::GridMismatch(format!(
            "f has {} breakpoints, expected the uniform {}-interval grid on [0, {}]",
            f.len(),
            nodes,
            m.horizon
        )));
    }
    Ok(grid)
}

pub fn solve_g(m: &MarketModel, f: &CoefficientCurve, nodes: usize) -> Result<CoefficientCurve> {
    m.ensure_valid()?;
    check_nodes(nodes)?;
    let grid = check_on_grid(m, f, nodes)?;
    let h = m.horizon / nodes as f64;
    let mut c = Coefficients::zeros(m.n);
    let integrand: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            m.coefficients_at(t, &mut c);
            g_integrand(m.gamma, &c, f.scalar_value_at(i))
        })
        .collect();
    let mut values = cumulative_from_end(&integrand, h);
    values[nodes] = 0.0;
    CoefficientCurve::scalar(grid, values, Interpolation::PiecewiseLinear)
}

/// Saddle strategies `(pi*, eta*)` on the grid of `f`.
pub fn saddle_point(m: &MarketModel, f: &CoefficientCurve) -> Result<(CoefficientCurve, CoefficientCurve)> {
    saddle_from_ratio(m, &scale_curve(f, 1.0 / m.gamma))
}

/// Saddle strategies from `f / gamma` directly.
pub fn saddle_from_ratio(m: &MarketModel, ratio: &CoefficientCurve) -> Result<(CoefficientCurve, CoefficientCurve)> {
    let n = m.n;
    let grid = ratio.breakpoints().to_vec();
    let mut c = Coefficients::zeros(n);
    let mut pi = Vec::with_capacity(grid.len() * n);
    let mut eta = Vec::with_capacity(grid.len() * n);
    let mut rhs = vec![0.0; n];
    for (i, &t) in grid.iter().enumerate() {
        m.coefficients_at(t, &mut c);
        let phi = ratio.scalar_value_at(i);
        for k in 0..n {
            rhs[k] = -phi * c.a[k];
            eta.push(-c.lambda[k] - phi * c.a[k]);
        }
        pi.extend(m.solve_sigma_row(t, &c.sigma, &rhs)?);
    }
    let pi = CoefficientCurve::new(grid.clone(), pi, ValueShape::Vector(n), Interpolation::PiecewiseLinear)?;
    let eta = CoefficientCurve::new(grid, eta, ValueShape::Vector(n), Interpolation::PiecewiseLinear)?;
    Ok((pi, eta))
}

/// `V(x, r, t) = (x^gamma / gamma) exp(f(t) r + g(t))`.
pub fn value_function(m: &MarketModel, sol: &SolutionPair, s: &StatePoint) -> Result<f64> {
    if !(s.x > 0.0) {
        return Err(Error::NonPositiveWealth { x: s.x });
    }
    let f = sol.f.eval_scalar(s.t)?;
    let g = sol.g.eval_scalar(s.t)?;
    Ok(utility(m.gamma, s.x) * libm::exp(f * s.r + g))
}

pub fn value_query(m: &MarketModel, sol: &SolutionPair, s: StatePoint) -> Result<ValueQuery> {
    Ok(ValueQuery { state: s, value: value_function(m, sol, &s)? })
}

/// Power utility `x^gamma / gamma`.
pub fn utility(gamma: f64, x: f64) -> f64 {
    libm::pow(x, gamma) / gamma
}

/// Excess drift `Sigma_t (lambda_t + eta_t)^T` of the discounted assets under
/// `Q^eta`; zero iff `Q^eta` is a martingale measure at `t`.
pub fn martingale_gap(m: &MarketModel, eta: &CoefficientCurve, t: f64) -> Result<Vec<f64>> {
    let eta_t = eta.eval(t)?;
    let c = m.coefficients(t);
    let shifted: Vec<f64> = c.lambda.iter().zip(&eta_t).map(|(l, e)| l + e).collect();
    let mut out = vec![0.0; m.n];
    linalg::matrix_times_vec(&c.sigma, &shifted, &mut out);
    Ok(out)
}

/// `E^eta[S_T^i exp(-\int_0^T r) / S_0^i] - 1 = exp(\int_0^T gap_i) - 1` per asset.
pub fn expected_martingale_gap(m: &MarketModel, eta: &CoefficientCurve, maturity: f64) -> Result<Vec<f64>> {
    if !(maturity > 0.0 && maturity <= m.horizon) {
        return Err(Error::Domain { t: maturity, horizon: m.horizon });
    }
    (0..m.n)
        .map(|i| {
            let integral =
                simpson(|t| martingale_gap(m, eta, t).map(|g| g[i]).unwrap_or(f64::NAN), 0.0, maturity, 4096);
            Ok(libm::expm1(integral))
        })
        .collect()
}

/// Non-robust strategy `(lambda + f a) Sigma^{-1} / (1 - gamma)` on the grid of `f`.
pub fn traditional_strategy(m: &MarketModel, f: &CoefficientCurve) -> Result<CoefficientCurve> {
    let n = m.n;
    let grid = f.breakpoints().to_vec();
    let mut c = Coefficients::zeros(n);
    let mut values = Vec::with_capacity(grid.len() * n);
    let mut rhs = vec![0.0; n];
    for (i, &t) in grid.iter().enumerate() {
        m.coefficients_at(t, &mut c);
        let ft = f.scalar_value_at(i);
        for k in 0..n {
            rhs[k] = (c.lambda[k] + ft * c.a[k]) / (1.0 - m.gamma);
        }
        values.extend(m.solve_sigma_row(t, &c.sigma, &rhs)?);
    }
    CoefficientCurve::new(grid, values, ValueShape::Vector(n), Interpolation::PiecewiseLinear)
}
