//! The game with the market's drift shift confined to a compact convex set.
//!
//! Maximising `H` over `pi` leaves, as the `eta`-dependent part of the upper
//! Isaacs equation,
//!
//! ```text
//! Phi(eta) = -c |lambda + eta + f a|^2 / 2 + c (lambda + eta + f a)(lambda + eta)^T
//!            + c (lambda + eta + f a)(f a)^T + f a eta^T,      c = gamma / (1 - gamma)
//!          = c |lambda + eta + f a|^2 / 2 + f a eta^T.
//! ```
//!
//! Its Hessian in `eta` is `c I`, so the constrained minimiser is the
//! Euclidean projection of the stationary point `-lambda - (f / gamma) a`
//! onto the set. A projected-gradient iteration is kept as the general route
//! and as a cross-check of the projection.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardUniform};

use crate::closedform::check_on_grid;
use crate::curve::{CoefficientCurve, Interpolation, ValueShape};
use crate::error::{Error, Result};
use crate::hjbi::{box_offsets, snap_to, DerivativeMode, Hamiltonian};
use crate::linalg;
use crate::model::{Coefficients, MarketModel};
use crate::quadrature::cumulative_from_end;

/// Distance below which the constraint is considered slack.
pub const ACTIVE_TOLERANCE: f64 = 1e-10;
pub const PGD_TOLERANCE: f64 = 1e-12;
pub const PGD_MAX_ITERATIONS: usize = 10_000;
pub const ISAACS_TOLERANCE: f64 = 1e-6;

/// Compact convex uncertainty set for `eta`.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaSet {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl GammaSet {
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidArgument("box bounds must be non-empty and of equal length".into()));
        }
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) || lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::InvalidArgument(format!("box needs finite lo <= hi, got {lo:?} / {hi:?}")));
        }
        Ok(GammaSet::Box { lo, hi })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("ball center must be non-empty and finite".into()));
        }
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("ball radius must be finite and >= 0, got {radius}")));
        }
        Ok(GammaSet::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            GammaSet::Box { lo, .. } => lo.len(),
            GammaSet::Ball { center, .. } => center.len(),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, eta: &[f64]) -> Vec<f64> {
        match self {
            GammaSet::Box { lo, hi } => eta.iter().zip(lo.iter().zip(hi)).map(|(&e, (&l, &h))| e.clamp(l, h)).collect(),
            GammaSet::Ball { center, radius } => {
                let d: Vec<f64> = eta.iter().zip(center).map(|(e, c)| e - c).collect();
                let dist = libm::sqrt(linalg::norm_sq(&d));
                if dist <= *radius {
                    eta.to_vec()
                } else {
                    let s = radius / dist;
                    center.iter().zip(&d).map(|(c, x)| c + s * x).collect()
                }
            }
        }
    }

    pub fn distance(&self, eta: &[f64]) -> f64 {
        let p = self.project(eta);
        libm::sqrt(eta.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            GammaSet::Box { lo, hi } => (lo.clone(), hi.clone()),
            GammaSet::Ball { center, radius } => {
                (center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
            }
        }
    }

    /// Uniform tensor grid with `points` per axis clipped to the set.
    pub fn grid(&self, points: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = self.bounds();
        let n = self.dim();
        let half = 0.5;
        box_offsets(n, points, half)
            .into_iter()
            .map(|u| (0..n).map(|k| lo[k] + (u[k] + half) * (hi[k] - lo[k])).collect::<Vec<f64>>())
            .filter(|p| self.distance(p) <= ACTIVE_TOLERANCE)
            .collect()
    }

    /// `count` uniform samples of the set (rejection from the bounding box).
    pub fn samples(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let (lo, hi) = self.bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count && attempts < 1000 * count.max(1) {
            attempts += 1;
            let p: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| {
                    let u: f64 = StandardUniform.sample(&mut rng);
                    l + u * (h - l)
                })
                .collect();
            if self.distance(&p) <= ACTIVE_TOLERANCE {
                out.push(p);
            }
        }
        out
    }
}

fn check_dim(m: &MarketModel, set: &GammaSet) -> Result<()> {
    if set.dim() != m.n {
        return Err(Error::InvalidArgument(format!(
            "uncertainty set has dimension {}, model has {} assets",
            set.dim(),
            m.n
        )));
    }
    Ok(())
}

/// `Phi(eta)` at time `t` given the frozen coefficients and `f(t)`.
pub fn objective_at(gamma: f64, c: &Coefficients, f: f64, eta: &[f64]) -> f64 {
    let k = gamma / (1.0 - gamma);
    let mut u2 = 0.0;
    let mut cross = 0.0;
    let mut hedge = 0.0;
    let mut drift = 0.0;
    for i in 0..eta.len() {
        let shift = c.lambda[i] + eta[i];
        let fa = f * c.a[i];
        let u = shift + fa;
        u2 += u * u;
        cross += u * shift;
        hedge += u * fa;
        drift += fa * eta[i];
    }
    -0.5 * k * u2 + k * cross + k * hedge + drift
}

/// Gradient of `Phi`: `c (lambda + eta + f a) + f a`.
fn objective_gradient(gamma: f64, c: &Coefficients, f: f64, eta: &[f64]) -> Vec<f64> {
    let k = gamma / (1.0 - gamma);
    (0..eta.len()).map(|i| k * (c.lambda[i] + eta[i] + f * c.a[i]) + f * c.a[i]).collect()
}

pub fn eta_objective(m: &MarketModel, f: &CoefficientCurve, t: f64, eta: &[f64]) -> Result<f64> {
    let ft = f.eval_scalar(t)?;
    Ok(objective_at(m.gamma, &m.coefficients(t), ft, eta))
}

/// Stationary point of `Phi`: `-lambda - (f / gamma) a`.
pub fn unconstrained_minimizer(gamma: f64, c: &Coefficients, f: f64) -> Vec<f64> {
    let ratio = f / gamma;
    c.lambda.iter().zip(&c.a).map(|(l, a)| -l - ratio * a).collect()
}

pub fn minimize_eta(m: &MarketModel, f: &CoefficientCurve, t: f64, set: &GammaSet) -> Result<Vec<f64>> {
    check_dim(m, set)?;
    let ft = f.eval_scalar(t)?;
    let c = m.coefficients(t);
    Ok(set.project(&unconstrained_minimizer(m.gamma, &c, ft)))
}

/// Projected gradient descent with step `1 / L`, `L = gamma / (1 - gamma)`.
/// Returns the minimiser and the number of iterations used.
pub fn minimize_eta_projected_gradient(
    m: &MarketModel,
    f: &CoefficientCurve,
    t: f64,
    set: &GammaSet,
) -> Result<(Vec<f64>, usize)> {
    check_dim(m, set)?;
    let ft = f.eval_scalar(t)?;
    let c = m.coefficients(t);
    let step = (1.0 - m.gamma) / m.gamma;
    let mut eta = set.project(&vec![0.0; m.n]);
    for it in 1..=PGD_MAX_ITERATIONS {
        let grad = objective_gradient(m.gamma, &c, ft, &eta);
        let trial: Vec<f64> = eta.iter().zip(&grad).map(|(e, g)| e - step * g).collect();
        let next = set.project(&trial);
        let moved = libm::sqrt(next.iter().zip(&eta).map(|(a, b)| (a - b) * (a - b)).sum());
        eta = next;
        if moved < PGD_TOLERANCE {
            return Ok((eta, it));
        }
    }
    Ok((eta, PGD_MAX_ITERATIONS))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedSolution {
    pub eta_star: CoefficientCurve,
    pub pi_star: CoefficientCurve,
    /// Minimised `Phi` per grid time.
    pub objective: CoefficientCurve,
    /// Whether the constraint binds at each grid time.
    pub active: Vec<bool>,
}

/// Restricted saddle point on the grid of `f`:
/// `eta*` minimises `Phi` over the set and
/// `pi* = (lambda + eta* + f a) Sigma^{-1} / (1 - gamma)`.
pub fn restricted_saddle(m: &MarketModel, f: &CoefficientCurve, set: &GammaSet) -> Result<RestrictedSolution> {
    m.ensure_valid()?;
    check_dim(m, set)?;
    let n = m.n;
    let grid = f.breakpoints().to_vec();
    let mut c = Coefficients::zeros(n);
    let mut eta_v = Vec::with_capacity(grid.len() * n);
    let mut pi_v = Vec::with_capacity(grid.len() * n);
    let mut obj = Vec::with_capacity(grid.len());
    let mut active = Vec::with_capacity(grid.len());
    let mut rhs = vec![0.0; n];
    for (i, &t) in grid.iter().enumerate() {
        m.coefficients_at(t, &mut c);
        let ft = f.scalar_value_at(i);
        let free = unconstrained_minimizer(m.gamma, &c, ft);
        let eta = set.project(&free);
        let gap = libm::sqrt(free.iter().zip(&eta).map(|(a, b)| (a - b) * (a - b)).sum());
        active.push(gap > ACTIVE_TOLERANCE);
        for k in 0..n {
            rhs[k] = (c.lambda[k] + eta[k] + ft * c.a[k]) / (1.0 - m.gamma);
        }
        pi_v.extend(m.solve_sigma_row(t, &c.sigma, &rhs)?);
        obj.push(objective_at(m.gamma, &c, ft, &eta));
        eta_v.extend(eta);
    }
    Ok(RestrictedSolution {
        eta_star: CoefficientCurve::new(grid.clone(), eta_v, ValueShape::Vector(n), Interpolation::PiecewiseLinear)?,
        pi_star: CoefficientCurve::new(grid.clone(), pi_v, ValueShape::Vector(n), Interpolation::PiecewiseLinear)?,
        objective: CoefficientCurve::scalar(grid, obj, Interpolation::PiecewiseLinear)?,
        active,
    })
}

/// `g` for the restricted game:
/// `g' + |a|^2 f^2 / 2 + b f + min_Gamma Phi = 0`, `g(T) = 0`.
pub fn restricted_g(m: &MarketModel, f: &CoefficientCurve, set: &GammaSet, nodes: usize) -> Result<CoefficientCurve> {
    m.ensure_valid()?;
    check_dim(m, set)?;
    let grid = check_on_grid(m, f, nodes)?;
    let h = m.horizon / nodes as f64;
    let mut c = Coefficients::zeros(m.n);
    let integrand: Vec<f64> = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            m.coefficients_at(t, &mut c);
            restricted_integrand(m.gamma, &c, f.scalar_value_at(i), set)
        })
        .collect();
    let mut values = cumulative_from_end(&integrand, h);
    values[nodes] = 0.0;
    CoefficientCurve::scalar(grid, values, Interpolation::PiecewiseLinear)
}

fn restricted_integrand(gamma: f64, c: &Coefficients, f: f64, set: &GammaSet) -> f64 {
    let eta = set.project(&unconstrained_minimizer(gamma, c, f));
    0.5 * linalg::norm_sq(&c.a) * f * f + c.b * f + objective_at(gamma, c, f, &eta)
}

/// Discretisation of the Isaacs check.
#[derive(Debug, Clone, PartialEq)]
pub struct IsaacsGrid {
    pub t_points: usize,
    pub t_margin: f64,
    pub r_points: usize,
    pub r_range: (f64, f64),
    /// Points per axis of the `pi` box, centred on the restricted `pi*`.
    pub pi_points: usize,
    pub pi_half_width: f64,
    /// Shift applied to the `pi` box; a half spacing excludes `pi*`.
    pub pi_shift: f64,
    /// Points per axis of the set grid (`n <= 2`).
    pub set_points: usize,
    /// Random set samples for `n >= 3`.
    pub set_samples: usize,
    pub seed: u64,
}

impl IsaacsGrid {
    /// 101 points per axis for one asset, 51 for two.
    pub fn for_dimension(n: usize) -> Self {
        let points = if n <= 1 { 101 } else { 51 };
        Self {
            t_points: 11,
            t_margin: 1e-3,
            r_points: if n <= 1 { 5 } else { 2 },
            r_range: (-0.05, 0.15),
            pi_points: points,
            pi_half_width: 5.0,
            pi_shift: 0.0,
            set_points: points,
            set_samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsaacsReport {
    /// `max (min_eta max_pi H - max_pi min_eta H)` over `(t, r)`.
    pub max_gap: f64,
    /// `max |min_eta max_pi H|` over `(t, r)`.
    pub max_abs_value: f64,
    pub worst_t: f64,
    pub worst_r: f64,
    pub set_points: usize,
    pub pi_points: usize,
    pub passed: bool,
}

/// Discrete upper and lower values of `H` over a `pi` box and a grid of the
/// set, both augmented with the candidate saddle. `f'` and `g'` come from
/// central differences of the supplied curves.
pub fn check_isaacs_equality(
    m: &MarketModel,
    f: &CoefficientCurve,
    g_restricted: &CoefficientCurve,
    set: &GammaSet,
    grid: &IsaacsGrid,
) -> Result<IsaacsReport> {
    m.ensure_valid()?;
    check_dim(m, set)?;
    if f.breakpoints() != g_restricted.breakpoints() {
        return Err(Error::GridMismatch("f and g must share a grid".into()));
    }
    let n = m.n;
    let restricted = restricted_saddle(m, f, set)?;
    let mut set_grid = if n <= 2 { set.grid(grid.set_points) } else { set.samples(grid.set_samples, grid.seed) };
    let offsets = if n <= 2 {
        box_offsets(n, grid.pi_points, grid.pi_half_width)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(grid.seed ^ 0x9e37_79b9_7f4a_7c15);
        (0..grid.set_samples)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        let u: f64 = StandardUniform.sample(&mut rng);
                        grid.pi_half_width * (2.0 * u - 1.0)
                    })
                    .collect()
            })
            .collect()
    };
    let candidate_slot = set_grid.len();
    set_grid.push(vec![0.0; n]);

    let ts: Vec<f64> = (0..grid.t_points)
        .map(|k| m.horizon * (1.0 - grid.t_margin) * k as f64 / (grid.t_points.max(2) - 1) as f64)
        .collect();
    let ts = snap_to(&ts, f.breakpoints());
    let rs: Vec<f64> = (0..grid.r_points)
        .map(|k| {
            if grid.r_points <= 1 {
                grid.r_range.0
            } else {
                grid.r_range.0 + (grid.r_range.1 - grid.r_range.0) * k as f64 / (grid.r_points - 1) as f64
            }
        })
        .collect();

    let mut report = IsaacsReport {
        max_gap: 0.0,
        max_abs_value: 0.0,
        worst_t: 0.0,
        worst_r: 0.0,
        set_points: set_grid.len(),
        pi_points: offsets.len(),
        passed: false,
    };
    let mut pis = vec![vec![0.0; n]; offsets.len()];
    let mut column_min = vec![0.0; offsets.len()];
    let mut worst = f64::NEG_INFINITY;
    for &t in &ts {
        let ham = Hamiltonian::from_curves(m, f, g_restricted, t, DerivativeMode::CentralDifference)?;
        set_grid[candidate_slot] = restricted.eta_star.eval(t)?;
        let pi_c = restricted.pi_star.eval(t)?;
        for (p, off) in pis.iter_mut().zip(&offsets) {
            for k in 0..n {
                p[k] = pi_c[k] + grid.pi_shift + off[k];
            }
        }
        for &r in &rs {
            let mut upper = f64::INFINITY;
            column_min.iter_mut().for_each(|v| *v = f64::INFINITY);
            for eta in &set_grid {
                let mut row_max = f64::NEG_INFINITY;
                for (k, p) in pis.iter().enumerate() {
                    let h = ham.value(p, eta, r);
                    row_max = row_max.max(h);
                    column_min[k] = column_min[k].min(h);
                }
                upper = upper.min(row_max);
            }
            let lower = column_min.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let gap = upper - lower;
            report.max_gap = report.max_gap.max(gap);
            report.max_abs_value = report.max_abs_value.max(upper.abs());
            let score = gap.max(upper.abs());
            if score > worst {
                worst = score;
                report.worst_t = t;
                report.worst_r = r;
            }
        }
    }
    report.passed = report.max_gap < ISAACS_TOLERANCE && report.max_abs_value < ISAACS_TOLERANCE;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_validation() {
        assert!(GammaSet::boxed(vec![0.1], vec![-0.1]).is_err());
        assert!(GammaSet::ball(vec![0.0], -1.0).is_err());
        assert!(GammaSet::ball(vec![0.0], 0.0).is_ok());
    }

    #[test]
    fn projections() {
        let b = GammaSet::boxed(vec![-0.1, -1.0], vec![0.1, 1.0]).unwrap();
        assert_eq!(b.project(&[-0.31, 0.5]), vec![-0.1, 0.5]);
        let ball = GammaSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let p = ball.project(&[3.0, 4.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(ball.project(&[0.3, 0.4]), vec![0.3, 0.4]);
        let point = GammaSet::ball(vec![0.0], 0.0).unwrap();
        assert_eq!(point.project(&[-0.7]), vec![0.0]);
    }

    #[test]
    fn grid_stays_inside() {
        let ball = GammaSet::ball(vec![0.5, -0.5], 0.3).unwrap();
        let g = ball.grid(21);
        assert!(!g.is_empty());
        assert!(g.iter().all(|p| ball.distance(p) <= 1e-12));
        let s = ball.samples(200, 7);
        assert_eq!(s.len(), 200);
        assert!(s.iter().all(|p| ball.distance(p) <= 1e-12));
    }

    #[test]
    fn dimension_mismatch() {
        let m = MarketModel::constant(1.0, 0.5, 0.1, 0.02, &[0.3], &[0.01], &[0.2]).unwrap();
        let f = crate::closedform::solve_f(&m, 32).unwrap();
        let set = GammaSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(minimize_eta(&m, &f, 0.0, &set).is_err());
    }
}
