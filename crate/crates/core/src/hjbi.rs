//! Isaacs operator and pointwise saddle certification.
//!
//! Substituting `V = (x^gamma / gamma) exp(f r + g)` into the operator
//! `L^{pi,eta} V` and dividing by `V` gives
//!
//! ```text
//! H^{pi,eta}(r, t) = f' r + g' + |a|^2 f^2 / 2 + gamma (gamma - 1) |pi Sigma|^2 / 2
//!                  + gamma f (pi Sigma) a^T + gamma (pi Sigma)(lambda + eta)^T
//!                  + f eta a^T + (b - kappa r) f + gamma r
//! ```
//!
//! The verification argument needs
//! `H^{pi,eta*} <= H^{pi*,eta*} = 0 <= H^{pi*,eta}` for every `pi`, `eta`.
//! A grid can only cover a compact box; since `H` is strictly concave in `pi`
//! and affine in `eta` (with the `eta` coefficient cancelled at `pi*`), the box
//! check is complemented by the analytic best response in `pi`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::closedform::{g_integrand, SolutionPair};
use crate::curve::CoefficientCurve;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Coefficients, MarketModel};

/// Minimum quadrature resolution for evaluating `H` from a solved pair.
pub const MIN_H_NODES: usize = 512;
pub const INEQUALITY_TOLERANCE: f64 = 1e-9;
pub const SADDLE_VALUE_TOLERANCE: f64 = 1e-8;

/// How `f'` and `g'` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Right-hand sides of the ODEs: `f' = kappa f - gamma`, `g' = -integrand`.
    #[default]
    Exact,
    /// Central differences of the solved curves on their grid.
    CentralDifference,
}

/// Arguments of `H^{(pi, eta)}(r, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HQuery {
    pub pi: Vec<f64>,
    pub eta: Vec<f64>,
    pub r: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HValue {
    pub value: f64,
    /// A one-sided difference was needed at the edge of the grid.
    pub one_sided: bool,
}

/// `H` frozen at one time: everything but `(pi, eta, r)` is precomputed.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub t: f64,
    pub gamma: f64,
    pub f: f64,
    pub df: f64,
    pub dg: f64,
    pub coeffs: Coefficients,
    pub one_sided: bool,
    scratch_len: usize,
}

impl Hamiltonian {
    pub fn new(m: &MarketModel, sol: &SolutionPair, t: f64, mode: DerivativeMode) -> Result<Self> {
        Self::from_curves(m, &sol.f, &sol.g, t, mode)
    }

    /// `H` from solved `f` and `g` curves. In [`DerivativeMode::Exact`] the
    /// unconstrained `g` equation supplies `g'`; curves of the restricted game
    /// must use [`DerivativeMode::CentralDifference`].
    pub fn from_curves(
        m: &MarketModel,
        f: &CoefficientCurve,
        g: &CoefficientCurve,
        t: f64,
        mode: DerivativeMode,
    ) -> Result<Self> {
        let nodes = f.len() - 1;
        if nodes < MIN_H_NODES {
            return Err(Error::InvalidArgument(format!(
                "H needs a solution with at least {MIN_H_NODES} nodes, got {nodes}"
            )));
        }
        let f_t = f.eval_scalar(t)?;
        let coeffs = m.coefficients(t);
        let (df, dg, one_sided) = match mode {
            DerivativeMode::Exact => (coeffs.kappa * f_t - m.gamma, -g_integrand(m.gamma, &coeffs, f_t), false),
            DerivativeMode::CentralDifference => {
                let (df, e1) = grid_derivative(f, t);
                let (dg, e2) = grid_derivative(g, t);
                (df, dg, e1 || e2)
            }
        };
        Ok(Self { t, gamma: m.gamma, f: f_t, df, dg, coeffs, one_sided, scratch_len: m.n })
    }

    /// `H^{(pi, eta)}(r, t)`.
    pub fn value(&self, pi: &[f64], eta: &[f64], r: f64) -> f64 {
        let c = &self.coeffs;
        let mut ps = [0.0; 8];
        let mut heap;
        let ps: &mut [f64] = if self.scratch_len <= 8 {
            &mut ps[..self.scratch_len]
        } else {
            heap = vec![0.0; self.scratch_len];
            &mut heap
        };
        linalg::row_times_matrix(pi, &c.sigma, ps);
        let g = self.gamma;
        let f = self.f;
        let shifted: f64 = ps.iter().zip(c.lambda.iter().zip(eta)).map(|(p, (l, e))| p * (l + e)).sum();
        self.df * r
            + self.dg
            + 0.5 * linalg::norm_sq(&c.a) * f * f
            + 0.5 * g * (g - 1.0) * linalg::norm_sq(ps)
            + g * f * linalg::dot(ps, &c.a)
            + g * shifted
            + f * linalg::dot(eta, &c.a)
            + (c.b - c.kappa * r) * f
            + g * r
    }

    /// Maximiser of the concave quadratic `pi -> H^{(pi, eta)}`:
    /// `(lambda + eta + f a) Sigma^{-1} / (1 - gamma)`.
    pub fn best_response(&self, m: &MarketModel, eta: &[f64]) -> Result<Vec<f64>> {
        let c = &self.coeffs;
        let rhs: Vec<f64> = (0..m.n).map(|k| (c.lambda[k] + eta[k] + self.f * c.a[k]) / (1.0 - self.gamma)).collect();
        m.solve_sigma_row(self.t, &c.sigma, &rhs)
    }
}

/// Derivative of a piecewise-linear grid curve at `t`: central differences at
/// the nodes, interpolated linearly in between; second-order one-sided
/// differences at the two ends.
fn grid_derivative(c: &CoefficientCurve, t: f64) -> (f64, bool) {
    let ts = c.breakpoints();
    let last = ts.len() - 1;
    let node = |i: usize| -> (f64, bool) {
        let y = |j: usize| c.scalar_value_at(j);
        if i == 0 {
            let h = ts[1] - ts[0];
            ((-3.0 * y(0) + 4.0 * y(1) - y(2)) / (2.0 * h), true)
        } else if i == last {
            let h = ts[last] - ts[last - 1];
            ((3.0 * y(last) - 4.0 * y(last - 1) + y(last - 2)) / (2.0 * h), true)
        } else {
            ((y(i + 1) - y(i - 1)) / (ts[i + 1] - ts[i - 1]), false)
        }
    };
    let t = t.clamp(0.0, ts[last]);
    let i = ts.partition_point(|&b| b <= t).max(1) - 1;
    if ts[i] == t || i == last {
        return node(i);
    }
    let (d0, e0) = node(i);
    let (d1, e1) = node(i + 1);
    let s = (t - ts[i]) / (ts[i + 1] - ts[i]);
    (d0 + s * (d1 - d0), e0 || e1)
}

pub fn h_value(m: &MarketModel, sol: &SolutionPair, q: &HQuery, mode: DerivativeMode) -> Result<HValue> {
    if q.pi.len() != m.n || q.eta.len() != m.n {
        return Err(Error::InvalidArgument(format!("pi and eta must have length {}", m.n)));
    }
    let h = Hamiltonian::new(m, sol, q.t, mode)?;
    Ok(HValue { value: h.value(&q.pi, &q.eta, q.r), one_sided: h.one_sided })
}

/// The ansatz `V(x, r, t)` built from a solved pair, suitable for
/// [`l_operator`]. Between grid nodes `f` and `g` are cubic Hermite
/// interpolants whose node slopes are the ODE right-hand sides, so the ansatz
/// is smooth in `t` to the order of the quadrature.
pub fn ansatz_value<'a>(m: &'a MarketModel, sol: &'a SolutionPair) -> impl Fn(f64, f64, f64) -> f64 + 'a {
    move |x, r, t| {
        let (f, g) = hermite_exponents(m, sol, t);
        crate::closedform::utility(m.gamma, x) * libm::exp(f * r + g)
    }
}

fn hermite_exponents(m: &MarketModel, sol: &SolutionPair, t: f64) -> (f64, f64) {
    let ts = sol.grid();
    let last = ts.len() - 1;
    let t = t.clamp(0.0, ts[last]);
    let i = (ts.partition_point(|&b| b <= t).max(1) - 1).min(last - 1);
    let h = ts[i + 1] - ts[i];
    let s = (t - ts[i]) / h;
    let slopes = |j: usize| {
        let c = m.coefficients(ts[j]);
        let f = sol.f.scalar_value_at(j);
        (c.kappa * f - m.gamma, -g_integrand(m.gamma, &c, f))
    };
    let ((df0, dg0), (df1, dg1)) = (slopes(i), slopes(i + 1));
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    let cubic = |c: &CoefficientCurve, d0: f64, d1: f64| {
        h00 * c.scalar_value_at(i) + h * h10 * d0 + h01 * c.scalar_value_at(i + 1) + h * h11 * d1
    };
    (cubic(&sol.f, df0, df1), cubic(&sol.g, dg0, dg1))
}

pub const FD_STEP_X_RELATIVE: f64 = 1e-4;
pub const FD_STEP_R: f64 = 1e-5;
pub const FD_STEP_T: f64 = 1e-5;

/// `L^{pi,eta} V(x, r, t)` with all partial derivatives of `v` taken by
/// central finite differences.
pub fn l_operator<V: Fn(f64, f64, f64) -> f64>(m: &MarketModel, v: &V, q: &HQuery, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonPositiveWealth { x });
    }
    if !(q.t >= 0.0 && q.t <= m.horizon) {
        return Err(Error::Domain { t: q.t, horizon: m.horizon });
    }
    let (r, t) = (q.r, q.t);
    let dx = FD_STEP_X_RELATIVE * x;
    let (dr, dt) = (FD_STEP_R, FD_STEP_T);

    let v0 = v(x, r, t);
    let (vxp, vxm) = (v(x + dx, r, t), v(x - dx, r, t));
    let (vrp, vrm) = (v(x, r + dr, t), v(x, r - dr, t));
    let v_x = (vxp - vxm) / (2.0 * dx);
    let v_xx = (vxp - 2.0 * v0 + vxm) / (dx * dx);
    let v_r = (vrp - vrm) / (2.0 * dr);
    let v_rr = (vrp - 2.0 * v0 + vrm) / (dr * dr);
    let v_xr =
        (v(x + dx, r + dr, t) - v(x + dx, r - dr, t) - v(x - dx, r + dr, t) + v(x - dx, r - dr, t)) / (4.0 * dx * dr);
    let (t_lo, t_hi) = ((t - dt).max(0.0), (t + dt).min(m.horizon));
    let v_t = (v(x, r, t_hi) - v(x, r, t_lo)) / (t_hi - t_lo);

    let c = m.coefficients(t);
    let mut ps = vec![0.0; m.n];
    linalg::row_times_matrix(&q.pi, &c.sigma, &mut ps);
    let shifted: f64 = ps.iter().zip(c.lambda.iter().zip(&q.eta)).map(|(p, (l, e))| p * (l + e)).sum();
    Ok(v_t
        + 0.5 * linalg::norm_sq(&c.a) * v_rr
        + 0.5 * linalg::norm_sq(&ps) * x * x * v_xx
        + linalg::dot(&ps, &c.a) * x * v_xr
        + shifted * x * v_x
        + linalg::dot(&q.eta, &c.a) * v_r
        + (c.b - c.kappa * r) * v_r
        + r * x * v_x)
}

/// Grid for [`certify_saddle`]: `t` from 0 to `T (1 - t_margin)` snapped to
/// the solution grid, `r` over a range, and boxes of perturbations around the
/// candidate strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationGrid {
    pub t_points: usize,
    pub t_margin: f64,
    pub r_points: usize,
    pub r_range: (f64, f64),
    pub pi_points: usize,
    pub pi_half_width: f64,
    pub eta_points: usize,
    pub eta_half_width: f64,
    pub mode: DerivativeMode,
}

impl Default for CertificationGrid {
    fn default() -> Self {
        Self {
            t_points: 21,
            t_margin: 1e-3,
            r_points: 21,
            r_range: (-0.05, 0.15),
            pi_points: 21,
            pi_half_width: 5.0,
            eta_points: 21,
            eta_half_width: 5.0,
            mode: DerivativeMode::Exact,
        }
    }
}

/// Perturbation tensor grids larger than this fall back to axis lines and
/// the main diagonal.
const MAX_TENSOR_POINTS: usize = 20_000;

/// Offsets forming a box of half-width `half` with `points` per axis.
pub(crate) fn box_offsets(n: usize, points: usize, half: f64) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if points <= 1 {
        vec![0.0]
    } else {
        (0..points).map(|k| -half + 2.0 * half * k as f64 / (points - 1) as f64).collect()
    };
    let tensor = axis.len().checked_pow(n as u32).filter(|&s| s <= MAX_TENSOR_POINTS);
    match tensor {
        Some(size) => (0..size)
            .map(|mut idx| {
                (0..n)
                    .map(|_| {
                        let v = axis[idx % axis.len()];
                        idx /= axis.len();
                        v
                    })
                    .collect()
            })
            .collect(),
        None => {
            let mut out = Vec::new();
            for k in 0..n {
                for &v in &axis {
                    let mut p = vec![0.0; n];
                    p[k] = v;
                    out.push(p);
                }
            }
            out.extend(axis.iter().map(|&v| vec![v; n]));
            out
        }
    }
}

/// Moves every time to the nearest breakpoint of `grid`, where sampled
/// strategies hold their computed values instead of interpolants.
pub(crate) fn snap_to(times: &[f64], grid: &[f64]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            let i = grid.partition_point(|&g| g < t);
            if i == 0 {
                grid[0]
            } else if i == grid.len() || t - grid[i - 1] <= grid[i] - t {
                grid[i - 1]
            } else {
                grid[i]
            }
        })
        .collect()
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect()
}

/// The grid point where the certificate is worst.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstPoint {
    /// `"upper"`, `"lower"` or `"saddle-value"`.
    pub kind: String,
    pub t: f64,
    pub r: f64,
    pub pi: Vec<f64>,
    pub eta: Vec<f64>,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleCertificate {
    pub grid: CertificationGrid,
    /// `max H(pi, eta^) - H(pi^, eta^)` over the tested `pi`.
    pub max_violation_upper: f64,
    /// `max H(pi^, eta^) - H(pi^, eta)` over the tested `eta`.
    pub max_violation_lower: f64,
    pub h_at_saddle_max_abs: f64,
    pub points_checked: u64,
    /// Rate volatility vanishes identically.
    pub degenerate: bool,
    pub passed: bool,
    pub worst: Option<WorstPoint>,
}

pub fn certify_saddle(m: &MarketModel, sol: &SolutionPair, grid: &CertificationGrid) -> Result<SaddleCertificate> {
    certify_candidate(m, sol, &sol.pi_star, &sol.eta_star, grid)
}

/// Certifies an arbitrary candidate pair `(pi^, eta^)` against the saddle
/// inequalities of `H` built from `sol`.
pub fn certify_candidate(
    m: &MarketModel,
    sol: &SolutionPair,
    pi_hat: &CoefficientCurve,
    eta_hat: &CoefficientCurve,
    grid: &CertificationGrid,
) -> Result<SaddleCertificate> {
    let n = m.n;
    let ts = snap_to(&linspace(0.0, m.horizon * (1.0 - grid.t_margin), grid.t_points), sol.grid());
    let rs = linspace(grid.r_range.0, grid.r_range.1, grid.r_points);
    let pi_offsets = box_offsets(n, grid.pi_points, grid.pi_half_width);
    let eta_offsets = box_offsets(n, grid.eta_points, grid.eta_half_width);

    let mut upper = f64::NEG_INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut at_saddle = 0.0_f64;
    let mut worst: Option<WorstPoint> = None;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut checked = 0u64;
    let mut pi = vec![0.0; n];
    let mut eta = vec![0.0; n];

    let mut consider = |kind: &str, amount: f64, tol: f64, t: f64, r: f64, p: &[f64], e: &[f64]| {
        if amount - tol > worst_excess {
            worst_excess = amount - tol;
            worst = Some(WorstPoint { kind: kind.into(), t, r, pi: p.to_vec(), eta: e.to_vec(), amount });
        }
    };

    for &t in &ts {
        let ham = Hamiltonian::new(m, sol, t, grid.mode)?;
        let pi_c = pi_hat.eval(t)?;
        let eta_c = eta_hat.eval(t)?;
        let best = ham.best_response(m, &eta_c)?;
        for &r in &rs {
            let h0 = ham.value(&pi_c, &eta_c, r);
            checked += 1;
            at_saddle = at_saddle.max(h0.abs());
            consider("saddle-value", h0.abs(), SADDLE_VALUE_TOLERANCE, t, r, &pi_c, &eta_c);

            let mut test_pi = |p: &[f64]| {
                let d = ham.value(p, &eta_c, r) - h0;
                upper = upper.max(d);
                consider("upper", d, INEQUALITY_TOLERANCE, t, r, p, &eta_c);
            };
            test_pi(&best);
            checked += 1;
            for off in &pi_offsets {
                for k in 0..n {
                    pi[k] = pi_c[k] + off[k];
                }
                test_pi(&pi);
                checked += 1;
            }
            for off in &eta_offsets {
                for k in 0..n {
                    eta[k] = eta_c[k] + off[k];
                }
                let d = h0 - ham.value(&pi_c, &eta, r);
                lower = lower.max(d);
                consider("lower", d, INEQUALITY_TOLERANCE, t, r, &pi_c, &eta);
                checked += 1;
            }
        }
    }

    let passed = upper <= INEQUALITY_TOLERANCE && lower <= INEQUALITY_TOLERANCE && at_saddle <= SADDLE_VALUE_TOLERANCE;
    Ok(SaddleCertificate {
        grid: grid.clone(),
        max_violation_upper: upper,
        max_violation_lower: lower,
        h_at_saddle_max_abs: at_saddle,
        points_checked: checked,
        degenerate: m.rate_is_deterministic(),
        passed,
        worst,
    })
}

/// Second difference of `eta -> H` along `direction` with step `step`.
pub fn eta_second_difference(h: &Hamiltonian, pi: &[f64], eta: &[f64], r: f64, direction: &[f64], step: f64) -> f64 {
    let shift = |s: f64| -> Vec<f64> { eta.iter().zip(direction).map(|(e, d)| e + s * d).collect() };
    h.value(pi, &shift(step), r) - 2.0 * h.value(pi, eta, r) + h.value(pi, &shift(-step), r)
}

/// Finite-difference Hessian of `pi -> H`, row-major.
pub fn pi_hessian(h: &Hamiltonian, pi: &[f64], eta: &[f64], r: f64, step: f64) -> Vec<f64> {
    let n = pi.len();
    let eval = |di: Option<(usize, f64)>, dj: Option<(usize, f64)>| -> f64 {
        let mut p = pi.to_vec();
        for (k, s) in [di, dj].into_iter().flatten() {
            p[k] += s;
        }
        h.value(&p, eta, r)
    };
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (eval(Some((i, step)), Some((j, step)))
                - eval(Some((i, step)), Some((j, -step)))
                - eval(Some((i, -step)), Some((j, step)))
                + eval(Some((i, -step)), Some((j, -step))))
                / (4.0 * step * step);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_offsets_tensor_and_fallback() {
        assert_eq!(box_offsets(1, 3, 1.0), vec![vec![-1.0], vec![0.0], vec![1.0]]);
        assert_eq!(box_offsets(2, 3, 1.0).len(), 9);
        let big = box_offsets(4, 21, 1.0);
        assert_eq!(big.len(), 4 * 21 + 21);
    }

    #[test]
    fn too_coarse_solution_rejected() {
        let m = MarketModel::constant(1.0, 0.5, 0.1, 0.02, &[0.3], &[0.01], &[0.2]).unwrap();
        let sol = SolutionPair::solve(&m, 64).unwrap();
        let q = HQuery { pi: vec![0.0], eta: vec![0.0], r: 0.0, t: 0.5 };
        assert!(h_value(&m, &sol, &q, DerivativeMode::Exact).is_err());
    }

    #[test]
    fn one_sided_flag_at_edges() {
        let m = MarketModel::constant(1.0, 0.5, 0.1, 0.02, &[0.3], &[0.01], &[0.2]).unwrap();
        let sol = SolutionPair::solve(&m, 512).unwrap();
        let q = |t| HQuery { pi: vec![0.0], eta: vec![0.0], r: 0.0, t };
        assert!(h_value(&m, &sol, &q(0.0), DerivativeMode::CentralDifference).unwrap().one_sided);
        assert!(!h_value(&m, &sol, &q(0.5), DerivativeMode::CentralDifference).unwrap().one_sided);
        assert!(!h_value(&m, &sol, &q(0.0), DerivativeMode::Exact).unwrap().one_sided);
    }
}
