//! Monte Carlo simulation of the wealth and the short rate under `Q^eta`.
//!
//! The measure change is a drift shift: under `Q^eta`
//!
//! ```text
//! dX = r X dt + pi Sigma (lambda + eta)^T X dt + pi Sigma X dW
//! dr = (b - kappa r + a eta^T) dt + a dW
//! ```
//!
//! The rate is advanced with the exact Gaussian transition of the integrating
//! factor process `exp(\int kappa) r` (per-step integrals by Simpson on eight
//! sub-panels). Its noise is the projection of the step's Brownian increment
//! on the rate-loading direction, rescaled to the exact transition variance,
//! so the same increment also drives the wealth. Log-wealth takes the step
//! integral of the rate, the step integral of the deterministic drift and the
//! increment times the step-averaged exposure `pi Sigma`.
//!
//! The rate integral over a step is either the trapezoid of the endpoint rates
//! or, by default, its exact conditional mean given the starting rate plus the
//! projection of its noise on the step increment. Under the saddle pair the
//! terminal utility is constant along every continuous path, so the estimator
//! variance is tiny and any deterministic bias shows; the trapezoid carries an
//! `O(dt^2)` bias that the conditional mean does not.
//!
//! Each path (or antithetic pair) owns the ChaCha8 stream numbered by its
//! index, and reductions run in index order, so results do not depend on how
//! the work is scheduled.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::closedform::utility;
use crate::curve::CoefficientCurve;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Coefficients, MarketModel, StatePoint};

/// Sub-panels per time step for the deterministic step integrals.
pub const STEP_PANELS: usize = 8;
pub const DEFAULT_BUDGET: u64 = 4_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// Upper bound on `paths * steps`.
    pub budget: u64,
    pub rate_integral: RateIntegral,
}

/// Per-step integral of the short rate in the wealth exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateIntegral {
    /// `(r_k + r_{k+1}) dt / 2`.
    Trapezoid,
    /// `E[\int r | r_k] + ` projection of the remaining noise on the increment.
    #[default]
    ConditionalMean,
}

impl SimConfig {
    pub fn new(paths: usize, steps: usize, seed: u64) -> Self {
        Self { paths, steps, seed, antithetic: false, budget: DEFAULT_BUDGET, rate_integral: RateIntegral::default() }
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.steps == 0 {
            return Err(Error::InvalidArgument("paths and steps must be positive".into()));
        }
        let requested = self.paths as u128 * self.steps as u128;
        if requested > self.budget as u128 {
            return Err(Error::BudgetExceeded { requested, budget: self.budget });
        }
        Ok(())
    }

    /// Independent samples: antithetic pairs count once.
    pub fn units(&self) -> usize {
        if self.antithetic {
            self.paths.div_ceil(2)
        } else {
            self.paths
        }
    }

    /// Simulated trajectories, `2 * units` with antithetics.
    pub fn trajectories(&self) -> usize {
        if self.antithetic {
            2 * self.units()
        } else {
            self.paths
        }
    }
}

/// Estimate of `J^{pi,eta}(x, r, t) = E^eta U(X_T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Simulated trajectories.
    pub paths: usize,
    pub seed: u64,
}

/// Runs an indexed job for every index and returns the results in index
/// order.
pub trait Executor {
    fn map<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(job).collect()
    }
}

/// Precomputed per-step coefficients on a uniform grid over `[t0, t1]`.
#[derive(Debug, Clone)]
pub struct StepPlan {
    pub n: usize,
    pub steps: usize,
    pub dt: f64,
    pub times: Vec<f64>,
    decay: Vec<f64>,
    rate_shift: Vec<f64>,
    rate_sd: Vec<f64>,
    /// Unit loading direction of the rate noise, `n` per step.
    rate_dir: Vec<f64>,
    /// `\int pi Sigma (lambda + eta)^T - |pi Sigma|^2 / 2` over the step.
    wealth_drift: Vec<f64>,
    /// Step-averaged `pi Sigma`, `n` per step.
    wealth_vol: Vec<f64>,
    /// `\int r = r_k int_decay + int_shift + int_noise . dW` over the step.
    int_decay: Vec<f64>,
    int_shift: Vec<f64>,
    int_noise: Vec<f64>,
    rate_integral: RateIntegral,
}

/// Simpson weights for `STEP_PANELS` panels.
fn simpson_weight(j: usize) -> f64 {
    if j == 0 || j == STEP_PANELS {
        1.0
    } else if j % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

impl StepPlan {
    /// `pi = None` plans the rate only (zero exposure).
    pub fn new(
        m: &MarketModel,
        pi: Option<&CoefficientCurve>,
        eta: &CoefficientCurve,
        t0: f64,
        t1: f64,
        steps: usize,
    ) -> Result<Self> {
        m.ensure_valid()?;
        let n = m.n;
        if eta.width() != n || pi.is_some_and(|p| p.width() != n) {
            return Err(Error::InvalidArgument("strategy curves must have the asset dimension".into()));
        }
        if !(t0 >= 0.0 && t1 <= m.horizon && t1 > t0) || steps == 0 {
            return Err(Error::Domain { t: t0, horizon: m.horizon });
        }
        let dt = (t1 - t0) / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|k| if k == steps { t1 } else { t0 + k as f64 * dt }).collect();
        let hs = dt / STEP_PANELS as f64;

        let mut plan = Self {
            n,
            steps,
            dt,
            times,
            decay: Vec::with_capacity(steps),
            rate_shift: Vec::with_capacity(steps),
            rate_sd: Vec::with_capacity(steps),
            rate_dir: Vec::with_capacity(steps * n),
            wealth_drift: Vec::with_capacity(steps),
            wealth_vol: Vec::with_capacity(steps * n),
            int_decay: Vec::with_capacity(steps),
            int_shift: Vec::with_capacity(steps),
            int_noise: Vec::with_capacity(steps * n),
            rate_integral: RateIntegral::default(),
        };

        let mut c = Coefficients::zeros(n);
        let mut eta_u = vec![0.0; n];
        let mut pi_u = vec![0.0; n];
        let mut exposure = vec![0.0; n];
        let mut kappa = [0.0; STEP_PANELS + 1];
        let mut samples = Vec::with_capacity(STEP_PANELS + 1);
        for k in 0..steps {
            let s = plan.times[k];
            samples.clear();
            for (j, kap) in kappa.iter_mut().enumerate() {
                let u = s + j as f64 * hs;
                m.coefficients_at(u, &mut c);
                eta.at_into(u, &mut eta_u);
                match pi {
                    Some(p) => {
                        p.at_into(u, &mut pi_u);
                        linalg::row_times_matrix(&pi_u, &c.sigma, &mut exposure);
                    }
                    None => exposure.iter_mut().for_each(|e| *e = 0.0),
                }
                *kap = c.kappa;
                samples.push((c.b + linalg::dot(&c.a, &eta_u), c.a.clone(), exposure.clone(), {
                    let shifted: Vec<f64> = c.lambda.iter().zip(&eta_u).map(|(l, e)| l + e).collect();
                    linalg::dot(&exposure, &shifted)
                }));
            }
            // \int_s^u kappa at the sub-nodes
            let cum = crate::quadrature::cumulative_from_start(&kappa, hs);
            let growth: Vec<f64> = cum.iter().map(|&d| libm::exp(d)).collect();
            let discount: Vec<f64> = growth.iter().map(|g| 1.0 / g).collect();
            let weighted_drift: Vec<f64> = samples.iter().zip(&growth).map(|(smp, g)| g * smp.0).collect();
            // \int_s^u e^D (b + a eta), and \int_u^{s+dt} e^{-D}
            let shift_to = crate::quadrature::cumulative_from_start(&weighted_drift, hs);
            let discount_tail = crate::quadrature::cumulative_from_end(&discount, hs);
            let mut int_decay = 0.0;
            let mut int_shift = 0.0;
            let mut int_noise = vec![0.0; n];
            let mut shift = 0.0;
            let mut var = 0.0;
            let mut dir = vec![0.0; n];
            let mut drift = 0.0;
            let mut vol = vec![0.0; n];
            for (j, (drift_r, a_u, p_u, excess)) in samples.iter().enumerate() {
                let w = simpson_weight(j) * hs / 3.0;
                let e = growth[j];
                shift += w * e * drift_r;
                int_decay += w * discount[j];
                int_shift += w * discount[j] * shift_to[j];
                let psi = e * discount_tail[j];
                for i in 0..n {
                    int_noise[i] += w * psi * a_u[i] / dt;
                }
                var += w * e * e * linalg::norm_sq(a_u);
                for i in 0..n {
                    dir[i] += w * e * a_u[i];
                    vol[i] += w * p_u[i];
                }
                drift += w * (excess - 0.5 * linalg::norm_sq(p_u));
            }
            vol.iter_mut().for_each(|v| *v /= dt);
            let dir_norm = libm::sqrt(linalg::norm_sq(&dir));
            if dir_norm > 0.0 {
                dir.iter_mut().for_each(|d| *d /= dir_norm);
            } else {
                var = 0.0;
            }
            plan.decay.push(libm::exp(-cum[STEP_PANELS]));
            plan.rate_shift.push(shift);
            plan.rate_sd.push(libm::sqrt(var.max(0.0)));
            plan.rate_dir.extend(dir);
            plan.wealth_drift.push(drift);
            plan.wealth_vol.extend(vol);
            plan.int_decay.push(int_decay);
            plan.int_shift.push(int_shift);
            plan.int_noise.extend(int_noise);
        }
        Ok(plan)
    }

    pub fn with_rate_integral(mut self, kind: RateIntegral) -> Self {
        self.rate_integral = kind;
        self
    }

    /// Advances the rate by step `k` with standard normals `z` (length `n`).
    #[inline]
    fn rate_step(&self, k: usize, r: f64, z: &[f64]) -> f64 {
        let dir = &self.rate_dir[k * self.n..(k + 1) * self.n];
        self.decay[k] * (r + self.rate_shift[k] + self.rate_sd[k] * linalg::dot(dir, z))
    }

    /// One trajectory driven by Brownian increments `dw` (`steps * n`,
    /// step-major). The increments are shared by the rate and the wealth.
    pub fn run_with_increments(&self, r0: f64, x0: f64, dw: &[f64]) -> PathOutcome {
        let n = self.n;
        let inv_sqrt_dt = 1.0 / libm::sqrt(self.dt);
        let mut z = vec![0.0; n];
        let mut r = r0;
        let mut int_r = 0.0;
        let mut log_x = libm::log(x0);
        for k in 0..self.steps {
            let inc = &dw[k * n..(k + 1) * n];
            for (zi, w) in z.iter_mut().zip(inc) {
                *zi = w * inv_sqrt_dt;
            }
            let next = self.rate_step(k, r, &z);
            let rate_part = match self.rate_integral {
                RateIntegral::Trapezoid => 0.5 * (r + next) * self.dt,
                RateIntegral::ConditionalMean => {
                    r * self.int_decay[k] + self.int_shift[k] + linalg::dot(&self.int_noise[k * n..(k + 1) * n], inc)
                }
            };
            int_r += rate_part;
            log_x += rate_part + self.wealth_drift[k] + linalg::dot(&self.wealth_vol[k * n..(k + 1) * n], inc);
            r = next;
        }
        PathOutcome { r_end: r, int_r, log_x }
    }

    fn run_stream(&self, r0: f64, x0: f64, rng: &mut ChaCha8Rng, sign: f64, dw: &mut [f64]) -> PathOutcome {
        fill_increments(rng, sign, self.dt, dw);
        self.run_with_increments(r0, x0, dw)
    }
}

/// Terminal quantities of one simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub r_end: f64,
    /// `\int r` along the path.
    pub int_r: f64,
    pub log_x: f64,
}

impl PathOutcome {
    pub fn wealth(&self) -> f64 {
        libm::exp(self.log_x)
    }
}

/// RNG owning stream `stream` of `seed`.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fills `dw` with `sign * sqrt(dt) * N(0, 1)` draws.
pub fn fill_increments(rng: &mut ChaCha8Rng, sign: f64, dt: f64, dw: &mut [f64]) {
    let scale = sign * libm::sqrt(dt);
    for w in dw.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *w = scale * z;
    }
}

/// Trajectories of one sampling unit: one path, or an antithetic pair.
fn unit_outcomes(
    plan: &StepPlan,
    cfg: &SimConfig,
    unit: usize,
    r0: f64,
    x0: f64,
) -> (PathOutcome, Option<PathOutcome>) {
    let mut rng = path_rng(cfg.seed, unit as u64);
    let mut dw = vec![0.0; plan.steps * plan.n];
    let first = plan.run_stream(r0, x0, &mut rng, 1.0, &mut dw);
    let second = cfg.antithetic.then(|| {
        dw.iter_mut().for_each(|w| *w = -*w);
        plan.run_with_increments(r0, x0, &dw)
    });
    (first, second)
}

/// Mean and standard error (unbiased variance) in index order.
pub fn mean_and_std_error(samples: &[f64]) -> (f64, f64) {
    let count = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / count;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|s| (s - mean) * (s - mean)).sum();
    (mean, libm::sqrt(ss / (count - 1.0) / count))
}

/// Rate trajectories on the step grid together with the Brownian increments
/// that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePaths {
    pub times: Vec<f64>,
    pub n: usize,
    /// `trajectories * (steps + 1)`, path-major.
    pub rates: Vec<f64>,
    /// `trajectories * steps * n`, path-major then step-major.
    pub increments: Vec<f64>,
}

impl RatePaths {
    pub fn trajectories(&self) -> usize {
        self.rates.len() / self.times.len()
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let len = self.times.len();
        &self.rates[p * len..(p + 1) * len]
    }

    pub fn path_increments(&self, p: usize) -> &[f64] {
        let len = (self.times.len() - 1) * self.n;
        &self.increments[p * len..(p + 1) * len]
    }
}

pub fn simulate_rate_paths(
    m: &MarketModel,
    eta: &CoefficientCurve,
    s0: &StatePoint,
    cfg: &SimConfig,
) -> Result<RatePaths> {
    cfg.validate()?;
    s0.check_horizon(m.horizon)?;
    let plan = StepPlan::new(m, None, eta, s0.t, m.horizon, cfg.steps)?;
    let width = plan.steps * plan.n;
    let mut rates = Vec::with_capacity(cfg.trajectories() * (plan.steps + 1));
    let mut increments = Vec::with_capacity(cfg.trajectories() * width);
    let mut z = vec![0.0; plan.n];
    let inv_sqrt_dt = 1.0 / libm::sqrt(plan.dt);
    for unit in 0..cfg.units() {
        let mut rng = path_rng(cfg.seed, unit as u64);
        let mut dw = vec![0.0; width];
        fill_increments(&mut rng, 1.0, plan.dt, &mut dw);
        let signs: &[f64] = if cfg.antithetic { &[1.0, -1.0] } else { &[1.0] };
        for &sign in signs {
            let mut r = s0.r;
            rates.push(r);
            for k in 0..plan.steps {
                for (zi, w) in z.iter_mut().zip(&dw[k * plan.n..(k + 1) * plan.n]) {
                    *zi = sign * w * inv_sqrt_dt;
                }
                r = plan.rate_step(k, r, &z);
                rates.push(r);
            }
            increments.extend(dw.iter().map(|w| sign * w));
        }
    }
    Ok(RatePaths { times: plan.times.clone(), n: plan.n, rates, increments })
}

fn check_inputs(m: &MarketModel, s0: &StatePoint, cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    s0.check_horizon(m.horizon)?;
    if !(s0.x > 0.0) {
        return Err(Error::NonPositiveWealth { x: s0.x });
    }
    if s0.t >= m.horizon {
        return Err(Error::Domain { t: s0.t, horizon: m.horizon });
    }
    Ok(())
}

/// Terminal wealth of every trajectory (antithetic partners adjacent).
pub fn simulate_wealth(
    m: &MarketModel,
    pi: &CoefficientCurve,
    eta: &CoefficientCurve,
    s0: &StatePoint,
    cfg: &SimConfig,
) -> Result<Vec<f64>> {
    Ok(terminal_outcomes(&Serial, m, pi, eta, s0, cfg)?.into_iter().map(|o| o.wealth()).collect())
}

/// Terminal outcomes of every trajectory in path order.
pub fn terminal_outcomes<E: Executor>(
    exec: &E,
    m: &MarketModel,
    pi: &CoefficientCurve,
    eta: &CoefficientCurve,
    s0: &StatePoint,
    cfg: &SimConfig,
) -> Result<Vec<PathOutcome>> {
    check_inputs(m, s0, cfg)?;
    let plan = StepPlan::new(m, Some(pi), eta, s0.t, m.horizon, cfg.steps)?.with_rate_integral(cfg.rate_integral);
    let units = exec.map(cfg.units(), |u| unit_outcomes(&plan, cfg, u, s0.r, s0.x));
    let mut out = Vec::with_capacity(cfg.trajectories());
    for (a, b) in units {
        out.push(a);
        out.extend(b);
    }
    Ok(out)
}

pub fn estimate_j(
    m: &MarketModel,
    pi: &CoefficientCurve,
    eta: &CoefficientCurve,
    s0: &StatePoint,
    cfg: &SimConfig,
) -> Result<GameEstimate> {
    estimate_j_with(&Serial, m, pi, eta, s0, cfg)
}

/// Monte Carlo estimate of `E^eta (X_T^pi)^gamma / gamma`, simulated directly
/// under `Q^eta`.
pub fn estimate_j_with<E: Executor>(
    exec: &E,
    m: &MarketModel,
    pi: &CoefficientCurve,
    eta: &CoefficientCurve,
    s0: &StatePoint,
    cfg: &SimConfig,
) -> Result<GameEstimate> {
    check_inputs(m, s0, cfg)?;
    let plan = StepPlan::new(m, Some(pi), eta, s0.t, m.horizon, cfg.steps)?.with_rate_integral(cfg.rate_integral);
    let gamma = m.gamma;
    let samples = exec.map(cfg.units(), |u| {
        let (a, b) = unit_outcomes(&plan, cfg, u, s0.r, s0.x);
        match b {
            Some(b) => 0.5 * (utility(gamma, a.wealth()) + utility(gamma, b.wealth())),
            None => utility(gamma, a.wealth()),
        }
    });
    let (mean, std_error) = mean_and_std_error(&samples);
    Ok(GameEstimate { mean, std_error, paths: cfg.trajectories(), seed: cfg.seed })
}

/// Per-asset estimate of `E^eta[S_T^i exp(-\int_0^T r) / S_0^i] - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleGapEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub paths: usize,
    pub maturity: f64,
}

impl MartingaleGapEstimate {
    /// Assets whose estimate differs from zero by more than `z` standard errors.
    pub fn rejects_zero(&self, z: f64) -> Vec<bool> {
        self.mean.iter().zip(&self.std_error).map(|(m, s)| m.abs() > z * s).collect()
    }
}

pub fn martingale_gap_mc(
    m: &MarketModel,
    eta: &CoefficientCurve,
    maturity: f64,
    cfg: &SimConfig,
) -> Result<MartingaleGapEstimate> {
    martingale_gap_mc_with(&Serial, m, eta, maturity, cfg)
}

/// Simulates the discounted prices `S_t exp(-\int_0^t r)` with the log-exact
/// scheme under `Q^eta`. The rate cancels exactly in the discounted price,
/// so the result does not depend on the initial rate.
pub fn martingale_gap_mc_with<E: Executor>(
    exec: &E,
    m: &MarketModel,
    eta: &CoefficientCurve,
    maturity: f64,
    cfg: &SimConfig,
) -> Result<MartingaleGapEstimate> {
    cfg.validate()?;
    m.ensure_valid()?;
    if !(maturity > 0.0 && maturity <= m.horizon) {
        return Err(Error::Domain { t: maturity, horizon: m.horizon });
    }
    let n = m.n;
    let steps = cfg.steps;
    let dt = maturity / steps as f64;
    let hs = dt / STEP_PANELS as f64;
    // per step and asset: \int (Sigma (lambda + eta))_i - |row_i|^2 dt / 2, and step-averaged rows
    let mut drift = vec![0.0; steps * n];
    let mut rows = vec![0.0; steps * n * n];
    let mut c = Coefficients::zeros(n);
    let mut eta_u = vec![0.0; n];
    let mut excess = vec![0.0; n];
    for k in 0..steps {
        let s = k as f64 * dt;
        for j in 0..=STEP_PANELS {
            let u = s + j as f64 * hs;
            let w = simpson_weight(j) * hs / 3.0;
            m.coefficients_at(u, &mut c);
            eta.at_into(u, &mut eta_u);
            let shifted: Vec<f64> = c.lambda.iter().zip(&eta_u).map(|(l, e)| l + e).collect();
            linalg::matrix_times_vec(&c.sigma, &shifted, &mut excess);
            for i in 0..n {
                drift[k * n + i] += w * excess[i];
                for l in 0..n {
                    rows[(k * n + i) * n + l] += w * c.sigma[i * n + l] / dt;
                }
            }
        }
        for i in 0..n {
            let row = &rows[(k * n + i) * n..(k * n + i + 1) * n];
            drift[k * n + i] -= 0.5 * linalg::norm_sq(row) * dt;
        }
    }

    let run = |dw: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in 0..steps {
            let inc = &dw[k * n..(k + 1) * n];
            for i in 0..n {
                out[i] += drift[k * n + i] + linalg::dot(&rows[(k * n + i) * n..(k * n + i + 1) * n], inc);
            }
        }
        out.iter_mut().for_each(|o| *o = libm::expm1(*o));
    };
    let samples = exec.map(cfg.units(), |u| {
        let mut rng = path_rng(cfg.seed, u as u64);
        let mut dw = vec![0.0; steps * n];
        fill_increments(&mut rng, 1.0, dt, &mut dw);
        let mut first = vec![0.0; n];
        run(&dw, &mut first);
        if cfg.antithetic {
            dw.iter_mut().for_each(|w| *w = -*w);
            let mut second = vec![0.0; n];
            run(&dw, &mut second);
            first.iter_mut().zip(&second).for_each(|(a, b)| *a = 0.5 * (*a + b));
        }
        first
    });
    let mut mean = Vec::with_capacity(n);
    let mut std_error = Vec::with_capacity(n);
    let mut column = Vec::with_capacity(samples.len());
    for i in 0..n {
        column.clear();
        column.extend(samples.iter().map(|s| s[i]));
        let (mu, se) = mean_and_std_error(&column);
        mean.push(mu);
        std_error.push(se);
    }
    Ok(MartingaleGapEstimate { mean, std_error, paths: cfg.trajectories(), maturity })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> MarketModel {
        MarketModel::constant(1.0, 0.5, 0.1, 0.02, &[0.3], &[0.01], &[0.2]).unwrap()
    }

    #[test]
    fn budget_enforced() {
        let mut cfg = SimConfig::new(1000, 100, 1);
        cfg.budget = 10_000;
        assert!(matches!(cfg.validate(), Err(Error::BudgetExceeded { .. })));
        cfg.budget = 100_000;
        assert!(cfg.validate().is_ok());
        assert!(SimConfig::new(0, 10, 1).validate().is_err());
    }

    #[test]
    fn antithetic_units() {
        let cfg = SimConfig::new(5, 4, 0).with_antithetic(true);
        assert_eq!(cfg.units(), 3);
        assert_eq!(cfg.trajectories(), 6);
    }

    #[test]
    fn antithetic_partners_mirror_increments() {
        let m = reference();
        let eta = CoefficientCurve::constant_vector(1.0, &[0.0]);
        let s0 = StatePoint::new(1.0, 0.03, 0.0).unwrap();
        let paths = simulate_rate_paths(&m, &eta, &s0, &SimConfig::new(4, 8, 3).with_antithetic(true)).unwrap();
        assert_eq!(paths.trajectories(), 4);
        let (a, b) = (paths.path_increments(0), paths.path_increments(1));
        assert!(a.iter().zip(b).all(|(x, y)| *x == -*y));
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = path_rng(9, 4);
        let mut b = path_rng(9, 4);
        let mut c = path_rng(9, 5);
        let (mut x, mut y, mut z) = ([0.0; 6], [0.0; 6], [0.0; 6]);
        fill_increments(&mut a, 1.0, 1.0, &mut x);
        fill_increments(&mut b, 1.0, 1.0, &mut y);
        fill_increments(&mut c, 1.0, 1.0, &mut z);
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn start_at_horizon_rejected() {
        let m = reference();
        let sol = crate::closedform::SolutionPair::solve(&m, 64).unwrap();
        let s0 = StatePoint::new(1.0, 0.03, 1.0).unwrap();
        assert!(estimate_j(&m, &sol.pi_star, &sol.eta_star, &s0, &SimConfig::new(10, 4, 0)).is_err());
    }

    #[test]
    fn standard_error_of_constant_is_zero() {
        assert_eq!(mean_and_std_error(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}
