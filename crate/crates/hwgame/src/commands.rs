//! The four pipelines. Each writes its files into the output directory and
//! reports a [`Status`]; every failure maps to a stable exit code.

use std::path::PathBuf;
use std::time::Instant;

use hwgame_core::closedform::{expected_martingale_gap, traditional_strategy, utility, value_function, SolutionPair};
use hwgame_core::curve::CoefficientCurve;
use hwgame_core::hjbi::{certify_candidate, SaddleCertificate, INEQUALITY_TOLERANCE, SADDLE_VALUE_TOLERANCE};
use hwgame_core::montecarlo::{estimate_j_with, martingale_gap_mc_with, terminal_outcomes, GameEstimate, SimConfig};
use hwgame_core::restricted::{check_isaacs_equality, restricted_g, restricted_saddle, IsaacsReport, ISAACS_TOLERANCE};
use hwgame_core::Error;
use serde::Serialize;

use crate::config::{Player, Resolved};
use crate::exec::Pool;
use crate::output;

/// Standard errors allowed between a Monte Carlo estimate and `V`.
pub const MC_Z: f64 = 3.0;
pub const DEFAULT_OUTPUT_DIR: &str = "output";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Certify,
    Simulate,
    Restricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    CertificationFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(Vec<String>),
    Budget(String),
    Io(String),
}

impl Failure {
    fn from_core(e: Error) -> Self {
        match e {
            Error::BudgetExceeded { .. } => Failure::Budget(e.to_string()),
            Error::InvalidModel(v) => Failure::Config(v.iter().map(ToString::to_string).collect()),
            other => Failure::Config(vec![other.to_string()]),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from_core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// 0 success, 1 certification failure, 2 invalid configuration (or unusable
/// output directory), 3 simulation budget exceeded.
pub fn exit_code(result: &Result<Status, Failure>) -> i32 {
    match result {
        Ok(Status::Success) => 0,
        Ok(Status::CertificationFailed) => 1,
        Err(Failure::Config(_)) | Err(Failure::Io(_)) => 2,
        Err(Failure::Budget(_)) => 3,
    }
}

pub fn run(command: Command, run: &Resolved, pool: &Pool) -> Result<Status, Failure> {
    let start = Instant::now();
    let status = match command {
        Command::Solve => solve(run),
        Command::Certify => certify(run),
        Command::Simulate => simulate(run, pool),
        Command::Restricted => restricted(run),
    }?;
    eprintln!("elapsed {:.3} s on {} workers", start.elapsed().as_secs_f64(), pool.workers());
    Ok(status)
}

fn output_dir(run: &Resolved) -> PathBuf {
    PathBuf::from(run.config.output_dir.as_deref().unwrap_or(DEFAULT_OUTPUT_DIR))
}

#[derive(Serialize)]
struct State {
    x: f64,
    r: f64,
    t: f64,
}

fn state(run: &Resolved) -> State {
    State { x: run.state.x, r: run.state.r, t: run.state.t }
}

#[derive(Serialize)]
struct ValueReport {
    config_hash: String,
    quadrature_nodes: usize,
    assets: usize,
    horizon: f64,
    gamma: f64,
    state: State,
    value: f64,
    f: f64,
    g: f64,
    pi_star: Vec<f64>,
    eta_star: Vec<f64>,
}

fn solve(run: &Resolved) -> Result<Status, Failure> {
    let m = &run.model;
    let sol = SolutionPair::solve(m, run.config.quadrature_nodes)?;
    let t = run.state.t;
    let report = ValueReport {
        config_hash: run.hash.clone(),
        quadrature_nodes: run.config.quadrature_nodes,
        assets: m.n,
        horizon: m.horizon,
        gamma: m.gamma,
        state: state(run),
        value: value_function(m, &sol, &run.state)?,
        f: sol.f.eval_scalar(t)?,
        g: sol.g.eval_scalar(t)?,
        pi_star: sol.pi_star.eval(t)?,
        eta_star: sol.eta_star.eval(t)?,
    };
    let dir = output_dir(run);
    output::write(&dir, "f.csv", &output::curve_csv("f", &sol.f))?;
    output::write(&dir, "g.csv", &output::curve_csv("g", &sol.g))?;
    output::write(&dir, "pi_star.csv", &output::curve_csv("pi_star", &sol.pi_star))?;
    output::write(&dir, "eta_star.csv", &output::curve_csv("eta_star", &sol.eta_star))?;
    output::write(&dir, "value.json", &output::json(&report))?;
    println!("V = {} at x = {}, r = {}, t = {}", output::number(report.value), run.state.x, run.state.r, t);
    Ok(Status::Success)
}

#[derive(Serialize)]
struct GridReport {
    t_points: usize,
    t_margin: f64,
    r_points: usize,
    r_range: [f64; 2],
    pi_points: usize,
    pi_half_width: f64,
    eta_points: usize,
    eta_half_width: f64,
    mode: &'static str,
}

#[derive(Serialize)]
struct WorstReport {
    kind: String,
    t: f64,
    r: f64,
    pi: Vec<f64>,
    eta: Vec<f64>,
    amount: f64,
}

#[derive(Serialize)]
struct IsaacsJson {
    passed: bool,
    max_gap: f64,
    max_abs_value: f64,
    worst_t: f64,
    worst_r: f64,
    set_points: usize,
    pi_points: usize,
    tolerance: f64,
}

impl From<&IsaacsReport> for IsaacsJson {
    fn from(r: &IsaacsReport) -> Self {
        Self {
            passed: r.passed,
            max_gap: r.max_gap,
            max_abs_value: r.max_abs_value,
            worst_t: r.worst_t,
            worst_r: r.worst_r,
            set_points: r.set_points,
            pi_points: r.pi_points,
            tolerance: ISAACS_TOLERANCE,
        }
    }
}

#[derive(Serialize)]
struct CertificateReport {
    config_hash: String,
    candidate: &'static str,
    passed: bool,
    degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'static str>,
    max_violation_upper: f64,
    max_violation_lower: f64,
    h_at_saddle_max_abs: f64,
    inequality_tolerance: f64,
    saddle_value_tolerance: f64,
    points_checked: u64,
    grid: GridReport,
    worst: Option<WorstReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    isaacs: Option<IsaacsJson>,
}

fn certificate_report(run: &Resolved, cert: &SaddleCertificate, isaacs: Option<&IsaacsReport>) -> CertificateReport {
    let g = &cert.grid;
    CertificateReport {
        config_hash: run.hash.clone(),
        candidate: if run.config.certify.robust { "robust" } else { "traditional" },
        passed: cert.passed && isaacs.is_none_or(|r| r.passed),
        degenerate: cert.degenerate,
        note: cert.degenerate.then_some("degenerate game: the rate volatility vanishes, so pi* = 0 and eta* = -lambda"),
        max_violation_upper: cert.max_violation_upper,
        max_violation_lower: cert.max_violation_lower,
        h_at_saddle_max_abs: cert.h_at_saddle_max_abs,
        inequality_tolerance: INEQUALITY_TOLERANCE,
        saddle_value_tolerance: SADDLE_VALUE_TOLERANCE,
        points_checked: cert.points_checked,
        grid: GridReport {
            t_points: g.t_points,
            t_margin: g.t_margin,
            r_points: g.r_points,
            r_range: [g.r_range.0, g.r_range.1],
            pi_points: g.pi_points,
            pi_half_width: g.pi_half_width,
            eta_points: g.eta_points,
            eta_half_width: g.eta_half_width,
            mode: match g.mode {
                hwgame_core::hjbi::DerivativeMode::Exact => "exact",
                hwgame_core::hjbi::DerivativeMode::CentralDifference => "central-difference",
            },
        },
        worst: cert.worst.as_ref().map(|w| WorstReport {
            kind: w.kind.clone(),
            t: w.t,
            r: w.r,
            pi: w.pi.clone(),
            eta: w.eta.clone(),
            amount: w.amount,
        }),
        isaacs: isaacs.map(IsaacsJson::from),
    }
}

fn certify(run: &Resolved) -> Result<Status, Failure> {
    let m = &run.model;
    let nodes = run.config.quadrature_nodes;
    let sol = SolutionPair::solve(m, nodes)?;
    let pi = if run.config.certify.robust { sol.pi_star.clone() } else { traditional_strategy(m, &sol.f)? };
    let cert = certify_candidate(m, &sol, &pi, &sol.eta_star, &run.config.certify.grid())?;
    let isaacs = match &run.config.gamma_set {
        Some(spec) => {
            let set = spec.build().map_err(|e| Failure::Config(vec![e]))?;
            let g = restricted_g(m, &sol.f, &set, nodes)?;
            Some(check_isaacs_equality(m, &sol.f, &g, &set, &run.config.isaacs.grid(m.n))?)
        }
        None => None,
    };
    let report = certificate_report(run, &cert, isaacs.as_ref());
    output::write(&output_dir(run), "certificate.json", &output::json(&report))?;

    if report.passed {
        let note = if cert.degenerate { " (degenerate game)" } else { "" };
        println!("certification passed on {} points{note}", cert.points_checked);
        return Ok(Status::Success);
    }
    if !cert.passed {
        if let Some(w) = &cert.worst {
            eprintln!(
                "certification failed: worst {} violation {} at t = {}, r = {}, pi = {}, eta = {}",
                w.kind,
                output::number(w.amount),
                output::number(w.t),
                output::number(w.r),
                output::vector(&w.pi),
                output::vector(&w.eta)
            );
        }
    }
    if let Some(r) = isaacs.as_ref().filter(|r| !r.passed) {
        eprintln!(
            "isaacs check failed: gap {} and |value| {} (worst at t = {}, r = {})",
            output::number(r.max_gap),
            output::number(r.max_abs_value),
            output::number(r.worst_t),
            output::number(r.worst_r)
        );
    }
    Ok(Status::CertificationFailed)
}

#[derive(Serialize)]
struct SimReport {
    paths: usize,
    steps: usize,
    seed: u64,
    antithetic: bool,
    rate_integral: &'static str,
}

fn sim_report(cfg: &SimConfig) -> SimReport {
    SimReport {
        paths: cfg.paths,
        steps: cfg.steps,
        seed: cfg.seed,
        antithetic: cfg.antithetic,
        rate_integral: match cfg.rate_integral {
            hwgame_core::montecarlo::RateIntegral::Trapezoid => "trapezoid",
            hwgame_core::montecarlo::RateIntegral::ConditionalMean => "conditional-mean",
        },
    }
}

#[derive(Serialize)]
struct Estimate {
    mean: f64,
    std_error: f64,
    paths: usize,
    /// `(mean - V) / std_error`.
    z: f64,
}

impl Estimate {
    fn new(e: &GameEstimate, v: f64) -> Self {
        Self { mean: e.mean, std_error: e.std_error, paths: e.paths, z: (e.mean - v) / e.std_error }
    }
}

#[derive(Serialize)]
struct SaddleEstimate {
    #[serde(flatten)]
    estimate: Estimate,
    /// `|J - V| <= 3 SE`.
    pass: bool,
}

#[derive(Serialize)]
struct PerturbationEstimate {
    target: &'static str,
    shift: Vec<f64>,
    #[serde(flatten)]
    estimate: Estimate,
    /// `J(pi, eta*) <= V + 3 SE` for `pi`, `J(pi*, eta) >= V - 3 SE` for `eta`.
    pass: bool,
}

#[derive(Serialize)]
struct GapReport {
    eta: &'static str,
    maturity: f64,
    paths: usize,
    antithetic: bool,
    mean: Vec<f64>,
    std_error: Vec<f64>,
    expected: Vec<f64>,
    /// Zero drift rejected at 3 standard errors.
    non_martingale: Vec<bool>,
}

#[derive(Serialize)]
struct EstimatesReport {
    config_hash: String,
    state: State,
    value: f64,
    sim: SimReport,
    saddle: SaddleEstimate,
    perturbations: Vec<PerturbationEstimate>,
    martingale_gap: Vec<GapReport>,
}

fn shifted(curve: &CoefficientCurve, shift: &[f64]) -> Result<CoefficientCurve, Failure> {
    let w = curve.width();
    let values = curve.values().iter().enumerate().map(|(i, v)| v + shift[i % w]).collect();
    Ok(CoefficientCurve::new(curve.breakpoints().to_vec(), values, curve.shape(), curve.interpolation())?)
}

fn simulate(run: &Resolved, pool: &Pool) -> Result<Status, Failure> {
    let m = &run.model;
    let spec = &run.config.sim;
    let cfg = spec.sim_config();
    let gap_cfg = spec.gap_config();
    cfg.validate()?;
    gap_cfg.validate()?;

    let sol = SolutionPair::solve(m, run.config.quadrature_nodes)?;
    let s0 = &run.state;
    let v = value_function(m, &sol, s0)?;
    let saddle = estimate_j_with(pool, m, &sol.pi_star, &sol.eta_star, s0, &cfg)?;

    let mut perturbations = Vec::with_capacity(spec.perturbations.len());
    for p in &spec.perturbations {
        let (target, est, pass) = match p.target {
            Player::Pi => {
                let pi = shifted(&sol.pi_star, &p.shift)?;
                let e = estimate_j_with(pool, m, &pi, &sol.eta_star, s0, &cfg)?;
                ("pi", e, e.mean <= v + MC_Z * e.std_error)
            }
            Player::Eta => {
                let eta = shifted(&sol.eta_star, &p.shift)?;
                let e = estimate_j_with(pool, m, &sol.pi_star, &eta, s0, &cfg)?;
                ("eta", e, e.mean >= v - MC_Z * e.std_error)
            }
        };
        perturbations.push(PerturbationEstimate {
            target,
            shift: p.shift.clone(),
            estimate: Estimate::new(&est, v),
            pass,
        });
    }

    let maturity = spec.gap_maturity.unwrap_or(m.horizon);
    let neutral = CoefficientCurve::new(
        m.lambda.breakpoints().to_vec(),
        m.lambda.values().iter().map(|l| -l).collect(),
        m.lambda.shape(),
        m.lambda.interpolation(),
    )?;
    let mut gaps = Vec::with_capacity(2);
    for (label, eta) in [("eta_star", &sol.eta_star), ("minus_lambda", &neutral)] {
        let est = martingale_gap_mc_with(pool, m, eta, maturity, &gap_cfg)?;
        gaps.push(GapReport {
            eta: label,
            maturity,
            paths: est.paths,
            antithetic: gap_cfg.antithetic,
            non_martingale: est.rejects_zero(MC_Z),
            expected: expected_martingale_gap(m, eta, maturity)?,
            mean: est.mean,
            std_error: est.std_error,
        });
    }

    let report = EstimatesReport {
        config_hash: run.hash.clone(),
        state: state(run),
        value: v,
        sim: sim_report(&cfg),
        saddle: SaddleEstimate {
            pass: (saddle.mean - v).abs() <= MC_Z * saddle.std_error,
            estimate: Estimate::new(&saddle, v),
        },
        perturbations,
        martingale_gap: gaps,
    };
    let dir = output_dir(run);
    output::write(&dir, "estimates.json", &output::json(&report))?;

    if spec.write_paths {
        let outcomes = terminal_outcomes(pool, m, &sol.pi_star, &sol.eta_star, s0, &cfg)?;
        let header: Vec<String> = ["path", "r_T", "X_T", "U_X_T"].iter().map(|s| s.to_string()).collect();
        let rows = outcomes.iter().enumerate().map(|(p, o)| {
            let x = o.wealth();
            [p as f64, o.r_end, x, utility(m.gamma, x)]
        });
        output::write(&dir, "paths.csv", &output::csv(&header, rows))?;
    }

    println!(
        "J(pi*, eta*) = {} +- {} against V = {}",
        output::number(saddle.mean),
        output::number(saddle.std_error),
        output::number(v)
    );
    Ok(Status::Success)
}

#[derive(Serialize)]
struct RestrictedReport {
    config_hash: String,
    quadrature_nodes: usize,
    state: State,
    /// `(x^gamma / gamma) exp(f r + g_Gamma)`.
    value: f64,
    unrestricted_value: f64,
    pi_star: Vec<f64>,
    eta_star: Vec<f64>,
    /// Fraction of grid times where the set constrains `eta*`.
    active_fraction: f64,
    max_set_distance: f64,
    isaacs: IsaacsJson,
    passed: bool,
}

fn restricted(run: &Resolved) -> Result<Status, Failure> {
    let m = &run.model;
    let nodes = run.config.quadrature_nodes;
    let spec = run
        .config
        .gamma_set
        .as_ref()
        .ok_or_else(|| Failure::Config(vec!["gamma_set: required by the restricted command".into()]))?;
    let set = spec.build().map_err(|e| Failure::Config(vec![e]))?;
    let sol = SolutionPair::solve(m, nodes)?;
    let rs = restricted_saddle(m, &sol.f, &set)?;
    let g = restricted_g(m, &sol.f, &set, nodes)?;
    let isaacs = check_isaacs_equality(m, &sol.f, &g, &set, &run.config.isaacs.grid(m.n))?;

    let s0 = &run.state;
    let t = s0.t;
    let value = utility(m.gamma, s0.x) * (sol.f.eval_scalar(t)? * s0.r + g.eval_scalar(t)?).exp();
    let max_set_distance = (0..rs.eta_star.len()).map(|i| set.distance(rs.eta_star.value_at(i))).fold(0.0, f64::max);
    let report = RestrictedReport {
        config_hash: run.hash.clone(),
        quadrature_nodes: nodes,
        state: state(run),
        value,
        unrestricted_value: value_function(m, &sol, s0)?,
        pi_star: rs.pi_star.eval(t)?,
        eta_star: rs.eta_star.eval(t)?,
        active_fraction: rs.active.iter().filter(|&&a| a).count() as f64 / rs.active.len() as f64,
        max_set_distance,
        passed: isaacs.passed,
        isaacs: IsaacsJson::from(&isaacs),
    };
    let dir = output_dir(run);
    output::write(&dir, "restricted_pi_star.csv", &output::curve_csv("pi_star", &rs.pi_star))?;
    output::write(&dir, "restricted_eta_star.csv", &output::curve_csv("eta_star", &rs.eta_star))?;
    output::write(&dir, "restricted_g.csv", &output::curve_csv("g", &g))?;
    output::write(&dir, "restricted.json", &output::json(&report))?;

    if isaacs.passed {
        println!("restricted value {} with Isaacs gap {}", output::number(value), output::number(isaacs.max_gap));
        Ok(Status::Success)
    } else {
        eprintln!(
            "isaacs check failed: gap {} and |value| {} (worst at t = {}, r = {})",
            output::number(isaacs.max_gap),
            output::number(isaacs.max_abs_value),
            output::number(isaacs.worst_t),
            output::number(isaacs.worst_r)
        );
        Ok(Status::CertificationFailed)
    }
}
