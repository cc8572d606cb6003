//! Run configuration, read from TOML.
//!
//! Coefficients are either a constant or a sampled curve:
//!
//! ```toml
//! kappa = 0.1
//! lambda = { times = [0.0, 1.0], values = [[0.3], [0.25]], interpolation = "constant-left" }
//! ```

use std::path::Path;

use hwgame_core::closedform::{DEFAULT_NODES, MIN_NODES};
use hwgame_core::curve::{CoefficientCurve, Interpolation, ValueShape};
use hwgame_core::hjbi::{CertificationGrid, DerivativeMode};
use hwgame_core::model::{bond_volatility, MarketModel, StatePoint};
use hwgame_core::montecarlo::{RateIntegral, SimConfig, DEFAULT_BUDGET};
use hwgame_core::restricted::{GammaSet, IsaacsGrid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
    pub model: ModelSpec,
    #[serde(default)]
    pub initial_state: StateSpec,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub certify: CertifySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_set: Option<GammaSetSpec>,
    #[serde(default)]
    pub isaacs: IsaacsSpec,
    /// Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub horizon: f64,
    pub gamma: f64,
    pub kappa: CurveSpec<f64>,
    pub b: CurveSpec<f64>,
    pub lambda: CurveSpec<Vec<f64>>,
    pub a: CurveSpec<Vec<f64>>,
    /// Rows of `Sigma`, one per asset.
    pub sigma: CurveSpec<Vec<Vec<f64>>>,
    /// Replaces one row of `Sigma` by the volatility of a zero-coupon bond.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bond: Option<BondSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurveSpec<V> {
    Constant(V),
    Sampled {
        times: Vec<f64>,
        values: Vec<V>,
        #[serde(default)]
        interpolation: InterpolationSpec,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationSpec {
    #[default]
    Linear,
    ConstantLeft,
}

impl From<InterpolationSpec> for Interpolation {
    fn from(s: InterpolationSpec) -> Self {
        match s {
            InterpolationSpec::Linear => Interpolation::PiecewiseLinear,
            InterpolationSpec::ConstantLeft => Interpolation::PiecewiseConstantLeft,
        }
    }
}

/// Bond row `-(1 - exp(-kappa (maturity - t))) a_t / kappa`; needs a constant
/// `kappa`. `Sigma` is resampled on `points` uniform intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BondSpec {
    pub maturity: f64,
    pub row: usize,
    #[serde(default = "default_bond_points")]
    pub points: usize,
}

fn default_bond_points() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub x: f64,
    pub r: f64,
    #[serde(default)]
    pub t: f64,
}

impl Default for StateSpec {
    fn default() -> Self {
        Self { x: 1.0, r: 0.0, t: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub budget: u64,
    pub rate_integral: RateIntegralSpec,
    /// Maturity of the martingale-gap test; the horizon when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_maturity: Option<f64>,
    pub gap_antithetic: bool,
    /// Also write `paths.csv` for the saddle pair.
    pub write_paths: bool,
    pub perturbations: Vec<PerturbationSpec>,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            paths: 100_000,
            steps: 128,
            seed: 0,
            antithetic: false,
            budget: DEFAULT_BUDGET,
            rate_integral: RateIntegralSpec::ConditionalMean,
            gap_maturity: None,
            gap_antithetic: true,
            write_paths: false,
            perturbations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateIntegralSpec {
    Trapezoid,
    ConditionalMean,
}

impl From<RateIntegralSpec> for RateIntegral {
    fn from(s: RateIntegralSpec) -> Self {
        match s {
            RateIntegralSpec::Trapezoid => RateIntegral::Trapezoid,
            RateIntegralSpec::ConditionalMean => RateIntegral::ConditionalMean,
        }
    }
}

/// A constant `shift` added to one of the saddle strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub target: Player,
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    Pi,
    Eta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifySpec {
    pub t_points: usize,
    pub t_margin: f64,
    pub r_points: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub pi_points: usize,
    pub pi_half_width: f64,
    pub eta_points: usize,
    pub eta_half_width: f64,
    pub mode: ModeSpec,
    /// `false` certifies the traditional strategy instead of `pi*`.
    pub robust: bool,
}

impl Default for CertifySpec {
    fn default() -> Self {
        let g = CertificationGrid::default();
        Self {
            t_points: g.t_points,
            t_margin: g.t_margin,
            r_points: g.r_points,
            r_min: g.r_range.0,
            r_max: g.r_range.1,
            pi_points: g.pi_points,
            pi_half_width: g.pi_half_width,
            eta_points: g.eta_points,
            eta_half_width: g.eta_half_width,
            mode: ModeSpec::Exact,
            robust: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSpec {
    Exact,
    CentralDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GammaSetSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

/// Overrides of the dimension-dependent Isaacs grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsaacsSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set_samples: Option<usize>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub nodes: Option<usize>,
    pub output_dir: Option<String>,
}

/// Everything a command needs, validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub model: MarketModel,
    pub state: StatePoint,
    pub hash: String,
}

/// Values shaped like one breakpoint of a coefficient curve.
pub trait Sample {
    fn shape(&self) -> Result<ValueShape, String>;
    fn push_flat(&self, out: &mut Vec<f64>);
}

impl Sample for f64 {
    fn shape(&self) -> Result<ValueShape, String> {
        Ok(ValueShape::Scalar)
    }
    fn push_flat(&self, out: &mut Vec<f64>) {
        out.push(*self);
    }
}

impl Sample for Vec<f64> {
    fn shape(&self) -> Result<ValueShape, String> {
        Ok(ValueShape::Vector(self.len()))
    }
    fn push_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self);
    }
}

impl Sample for Vec<Vec<f64>> {
    fn shape(&self) -> Result<ValueShape, String> {
        let n = self.len();
        if self.iter().any(|row| row.len() != n) {
            return Err(format!("matrix with {n} rows must be square"));
        }
        Ok(ValueShape::Matrix(n))
    }
    fn push_flat(&self, out: &mut Vec<f64>) {
        self.iter().for_each(|row| out.extend_from_slice(row));
    }
}

impl<V: Sample> CurveSpec<V> {
    pub fn build(&self, name: &str, horizon: f64) -> Result<CoefficientCurve, String> {
        let (times, values, interp) = match self {
            CurveSpec::Constant(v) => (vec![0.0, horizon], vec![v, v], InterpolationSpec::Linear),
            CurveSpec::Sampled { times, values, interpolation } => {
                (times.clone(), values.iter().collect(), *interpolation)
            }
        };
        let first = values.first().ok_or_else(|| format!("{name}: no values"))?;
        let shape = first.shape().map_err(|e| format!("{name}: {e}"))?;
        let mut flat = Vec::with_capacity(values.len() * shape.width());
        for (i, v) in values.iter().enumerate() {
            if v.shape().map_err(|e| format!("{name}[{i}]: {e}"))? != shape {
                return Err(format!("{name}[{i}]: shape differs from the first value"));
            }
            v.push_flat(&mut flat);
        }
        CoefficientCurve::new(times, flat, shape, interp.into()).map_err(|e| format!("{name}: {e}"))
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<MarketModel, Vec<String>> {
        let h = self.horizon;
        let mut errors = Vec::new();
        let mut take = |r: Result<CoefficientCurve, String>| r.map_err(|e| errors.push(e)).ok();
        let kappa = take(self.kappa.build("kappa", h));
        let b = take(self.b.build("b", h));
        let lambda = take(self.lambda.build("lambda", h));
        let a = take(self.a.build("a", h));
        let sigma = take(self.sigma.build("sigma", h));
        let (Some(kappa), Some(b), Some(lambda), Some(a), Some(mut sigma)) = (kappa, b, lambda, a, sigma) else {
            return Err(errors);
        };
        let n = lambda.width();
        if let Some(bond) = &self.bond {
            sigma = self.bond_sigma(bond, &a, &sigma, n)?;
        }
        let model = MarketModel { n, horizon: h, gamma: self.gamma, kappa, b, lambda, a, sigma };
        let violations = model.validate();
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(violations.iter().map(ToString::to_string).collect())
        }
    }

    fn bond_sigma(
        &self,
        bond: &BondSpec,
        a: &CoefficientCurve,
        sigma: &CoefficientCurve,
        n: usize,
    ) -> Result<CoefficientCurve, Vec<String>> {
        let kappa = match self.kappa {
            CurveSpec::Constant(k) if k != 0.0 => k,
            _ => return Err(vec!["bond: kappa must be a nonzero constant".into()]),
        };
        let mut errors = Vec::new();
        if bond.row >= n {
            errors.push(format!("bond: row {} out of range for {n} assets", bond.row));
        }
        if !(bond.maturity >= self.horizon) {
            errors.push(format!("bond: maturity {} precedes the horizon {}", bond.maturity, self.horizon));
        }
        if bond.points == 0 {
            errors.push("bond: points must be positive".into());
        }
        if sigma.shape() != ValueShape::Matrix(n) || a.shape() != ValueShape::Vector(n) {
            errors.push("bond: sigma and a must match the asset count".into());
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let grid: Vec<f64> = (0..=bond.points).map(|k| self.horizon * k as f64 / bond.points as f64).collect();
        let mut values = Vec::with_capacity(grid.len() * n * n);
        for &t in &grid {
            let mut s = sigma.eval(t).map_err(|e| vec![format!("sigma: {e}")])?;
            let a_t = a.eval(t).map_err(|e| vec![format!("a: {e}")])?;
            for k in 0..n {
                s[bond.row * n + k] = bond_volatility(kappa, a_t[k], bond.maturity, t);
            }
            values.extend(s);
        }
        CoefficientCurve::new(grid, values, ValueShape::Matrix(n), Interpolation::PiecewiseLinear)
            .map_err(|e| vec![format!("sigma: {e}")])
    }
}

impl GammaSetSpec {
    pub fn build(&self) -> Result<GammaSet, String> {
        match self {
            GammaSetSpec::Box { lo, hi } => GammaSet::boxed(lo.clone(), hi.clone()),
            GammaSetSpec::Ball { center, radius } => GammaSet::ball(center.clone(), *radius),
        }
        .map_err(|e| format!("gamma_set: {e}"))
    }
}

impl CertifySpec {
    pub fn grid(&self) -> CertificationGrid {
        CertificationGrid {
            t_points: self.t_points,
            t_margin: self.t_margin,
            r_points: self.r_points,
            r_range: (self.r_min, self.r_max),
            pi_points: self.pi_points,
            pi_half_width: self.pi_half_width,
            eta_points: self.eta_points,
            eta_half_width: self.eta_half_width,
            mode: match self.mode {
                ModeSpec::Exact => DerivativeMode::Exact,
                ModeSpec::CentralDifference => DerivativeMode::CentralDifference,
            },
        }
    }
}

impl IsaacsSpec {
    pub fn grid(&self, n: usize) -> IsaacsGrid {
        let mut g = IsaacsGrid::for_dimension(n);
        g.t_points = self.t_points.unwrap_or(g.t_points);
        g.r_points = self.r_points.unwrap_or(g.r_points);
        g.pi_points = self.pi_points.unwrap_or(g.pi_points);
        g.pi_half_width = self.pi_half_width.unwrap_or(g.pi_half_width);
        g.set_points = self.set_points.unwrap_or(g.set_points);
        g.set_samples = self.set_samples.unwrap_or(g.set_samples);
        g
    }
}

impl SimSpec {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            paths: self.paths,
            steps: self.steps,
            seed: self.seed,
            antithetic: self.antithetic,
            budget: self.budget,
            rate_integral: self.rate_integral.into(),
        }
    }

    pub fn gap_config(&self) -> SimConfig {
        SimConfig { antithetic: self.gap_antithetic, ..self.sim_config() }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Vec<String>> {
        toml::from_str(text).map_err(|e| vec![format!("config: {e}")])
    }

    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = o.paths {
            self.sim.paths = p;
        }
        if let Some(s) = o.seed {
            self.sim.seed = s;
        }
        if let Some(n) = o.nodes {
            self.quadrature_nodes = n;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = Some(d.clone());
        }
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { output_dir: None, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Builds the model and state and checks every section; returns all
    /// violations at once.
    pub fn resolve(self) -> Result<Resolved, Vec<String>> {
        let mut errors = Vec::new();
        let model = self.model.build().map_err(|e| errors.extend(e)).ok();
        if self.quadrature_nodes < MIN_NODES {
            errors.push(format!("quadrature_nodes: {} below the minimum {MIN_NODES}", self.quadrature_nodes));
        }
        let s = self.initial_state;
        let state = StatePoint::new(s.x, s.r, s.t).map_err(|e| errors.push(format!("initial_state: {e}"))).ok();
        if !(s.t < self.model.horizon) {
            errors.push(format!("initial_state: t = {} must precede the horizon {}", s.t, self.model.horizon));
        }
        if self.sim.paths == 0 || self.sim.steps == 0 {
            errors.push("sim: paths and steps must be positive".into());
        }
        if let Some(m) = self.sim.gap_maturity {
            if !(m > 0.0 && m <= self.model.horizon) {
                errors.push(format!("sim.gap_maturity: {m} outside (0, {}]", self.model.horizon));
            }
        }
        let c = &self.certify;
        if c.t_points == 0 || c.r_points == 0 || c.pi_points == 0 || c.eta_points == 0 {
            errors.push("certify: grid sizes must be positive".into());
        }
        if !(c.r_min <= c.r_max) || !(c.t_margin >= 0.0 && c.t_margin < 1.0) {
            errors.push("certify: need r_min <= r_max and t_margin in [0, 1)".into());
        }
        if let Some(m) = &model {
            for (i, p) in self.sim.perturbations.iter().enumerate() {
                if p.shift.len() != m.n {
                    errors.push(format!(
                        "sim.perturbations[{i}]: shift has {} entries, model has {}",
                        p.shift.len(),
                        m.n
                    ));
                }
            }
            if let Some(g) = &self.gamma_set {
                match g.build() {
                    Ok(set) if set.dim() != m.n => {
                        errors.push(format!("gamma_set: dimension {} differs from {} assets", set.dim(), m.n))
                    }
                    Ok(_) => {}
                    Err(e) => errors.push(e),
                }
            }
        }
        match (model, state, errors.is_empty()) {
            (Some(model), Some(state), true) => {
                let hash = self.hash();
                Ok(Resolved { config: self, model, state, hash })
            }
            _ => Err(errors),
        }
    }
}
