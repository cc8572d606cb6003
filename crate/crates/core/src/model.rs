//! Market model: bank account, `n` risky assets and a Hull-White short rate,
//!
//! ```text
//! dB = r B dt
//! dS = diag(S) [ (r e + Sigma lambda^T) dt + Sigma dW ]
//! dr = (b - kappa r) dt + a dW
//! ```
//!
//! with deterministic coefficient curves. The rate drift `b` is taken as
//! given: any `a lambda^T` correction must already be folded into it by the
//! caller.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::curve::{CoefficientCurve, Interpolation, ValueShape};
use crate::error::{Error, Result};
use crate::linalg;

/// Smallest admissible singular value of `Sigma` at every breakpoint.
pub const SIGMA_MIN_SINGULAR_VALUE: f64 = 1e-10;

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Curve or parameter name (`gamma`, `sigma`, ...).
    pub field: String,
    /// Breakpoint index when the violation is local to a curve.
    pub index: Option<usize>,
    pub message: String,
}

impl Violation {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self { field: field.into(), index: None, message: message.into() }
    }

    pub fn at(field: &str, index: usize, message: impl Into<String>) -> Self {
        Self { field: field.into(), index: Some(index), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]: {}", self.field, i, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    /// Number of risky assets (and Brownian factors).
    pub n: usize,
    pub horizon: f64,
    /// Exponent of the power utility `x^gamma / gamma`, in `(0, 1)`.
    pub gamma: f64,
    pub kappa: CoefficientCurve,
    pub b: CoefficientCurve,
    pub lambda: CoefficientCurve,
    pub a: CoefficientCurve,
    pub sigma: CoefficientCurve,
}

/// Coefficients frozen at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub kappa: f64,
    pub b: f64,
    pub lambda: Vec<f64>,
    pub a: Vec<f64>,
    /// Row-major `n x n`.
    pub sigma: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(n: usize) -> Self {
        Self { kappa: 0.0, b: 0.0, lambda: vec![0.0; n], a: vec![0.0; n], sigma: vec![0.0; n * n] }
    }
}

impl MarketModel {
    /// Model with time-constant coefficients. `sigma` is row-major `n x n`.
    #[allow(clippy::too_many_arguments)]
    pub fn constant(
        horizon: f64,
        gamma: f64,
        kappa: f64,
        b: f64,
        lambda: &[f64],
        a: &[f64],
        sigma: &[f64],
    ) -> Result<Self> {
        let n = lambda.len();
        let model = Self {
            n,
            horizon,
            gamma,
            kappa: CoefficientCurve::constant(horizon, kappa),
            b: CoefficientCurve::constant(horizon, b),
            lambda: CoefficientCurve::constant_vector(horizon, lambda),
            a: CoefficientCurve::constant_vector(horizon, a),
            sigma: CoefficientCurve::constant_matrix(horizon, n, sigma)?,
        };
        model.ensure_valid()?;
        Ok(model)
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_model(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    pub fn coefficients_at(&self, t: f64, out: &mut Coefficients) {
        out.kappa = self.kappa.scalar_at(t);
        out.b = self.b.scalar_at(t);
        self.lambda.at_into(t, &mut out.lambda);
        self.a.at_into(t, &mut out.a);
        self.sigma.at_into(t, &mut out.sigma);
    }

    pub fn coefficients(&self, t: f64) -> Coefficients {
        let mut c = Coefficients::zeros(self.n);
        self.coefficients_at(t, &mut c);
        c
    }

    /// Solves `x Sigma_t = y` for the row vector `x`.
    pub fn solve_sigma_row(&self, t: f64, sigma: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if linalg::smallest_singular_value(sigma, self.n) <= SIGMA_MIN_SINGULAR_VALUE {
            return Err(Error::SingularSigma { t });
        }
        linalg::solve_row(sigma, self.n, y).ok_or(Error::SingularSigma { t })
    }

    /// `true` when the rate volatility vanishes at every breakpoint.
    pub fn rate_is_deterministic(&self) -> bool {
        self.a.values().iter().all(|&v| v == 0.0)
    }
}

/// Every violated invariant of `m`, empty iff the model is valid.
pub fn validate_model(m: &MarketModel) -> Vec<Violation> {
    let mut out = Vec::new();
    if m.n == 0 {
        out.push(Violation::new("n", "asset count must be positive"));
    }
    if !(m.horizon > 0.0 && m.horizon.is_finite()) {
        out.push(Violation::new("horizon", format!("horizon must be positive and finite, got {}", m.horizon)));
    }
    if !(m.gamma > 0.0 && m.gamma < 1.0) {
        out.push(Violation::new("gamma", format!("gamma = {} outside (0, 1)", m.gamma)));
    }

    let curves: [(&str, &CoefficientCurve, ValueShape); 5] = [
        ("kappa", &m.kappa, ValueShape::Scalar),
        ("b", &m.b, ValueShape::Scalar),
        ("lambda", &m.lambda, ValueShape::Vector(m.n)),
        ("a", &m.a, ValueShape::Vector(m.n)),
        ("sigma", &m.sigma, ValueShape::Matrix(m.n)),
    ];
    for (name, curve, shape) in curves {
        if curve.shape() != shape {
            out.push(Violation::new(name, format!("expected shape {shape:?}, got {:?}", curve.shape())));
            continue;
        }
        out.extend(curve.violations(name));
        let last = curve.horizon();
        if last != m.horizon {
            out.push(Violation::at(
                name,
                curve.len() - 1,
                format!("last breakpoint {last} differs from horizon {}", m.horizon),
            ));
        }
    }

    if m.sigma.shape() == ValueShape::Matrix(m.n) && m.n > 0 {
        for i in 0..m.sigma.len() {
            let s = m.sigma.value_at(i);
            if s.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let smin = linalg::smallest_singular_value(s, m.n);
            if !(smin > SIGMA_MIN_SINGULAR_VALUE) {
                out.push(Violation::at("sigma", i, format!("sigma not invertible (smallest singular value {smin:e})")));
            }
        }
    }
    out
}

/// Wealth, short rate and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatePoint {
    pub x: f64,
    pub r: f64,
    pub t: f64,
}

impl StatePoint {
    pub fn new(x: f64, r: f64, t: f64) -> Result<Self> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::NonPositiveWealth { x });
        }
        if !(t >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!("bad state (r = {r}, t = {t})")));
        }
        Ok(Self { x, r, t })
    }

    pub fn check_horizon(&self, horizon: f64) -> Result<()> {
        if self.t > horizon {
            return Err(Error::Domain { t: self.t, horizon });
        }
        Ok(())
    }
}

/// Volatility of a zero-coupon bond maturing at `maturity` in a Vasicek
/// model with mean reversion `kappa` and rate volatility `a_level`:
/// `-(a / kappa) (1 - exp(-kappa (maturity - t)))`.
pub fn bond_volatility(kappa: f64, a_level: f64, maturity: f64, t: f64) -> f64 {
    // 1 - exp(-x) = -expm1(-x)
    -(a_level / kappa) * -libm::expm1(-kappa * (maturity - t))
}

/// Samples [`bond_volatility`] on `grid` (which becomes the breakpoints of a
/// piecewise-linear scalar curve).
pub fn bond_volatility_curve(kappa: f64, a_level: f64, maturity: f64, grid: &[f64]) -> Result<CoefficientCurve> {
    if kappa == 0.0 {
        return Err(Error::DegenerateParameter(
            "kappa = 0 in bond volatility; supply the limit -a (T' - t) directly".into(),
        ));
    }
    if let Some(&last) = grid.last() {
        if maturity < last {
            return Err(Error::InvalidArgument(format!("bond maturity {maturity} precedes grid end {last}")));
        }
    }
    let values = grid.iter().map(|&t| bond_volatility(kappa, a_level, maturity, t)).collect();
    CoefficientCurve::scalar(grid.to_vec(), values, Interpolation::PiecewiseLinear)
}
