//! Sampled deterministic time functions on `[0, T]`.
//!
//! Every model coefficient (mean reversion, rate drift, market price of risk,
//! rate volatility, asset volatility matrix) and every solved quantity (the
//! exponents `f`, `g`, the saddle strategies) lives in a [`CoefficientCurve`]:
//! a list of breakpoints with one scalar, vector or row-major matrix per
//! breakpoint, plus an interpolation rule.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::Violation;

/// Relative slack accepted when a caller evaluates just outside `[0, T]`
/// because of accumulated floating point error in a time grid.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Value of the left breakpoint on `[t_i, t_{i+1})`.
    PiecewiseConstantLeft,
    #[default]
    PiecewiseLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueShape {
    Scalar,
    Vector(usize),
    /// Square `n x n` matrix stored row-major.
    Matrix(usize),
}

impl ValueShape {
    pub fn width(self) -> usize {
        match self {
            ValueShape::Scalar => 1,
            ValueShape::Vector(n) => n,
            ValueShape::Matrix(n) => n * n,
        }
    }

    /// Asset dimension carried by the shape, `None` for scalars.
    pub fn dimension(self) -> Option<usize> {
        match self {
            ValueShape::Scalar => None,
            ValueShape::Vector(n) | ValueShape::Matrix(n) => Some(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientCurve {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    shape: ValueShape,
    interpolation: Interpolation,
}

impl CoefficientCurve {
    /// Builds a curve from breakpoints and flattened values (`width` values per
    /// breakpoint). Only the layout is checked here; ordering and finiteness
    /// are reported by [`CoefficientCurve::violations`].
    pub fn new(
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        shape: ValueShape,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidCurve(format!("need at least two breakpoints, got {}", breakpoints.len())));
        }
        if shape.width() == 0 {
            return Err(Error::InvalidCurve("zero-width values".into()));
        }
        if values.len() != breakpoints.len() * shape.width() {
            return Err(Error::InvalidCurve(format!(
                "expected {} values for {} breakpoints of width {}, got {}",
                breakpoints.len() * shape.width(),
                breakpoints.len(),
                shape.width(),
                values.len()
            )));
        }
        Ok(Self { breakpoints, values, shape, interpolation })
    }

    pub fn constant(horizon: f64, value: f64) -> Self {
        Self::constant_with_shape(horizon, &[value], ValueShape::Scalar)
    }

    pub fn constant_vector(horizon: f64, value: &[f64]) -> Self {
        Self::constant_with_shape(horizon, value, ValueShape::Vector(value.len()))
    }

    /// Constant `n x n` matrix given row-major.
    pub fn constant_matrix(horizon: f64, n: usize, row_major: &[f64]) -> Result<Self> {
        if row_major.len() != n * n {
            return Err(Error::InvalidCurve(format!(
                "matrix of dimension {n} needs {} entries, got {}",
                n * n,
                row_major.len()
            )));
        }
        Ok(Self::constant_with_shape(horizon, row_major, ValueShape::Matrix(n)))
    }

    fn constant_with_shape(horizon: f64, value: &[f64], shape: ValueShape) -> Self {
        let mut values = Vec::with_capacity(2 * value.len());
        values.extend_from_slice(value);
        values.extend_from_slice(value);
        Self { breakpoints: vec![0.0, horizon], values, shape, interpolation: Interpolation::PiecewiseLinear }
    }

    pub fn scalar(breakpoints: Vec<f64>, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        Self::new(breakpoints, values, ValueShape::Scalar, interpolation)
    }

    /// Vector curve from one row per breakpoint.
    pub fn vector(breakpoints: Vec<f64>, rows: &[Vec<f64>], interpolation: Interpolation) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidCurve("vector values of unequal length".into()));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(breakpoints, values, ValueShape::Vector(n), interpolation)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> ValueShape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width()
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().expect("at least two breakpoints")
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    /// Stored value at breakpoint `i`.
    pub fn value_at(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    /// Scalar stored value at breakpoint `i`.
    pub fn scalar_value_at(&self, i: usize) -> f64 {
        self.values[i * self.width()]
    }

    /// Ordering and finiteness problems, tagged with `name`.
    pub fn violations(&self, name: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.breakpoints[0] != 0.0 {
            out.push(Violation::at(name, 0, format!("first breakpoint is {}, expected 0", self.breakpoints[0])));
        }
        for (i, pair) in self.breakpoints.windows(2).enumerate() {
            if !(pair[1] > pair[0]) {
                out.push(Violation::at(
                    name,
                    i + 1,
                    format!("breakpoints not strictly increasing ({} then {})", pair[0], pair[1]),
                ));
            }
        }
        for (i, _) in self.breakpoints.iter().enumerate() {
            if self.value_at(i).iter().any(|v| !v.is_finite()) {
                out.push(Violation::at(name, i, String::from("non-finite value")));
            }
        }
        out
    }

    fn check_domain(&self, t: f64) -> Result<f64> {
        let horizon = self.horizon();
        let slack = DOMAIN_SLACK * horizon.abs().max(1.0);
        if t.is_nan() || t < -slack || t > horizon + slack {
            return Err(Error::Domain { t, horizon });
        }
        Ok(t.clamp(0.0, horizon))
    }

    /// Writes the interpolated value at `t` into `out` (length `width`).
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let t = self.check_domain(t)?;
        self.interpolate_into(t, out);
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width()];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Interpolated value of a scalar curve (the first component otherwise).
    pub fn eval_scalar(&self, t: f64) -> Result<f64> {
        let t = self.check_domain(t)?;
        Ok(self.scalar_unchecked(t))
    }

    /// Like [`eval_scalar`](Self::eval_scalar) but clamps `t` into `[0, T]`.
    pub fn scalar_at(&self, t: f64) -> f64 {
        self.scalar_unchecked(t.clamp(0.0, self.horizon()))
    }

    /// Like [`eval_into`](Self::eval_into) but clamps `t` into `[0, T]`.
    pub fn at_into(&self, t: f64, out: &mut [f64]) {
        self.interpolate_into(t.clamp(0.0, self.horizon()), out);
    }

    fn locate(&self, t: f64) -> (usize, Option<f64>) {
        // number of breakpoints <= t, at least one because t >= 0 = t_0
        let idx = self.breakpoints.partition_point(|&b| b <= t).max(1);
        let i = idx - 1;
        if self.breakpoints[i] == t || i + 1 == self.breakpoints.len() {
            return (i, None);
        }
        match self.interpolation {
            Interpolation::PiecewiseConstantLeft => (i, None),
            Interpolation::PiecewiseLinear => {
                let (t0, t1) = (self.breakpoints[i], self.breakpoints[i + 1]);
                (i, Some((t - t0) / (t1 - t0)))
            }
        }
    }

    fn scalar_unchecked(&self, t: f64) -> f64 {
        let w = self.width();
        match self.locate(t) {
            (i, None) => self.values[i * w],
            (i, Some(s)) => {
                let (v0, v1) = (self.values[i * w], self.values[(i + 1) * w]);
                v0 + s * (v1 - v0)
            }
        }
    }

    fn interpolate_into(&self, t: f64, out: &mut [f64]) {
        let w = self.width();
        debug_assert_eq!(out.len(), w);
        match self.locate(t) {
            (i, None) => out.copy_from_slice(&self.values[i * w..(i + 1) * w]),
            (i, Some(s)) => {
                let lo = &self.values[i * w..(i + 1) * w];
                let hi = &self.values[(i + 1) * w..(i + 2) * w];
                for ((o, a), b) in out.iter_mut().zip(lo).zip(hi) {
                    *o = a + s * (b - a);
                }
            }
        }
    }
}

/// Uniform grid of `intervals + 1` points over `[0, horizon]` whose last point
/// is exactly `horizon`.
pub fn uniform_grid(horizon: f64, intervals: usize) -> Vec<f64> {
    let h = horizon / intervals as f64;
    let mut grid: Vec<f64> = (0..=intervals).map(|i| i as f64 * h).collect();
    grid[intervals] = horizon;
    grid
}
