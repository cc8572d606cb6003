#![no_std]
// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the componentwise formulas.
#![allow(clippy::needless_range_loop)]

//! Worst-case portfolio choice under a Hull-White short rate.
//!
//! An investor with power utility `x^gamma / gamma`, `0 < gamma < 1`, trades
//! `n` risky assets and a bank account whose rate follows a time-dependent
//! Vasicek model. The investor does not trust the reference measure and plays
//! against a market that picks the worst equivalent measure `Q^eta` (a
//! Girsanov drift shift `eta`). This crate
//!
//! * solves the game in closed form ([`closedform`]),
//! * certifies the saddle inequalities of the Isaacs operator on grids
//!   ([`hjbi`]),
//! * checks the value against Monte Carlo simulation under any `Q^eta`
//!   ([`montecarlo`]), and
//! * solves the variant where `eta` is confined to a compact convex set
//!   ([`restricted`]).
//!
//! The crate is `no_std` with `alloc`; IO, configuration and the CLI live in
//! the `hwgame` crate.

extern crate alloc;

pub mod closedform;
pub mod curve;
pub mod error;
pub mod hjbi;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod quadrature;
pub mod restricted;

pub use closedform::{SolutionPair, ValueQuery};
pub use curve::{CoefficientCurve, Interpolation, ValueShape};
pub use error::{Error, Result};
pub use model::{MarketModel, StatePoint, Violation};
