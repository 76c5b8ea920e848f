//! Dual-term zero-coupon-rate model for interest-rate derivatives.
//!
//! The state of the yield curve is a set of constant-maturity zero rates
//! `y(t, s)` whose volatility `σ(t, s)` is indexed both by observation time
//! and by rate life. The crate provides
//!
//! * discount curve bootstrapping and Black-76 swaption targets ([`marketdata`]),
//! * the volatility surface, factor loadings and drift functions ([`model`]),
//! * a Monte Carlo probability field with cross-path martingale refit ([`montecarlo`]),
//! * a one-factor Krasker grid with Arrow-Debreu curve fitting ([`grid`]),
//! * deal descriptions and pricing on both engines ([`products`]),
//! * global Lagrange-multiplier calibration to a swaption matrix ([`calibration`]),
//! * bucket vegas from an SVD least-squares mapping ([`vega`]).

pub mod calibration;
pub mod error;
pub mod grid;
pub mod io;
pub mod marketdata;
pub mod model;
pub mod montecarlo;
pub mod products;
pub mod vega;

mod linalg;

pub use error::{Error, Result};
pub use marketdata::{DiscountCurve, MarketSnapshot, SwaptionInstrument};
pub use model::{FactorLoadings, ModelConfig, Process, VolSurface};
