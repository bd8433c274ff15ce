//! Quality-of-transmission estimation for Raman-amplified ultra-wideband
//! optical links.
//!
//! The engine solves the coupled Raman power-evolution equations for WDM
//! channels plus forward/backward pumps, fits a five-coefficient
//! semi-analytical model to each normalised signal profile, and evaluates
//! the nonlinear-interference spectrum two ways: a closed-form ISRS GN
//! model and a brute-force numerical quadrature of the underlying
//! integrals. The two routes cross-check each other; the closed form is
//! the fast path, the quadrature is the oracle.
//!
//! Internal unit conventions: frequencies in Hz, powers in W, distances
//! in m, attenuation in 1/m. Wavelengths, dBm and km are accepted at the
//! API boundary only.

pub mod curves;
pub mod error;
pub mod fitter;
pub mod gn;
pub mod optimizer;
pub mod plan;
pub mod scenario;
pub mod solver;
pub mod units;

pub use error::Error;
pub use plan::{Channel, ChannelPlan, FiberSpec, LinkPlan, Pump, PumpDirection, PumpSet, SpanConfig};

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
