//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Scenario file could not be parsed. Carries the offending file/field.
    #[error("scenario parse error in {location}: {message}")]
    ScenarioParse { location: String, message: String },

    /// A domain invariant was violated while constructing a type.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// A frequency query fell outside the samples of a curve.
    #[error("{curve}: {frequency_hz:.6e} Hz outside sampled domain [{min_hz:.6e}, {max_hz:.6e}]")]
    CurveDomain {
        curve: &'static str,
        frequency_hz: f64,
        min_hz: f64,
        max_hz: f64,
    },

    /// Adaptive integrator drove the step below the representable minimum.
    #[error("ODE step size underflow at z = {z_m:.3} m (stiff blow-up)")]
    StepUnderflow { z_m: f64 },

    /// Shooting iteration for the backward-pump boundary problem failed.
    #[error("BVP did not converge after {iterations} iterations; worst boundary mismatch {worst_mismatch:.3e} (relative)")]
    BvpDiverged {
        iterations: usize,
        worst_mismatch: f64,
    },

    /// Normalisation by a zero launch power.
    #[error("channel {index} has zero power at z = 0; cannot normalise profile")]
    ZeroLaunchPower { index: usize },

    /// Nonlinear least squares gave up; the caller may still use best-so-far.
    #[error("profile fit did not converge for channel {index} (best weighted rms {rms_db:.3} dB)")]
    FitDiverged { index: usize, rms_db: f64 },

    /// Coefficients make the closed-form expansion meaningless.
    #[error("degenerate fit for channel {index}: {reason}")]
    DegenerateFit { index: usize, reason: String },

    /// phi_{i,k} = 0: the pair sits at a zero-dispersion resonance.
    #[error("zero-dispersion resonance between {f_i_hz:.6e} Hz and {f_k_hz:.6e} Hz (phi = 0)")]
    ZeroDispersion { f_i_hz: f64, f_k_hz: f64 },

    /// The SPM closed form requires phi_i * L * B^2 > 0 for its logarithm.
    #[error("SPM closed form invalid at {f_i_hz:.6e} Hz: non-positive log argument (phi_i = {phi:.3e}); use the integral oracle")]
    SpmDomain { f_i_hz: f64, phi: f64 },

    /// Quadrature failed to settle within its refinement budget.
    #[error("quadrature did not converge: {0}")]
    QuadratureDiverged(String),

    /// Pump optimisation could not satisfy the received-power floor.
    #[error("pump optimisation infeasible: best floor {achieved:.4} < required {required:.4}")]
    Infeasible { achieved: f64, required: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ScenarioParse {
            location: location.into(),
            message: message.into(),
        }
    }
}
