//! Nonlinear-interference estimation: closed-form model and numerical
//! oracle for the same underlying integrals.

pub mod closed;
pub mod identities;
pub mod integral;

use crate::plan::FiberSpec;
use serde::{Deserialize, Serialize};

/// Which evaluation route produced a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Closed,
    Integral,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Closed => write!(f, "closed"),
            Method::Integral => write!(f, "integral"),
        }
    }
}

/// Per-channel NLI coefficients and nonlinear SNR after n spans.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NliSpectrum {
    /// Channel centre frequencies [Hz], ascending.
    pub frequencies: Vec<f64>,
    /// Accumulated SPM part of eta_n [1/W^2] (includes the n^(1+eps) factor).
    pub eta_spm: Vec<f64>,
    /// Accumulated XPM part of eta_n [1/W^2].
    pub eta_xpm: Vec<f64>,
    /// eta_n = eta_spm + eta_xpm [1/W^2].
    pub eta_total: Vec<f64>,
    /// SNR_NLI in dB: -10 log10(eta_n P_i^2).
    pub snr_nli_db: Vec<f64>,
    pub method: Method,
    pub num_spans: usize,
    pub epsilon: f64,
}

impl NliSpectrum {
    /// Assemble the multi-span spectrum from per-span single-span parts.
    ///
    /// eta_n(f_i) = sum_j (P_(i,j)/P_i)^2 [eta_SPM_j n^eps + eta_XPM_j]
    /// where P_i is the first-span launch power. SPM accumulates
    /// coherently (the n^eps factor), XPM incoherently.
    pub fn accumulate(
        frequencies: Vec<f64>,
        launch_powers: &[f64],
        per_span: &[SpanNli],
        span_powers: &[Vec<f64>],
        epsilon: f64,
        method: Method,
    ) -> Self {
        let n = per_span.len();
        let nch = frequencies.len();
        let coherent = (n as f64).powf(epsilon);
        let mut eta_spm = vec![0.0; nch];
        let mut eta_xpm = vec![0.0; nch];
        for (j, span) in per_span.iter().enumerate() {
            for i in 0..nch {
                let ratio = span_powers[j][i] / launch_powers[i];
                let r2 = ratio * ratio;
                eta_spm[i] += r2 * span.spm[i] * coherent;
                eta_xpm[i] += r2 * span.xpm[i];
            }
        }
        let eta_total: Vec<f64> = eta_spm.iter().zip(&eta_xpm).map(|(s, x)| s + x).collect();
        let snr_nli_db: Vec<f64> = eta_total
            .iter()
            .zip(launch_powers)
            .map(|(&eta, &p)| -10.0 * (eta * p * p).log10())
            .collect();
        Self { frequencies, eta_spm, eta_xpm, eta_total, snr_nli_db, method, num_spans: n, epsilon }
    }

    /// `wavelength_nm,eta_spm,eta_xpm,eta_n,snr_nli_db,method` CSV.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> crate::Result<()> {
        writeln!(w, "wavelength_nm,eta_spm_1_w2,eta_xpm_1_w2,eta_n_1_w2,snr_nli_db,method")?;
        for i in 0..self.frequencies.len() {
            writeln!(
                w,
                "{:.4},{:.9e},{:.9e},{:.9e},{:.6},{}",
                crate::units::frequency_to_wavelength(self.frequencies[i]) * 1e9,
                self.eta_spm[i],
                self.eta_xpm[i],
                self.eta_total[i],
                self.snr_nli_db[i],
                self.method
            )?;
        }
        Ok(())
    }
}

/// Single-span per-channel eta parts [1/W^2].
#[derive(Debug, Clone)]
pub struct SpanNli {
    pub spm: Vec<f64>,
    pub xpm: Vec<f64>,
}

/// Phase-mismatch factor of the exact link-function integrand [1/m]:
/// phi = -4 pi^2 (f1 - f_i)(f2 - f_i)[beta2 + pi beta3 (f1 + f2 - 2 f_ref)].
///
/// All frequencies are absolute; the dispersion Taylor offset is taken
/// relative to the fibre's reference frequency.
pub fn phi_exact(fiber: &FiberSpec, f1: f64, f2: f64, f_i: f64) -> f64 {
    let pi = std::f64::consts::PI;
    -4.0 * pi * pi
        * (f1 - f_i)
        * (f2 - f_i)
        * (fiber.beta2 + pi * fiber.beta3 * ((f1 - fiber.f_ref) + (f2 - fiber.f_ref)))
}

/// XPM phase-mismatch slope [1/(m Hz)]:
/// phi_{i,k} = -4 pi^2 (f_k - f_i)[beta2 + pi beta3 ((f_i - f_ref) + (f_k - f_ref))].
pub fn phi_pair(fiber: &FiberSpec, f_i: f64, f_k: f64) -> f64 {
    let pi = std::f64::consts::PI;
    -4.0 * pi * pi
        * (f_k - f_i)
        * (fiber.beta2 + pi * fiber.beta3 * ((f_i - fiber.f_ref) + (f_k - fiber.f_ref)))
}

/// SPM phase-mismatch curvature [1/(m Hz^2)]:
/// phi_i = -4 pi^2 (beta2 + 2 pi beta3 (f_i - f_ref)).
pub fn phi_self(fiber: &FiberSpec, f_i: f64) -> f64 {
    let pi = std::f64::consts::PI;
    -4.0 * pi * pi * fiber.beta2_eff(f_i)
}

/// sign(x) with sign(0) = 0, splitting the jump of the closed forms'
/// sign factors at their (measure-zero) discontinuities.
pub(crate) fn sgn(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::test_fiber;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn phi_pair_matches_exact_slope() {
        // phi_exact(f_i + 1 Hz, f_k, f_i) equals the linearised slope phi_{i,k}
        let fiber = test_fiber();
        let (fi, fk) = (193.0e12, 193.5e12);
        let slope = phi_pair(&fiber, fi, fk);
        let exact = phi_exact(&fiber, fi + 1.0, fk, fi);
        assert_relative_eq!(exact, slope, max_relative = 1e-9);
    }

    #[test]
    fn phi_self_positive_in_anomalous_dispersion() {
        let fiber = test_fiber();
        for f in [187e12, 193e12, 200e12] {
            assert!(phi_self(&fiber, f) > 0.0);
        }
    }

    #[test]
    fn phi_pair_odd_in_frequency_separation() {
        let fiber = test_fiber();
        let f0 = fiber.f_ref;
        let a = phi_pair(&fiber, f0 - 1e12, f0 + 1e12);
        let b = phi_pair(&fiber, f0 + 1e12, f0 - 1e12);
        assert_relative_eq!(a, -b, max_relative = 1e-12);
    }

    #[test]
    fn spectrum_accumulation_identical_spans() {
        let freqs = vec![193e12, 194e12];
        let p = vec![1e-3, 1e-3];
        let one = SpanNli { spm: vec![10.0, 20.0], xpm: vec![100.0, 200.0] };
        let spans = vec![one.clone(), one.clone(), one.clone()];
        let powers = vec![p.clone(), p.clone(), p.clone()];
        let acc = NliSpectrum::accumulate(freqs, &p, &spans, &powers, 0.0, Method::Closed);
        // eps = 0: eta_n = n * eta_1 exactly
        assert_relative_eq!(acc.eta_total[0], 3.0 * 110.0, max_relative = 1e-14);
        assert_relative_eq!(acc.eta_total[1], 3.0 * 220.0, max_relative = 1e-14);
        assert_relative_eq!(
            acc.snr_nli_db[0],
            -10.0 * (330.0 * 1e-6f64).log10(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn spectrum_accumulation_coherent_spm() {
        let freqs = vec![193e12];
        let p = vec![1e-3];
        let one = SpanNli { spm: vec![10.0], xpm: vec![100.0] };
        let spans = vec![one.clone(); 4];
        let powers = vec![p.clone(); 4];
        let eps = 0.1;
        let acc = NliSpectrum::accumulate(freqs, &p, &spans, &powers, eps, Method::Closed);
        let expect = 4.0 * 10.0 * 4f64.powf(eps) + 4.0 * 100.0;
        assert_relative_eq!(acc.eta_total[0], expect, max_relative = 1e-14);
    }
}
