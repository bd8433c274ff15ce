//! Wavelength-dependent fibre curves: attenuation and Raman gain.
//!
//! Both are sorted sample tables with linear interpolation. Queries
//! outside the sampled domain are errors rather than extrapolations.

use crate::error::Error;
use crate::units::db_per_km_to_inv_m;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

fn interp_sorted(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    // callers guarantee x inside [xs[0], xs[last]]
    match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => ys[i],
        Err(i) => {
            let (x0, x1) = (xs[i - 1], xs[i]);
            let t = (x - x0) / (x1 - x0);
            ys[i - 1] * (1.0 - t) + ys[i] * t
        }
    }
}

/// Power-attenuation coefficient alpha(f) [1/m], sampled vs frequency [Hz].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AttenuationCurve {
    freq_hz: Vec<f64>,
    alpha_inv_m: Vec<f64>,
}

impl AttenuationCurve {
    /// Build from (frequency [Hz], alpha [1/m]) samples in any order.
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invariant("attenuation curve needs at least 2 samples"));
        }
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invariant("attenuation samples must be strictly increasing in frequency"));
            }
        }
        if samples.iter().any(|&(_, a)| !(a > 0.0)) {
            return Err(Error::invariant("attenuation must be positive at every sample"));
        }
        let (freq_hz, alpha_inv_m) = samples.into_iter().unzip();
        Ok(Self { freq_hz, alpha_inv_m })
    }

    /// Load the `wavelength_nm,alpha_db_km` CSV format.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
            let parse = |idx: usize, name: &str| -> Result<f64> {
                rec.get(idx)
                    .ok_or_else(|| Error::parse(format!("{}:{}", path.display(), line + 2), format!("missing {name}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(format!("{}:{}", path.display(), line + 2), format!("{name}: {e}")))
            };
            let lambda_nm = parse(0, "wavelength_nm")?;
            let db_km = parse(1, "alpha_db_km")?;
            samples.push((crate::units::wavelength_to_frequency(lambda_nm * 1e-9), db_per_km_to_inv_m(db_km)));
        }
        Self::new(samples)
    }

    /// alpha at frequency f [1/m]; error outside the sampled range.
    pub fn alpha(&self, f_hz: f64) -> Result<f64> {
        let (lo, hi) = (self.freq_hz[0], *self.freq_hz.last().unwrap());
        if !(f_hz >= lo && f_hz <= hi) {
            return Err(Error::CurveDomain {
                curve: "attenuation",
                frequency_hz: f_hz,
                min_hz: lo,
                max_hz: hi,
            });
        }
        Ok(interp_sorted(&self.freq_hz, &self.alpha_inv_m, f_hz))
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.freq_hz[0], *self.freq_hz.last().unwrap())
    }
}

/// Normalised Raman gain g_r(df) [1/(m W)] vs frequency separation [Hz].
///
/// The effective-area normalisation is already folded into the stored
/// values; no separate A_eff appears anywhere downstream.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RamanGainCurve {
    delta_f_hz: Vec<f64>,
    gain_inv_m_w: Vec<f64>,
}

impl RamanGainCurve {
    /// Minimum separation coverage required of a usable curve [Hz].
    pub const MIN_COVERAGE_HZ: f64 = 26e12;

    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invariant("Raman gain curve needs at least 2 samples"));
        }
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if samples[0].0 != 0.0 || samples[0].1 != 0.0 {
            return Err(Error::invariant("Raman gain curve must start with g_r(0) = 0"));
        }
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invariant("Raman gain samples must be strictly increasing in separation"));
            }
        }
        if samples.iter().any(|&(_, g)| g < 0.0) {
            return Err(Error::invariant("Raman gain must be non-negative"));
        }
        if samples.last().unwrap().0 < Self::MIN_COVERAGE_HZ {
            return Err(Error::invariant(format!(
                "Raman gain curve must cover separations up to {:.0e} Hz",
                Self::MIN_COVERAGE_HZ
            )));
        }
        let (delta_f_hz, gain_inv_m_w) = samples.into_iter().unzip();
        Ok(Self { delta_f_hz, gain_inv_m_w })
    }

    /// Load the `delta_f_thz,gain_1_km_w` CSV format.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
            let parse = |idx: usize, name: &str| -> Result<f64> {
                rec.get(idx)
                    .ok_or_else(|| Error::parse(format!("{}:{}", path.display(), line + 2), format!("missing {name}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(format!("{}:{}", path.display(), line + 2), format!("{name}: {e}")))
            };
            let df_thz = parse(0, "delta_f_thz")?;
            let g_km_w = parse(1, "gain_1_km_w")?;
            samples.push((df_thz * 1e12, g_km_w / 1e3));
        }
        Self::new(samples)
    }

    /// g_r at separation df >= 0 [1/(m W)]; error above the sampled range.
    pub fn gain(&self, delta_f_hz: f64) -> Result<f64> {
        if delta_f_hz < 0.0 || delta_f_hz > *self.delta_f_hz.last().unwrap() {
            return Err(Error::CurveDomain {
                curve: "raman_gain",
                frequency_hz: delta_f_hz,
                min_hz: 0.0,
                max_hz: *self.delta_f_hz.last().unwrap(),
            });
        }
        Ok(interp_sorted(&self.delta_f_hz, &self.gain_inv_m_w, delta_f_hz))
    }

    /// Slope of a through-origin linear regression of g_r over [0, cutoff].
    ///
    /// This is the triangular approximation of the gain spectrum; it seeds
    /// the profile-fit initial guesses.
    pub fn triangular_slope(&self, cutoff_hz: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (&df, &g) in self.delta_f_hz.iter().zip(&self.gain_inv_m_w) {
            if df <= cutoff_hz {
                num += df * g;
                den += df * df;
            }
        }
        if den == 0.0 { 0.0 } else { num / den }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_attenuation() -> AttenuationCurve {
        AttenuationCurve::new(vec![(180e12, 5.0e-5), (200e12, 4.0e-5), (190e12, 4.2e-5)]).unwrap()
    }

    #[test]
    fn interpolation_exact_at_samples() {
        let c = toy_attenuation();
        assert_relative_eq!(c.alpha(190e12).unwrap(), 4.2e-5);
        assert_relative_eq!(c.alpha(180e12).unwrap(), 5.0e-5);
        assert_relative_eq!(c.alpha(200e12).unwrap(), 4.0e-5);
    }

    #[test]
    fn interpolation_linear_between_samples() {
        let c = toy_attenuation();
        assert_relative_eq!(c.alpha(185e12).unwrap(), 4.6e-5, max_relative = 1e-12);
    }

    #[test]
    fn out_of_domain_is_error() {
        let c = toy_attenuation();
        assert!(matches!(c.alpha(179e12), Err(Error::CurveDomain { .. })));
        assert!(matches!(c.alpha(201e12), Err(Error::CurveDomain { .. })));
    }

    #[test]
    fn rejects_nonpositive_attenuation() {
        assert!(AttenuationCurve::new(vec![(180e12, 0.0), (200e12, 4.0e-5)]).is_err());
    }

    #[test]
    fn raman_requires_zero_at_origin_and_coverage() {
        assert!(RamanGainCurve::new(vec![(0.0, 0.1e-3), (30e12, 0.0)]).is_err());
        assert!(RamanGainCurve::new(vec![(0.0, 0.0), (10e12, 0.4e-3)]).is_err());
        let ok = RamanGainCurve::new(vec![(0.0, 0.0), (13e12, 0.42e-3), (30e12, 0.01e-3)]);
        assert!(ok.is_ok());
    }

    #[test]
    fn shipped_curves_load() {
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
        let att = AttenuationCurve::from_csv(&root.join("attenuation_g652d.csv")).unwrap();
        let rg = RamanGainCurve::from_csv(&root.join("raman_gain_g652d.csv")).unwrap();
        // 0.19 dB/km scale near 1550 nm
        let f1550 = crate::units::wavelength_to_frequency(1550e-9);
        let a = att.alpha(f1550).unwrap();
        assert!(a > 4.0e-5 && a < 4.8e-5, "alpha(1550nm) = {a}");
        // main Raman peak near 13 THz, ~0.42 1/(km W)
        let g = rg.gain(13.1e12).unwrap();
        assert!(g > 0.35e-3 && g < 0.5e-3, "g(13.1THz) = {g}");
        let slope = rg.triangular_slope(15e12);
        assert!(slope > 1.5e-17 && slope < 3.0e-17, "slope = {slope}");
    }
}
