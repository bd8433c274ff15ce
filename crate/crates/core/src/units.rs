//! Unit conversions between boundary conventions and internal SI units.
//!
//! Internally everything is Hz, W, m. Wavelengths (nm), powers (dBm/mW)
//! and distances (km) appear only at the API boundary.

use crate::error::Error;
use crate::Result;

/// Speed of light in vacuum [m/s].
pub const C_LIGHT: f64 = 299_792_458.0;

/// Convert a vacuum wavelength [m] to absolute optical frequency [Hz].
pub fn wavelength_to_frequency(lambda_m: f64) -> f64 {
    C_LIGHT / lambda_m
}

/// Convert an absolute optical frequency [Hz] to vacuum wavelength [m].
pub fn frequency_to_wavelength(f_hz: f64) -> f64 {
    C_LIGHT / f_hz
}

/// dBm to W.
pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// W to dBm. Errors on non-positive power.
pub fn watt_to_dbm(p_w: f64) -> Result<f64> {
    if !(p_w > 0.0) {
        return Err(Error::invariant(format!(
            "watt_to_dbm requires a positive power, got {p_w}"
        )));
    }
    Ok(10.0 * p_w.log10() + 30.0)
}

/// Attenuation in dB/km to power-attenuation coefficient in 1/m.
pub fn db_per_km_to_inv_m(db_km: f64) -> f64 {
    db_km * 10f64.ln() / 10.0 / 1000.0
}

/// Power-attenuation coefficient in 1/m to dB/km.
pub fn inv_m_to_db_per_km(alpha: f64) -> f64 {
    alpha * 10.0 / 10f64.ln() * 1000.0
}

/// Dispersion parameters expressed the way datasheets quote them.
#[derive(Debug, Clone, Copy)]
pub struct DispersionDs {
    /// D [ps/(nm km)]
    pub d: f64,
    /// S [ps/(nm^2 km)]
    pub s: f64,
    /// Reference wavelength [m] at which D and S are quoted.
    pub lambda_ref_m: f64,
}

impl DispersionDs {
    /// Group-velocity dispersion beta2 [s^2/m] and slope beta3 [s^3/m].
    pub fn to_betas(&self) -> (f64, f64) {
        let d_si = self.d * 1e-6; // ps/(nm km) = 1e-6 s/m^2
        let s_si = self.s * 1e3; // ps/(nm^2 km) = 1e3 s/m^3
        let lam = self.lambda_ref_m;
        let k = lam * lam / (2.0 * std::f64::consts::PI * C_LIGHT);
        let beta2 = -d_si * k;
        let beta3 = k * k * (s_si + 2.0 * d_si / lam);
        (beta2, beta3)
    }

    /// Recover D [ps/(nm km)] from beta2 [s^2/m] at this reference wavelength.
    pub fn d_from_beta2(beta2: f64, lambda_ref_m: f64) -> f64 {
        let k = lambda_ref_m * lambda_ref_m / (2.0 * std::f64::consts::PI * C_LIGHT);
        -beta2 / k / 1e-6
    }
}
