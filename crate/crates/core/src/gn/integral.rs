//! Brute-force numerical oracle for the NLI integrals.
//!
//! The link function is an oscillatory integral over the span,
//! mu = |int_0^L w(z) e^{j phi z} dz|^2. The integrand weight w is smooth
//! while e^{j phi z} can run through thousands of periods, so plain
//! sampling rules need per-period refinement. Instead the oracle
//! integrates the piecewise-linear interpolant of w against the
//! oscillation exactly (a Filon-type rule): the only error left is the
//! PL interpolation of w, independent of phi.
//!
//! For full spectra the XPM/SPM double integrals are evaluated per
//! interferer k from a table of |I(phi)|^2. Along the f1 axis phi is an
//! exact quadratic a f1 + b f1^2, so the f1 integral reduces to
//! cumulative moments of the table under an exact change of variables;
//! the remaining f2 axis is a composite Simpson rule (log-spaced around
//! the f2 = 0 resonance for SPM). Nearest-channel evaluation makes the
//! table weight per region w = rho_k (or sqrt(rho_k rho_{k+-1}) in the
//! windowless wings).

use super::{phi_exact, SpanNli};
use crate::error::Error;
use crate::fitter::ProfileFit;
use crate::plan::{Channel, FiberSpec};
use crate::solver::PowerProfile;
use crate::Result;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Quadrature controls. `f2_points` is the per-axis Simpson density (the
/// f1 axis is handled exactly at table resolution).
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSettings {
    /// Simpson points along f2 (odd, >= 3).
    pub f2_points: usize,
    /// Points per side of the log-spaced f2 grid used for SPM (odd).
    pub spm_log_points: usize,
    /// Relative tolerance target for the refining single-integral path.
    pub rel_tol: f64,
    /// Apply the rectangular window of the per-channel decomposition.
    pub apply_window: bool,
    /// |I(phi)|^2 table resolution [1/m].
    pub table_dphi: f64,
    /// Minimum z samples for the PL-Filon weight.
    pub zeta_samples: usize,
    /// Doubling budget for the refining single-integral path.
    pub max_refinements: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            f2_points: 201,
            spm_log_points: 241,
            rel_tol: 5e-4,
            apply_window: true,
            table_dphi: 1.2e-6,
            zeta_samples: 2001,
            max_refinements: 6,
        }
    }
}

impl QuadratureSettings {
    /// Scale every density knob from the default 201-point baseline.
    pub fn with_resolution(resolution: usize) -> Self {
        let base = Self::default();
        let odd = |n: usize| if n % 2 == 0 { n + 1 } else { n };
        let scale = resolution as f64 / 201.0;
        Self {
            f2_points: odd(resolution.max(3)),
            spm_log_points: odd(((241.0 * scale) as usize).max(3)),
            table_dphi: base.table_dphi / scale,
            zeta_samples: ((base.zeta_samples as f64 * scale) as usize).max(501),
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f2_points < 3 || self.f2_points % 2 == 0 {
            return Err(Error::invariant("f2_points must be odd and at least 3"));
        }
        if self.spm_log_points < 3 || self.spm_log_points % 2 == 0 {
            return Err(Error::invariant("spm_log_points must be odd and at least 3"));
        }
        if !(self.rel_tol > 0.0) || !(self.table_dphi > 0.0) {
            return Err(Error::invariant("quadrature tolerances must be positive"));
        }
        Ok(())
    }
}

/// A normalised-profile source the oracle can sample anywhere.
pub trait RhoSource: Sync {
    /// Channel centre frequencies [Hz], ascending.
    fn frequencies(&self) -> &[f64];
    /// rho of channel k sampled at the given positions.
    fn channel_rho(&self, k: usize, z: &[f64]) -> Vec<f64>;
    /// Nearest-channel rho at an arbitrary frequency and position.
    fn rho_at(&self, f: f64, z: f64) -> f64 {
        let k = nearest_channel(self.frequencies(), f);
        self.channel_rho(k, &[z])[0]
    }
}

fn nearest_channel(freqs: &[f64], f: f64) -> usize {
    match freqs.binary_search_by(|v| v.partial_cmp(&f).unwrap()) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) if i == freqs.len() => freqs.len() - 1,
        Err(i) => {
            if (f - freqs[i - 1]) <= (freqs[i] - f) {
                i - 1
            } else {
                i
            }
        }
    }
}

/// Fitted-model profiles for an ascending list of entities (channels
/// plus any pump interferers).
pub struct FittedRho {
    frequencies: Vec<f64>,
    coeffs: Vec<crate::fitter::ChannelCoefficients>,
    f_hat: f64,
    p_f: f64,
    p_b: f64,
    length: f64,
}

impl FittedRho {
    pub fn new(fit: &ProfileFit) -> Self {
        Self {
            frequencies: fit.frequencies.clone(),
            coeffs: fit.channels.clone(),
            f_hat: fit.f_hat,
            p_f: fit.p_f,
            p_b: fit.p_b,
            length: fit.length,
        }
    }

    /// Append extra fitted entities (e.g. pump interferers), keeping the
    /// frequency list ascending. Returns the entity index of each addition.
    pub fn push_entity(&mut self, frequency: f64, coeffs: crate::fitter::ChannelCoefficients) -> usize {
        let pos = self
            .frequencies
            .binary_search_by(|v| v.partial_cmp(&frequency).unwrap())
            .unwrap_or_else(|e| e);
        self.frequencies.insert(pos, frequency);
        self.coeffs.insert(pos, coeffs);
        pos
    }
}

impl RhoSource for FittedRho {
    fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    fn channel_rho(&self, k: usize, z: &[f64]) -> Vec<f64> {
        z.iter()
            .map(|&zz| {
                crate::fitter::eval_rho(
                    &self.coeffs[k],
                    self.frequencies[k],
                    self.f_hat,
                    self.p_f,
                    self.p_b,
                    self.length,
                    zz,
                )
                .max(0.0)
            })
            .collect()
    }
}

/// Raw ODE profiles, linearly interpolated in z.
pub struct OdeRho<'a> {
    profile: &'a PowerProfile,
    frequencies: Vec<f64>,
    rows: Vec<usize>,
}

impl<'a> OdeRho<'a> {
    pub fn new(profile: &'a PowerProfile) -> Self {
        Self::build(profile, false)
    }

    /// Include the pump rows as extra entities.
    pub fn with_pumps(profile: &'a PowerProfile) -> Self {
        Self::build(profile, true)
    }

    fn build(profile: &'a PowerProfile, pumps: bool) -> Self {
        let mut pairs: Vec<(f64, usize)> = profile
            .entities
            .iter()
            .enumerate()
            .filter(|(_, e)| pumps || e.is_channel())
            .map(|(row, e)| (e.frequency, row))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Self {
            profile,
            frequencies: pairs.iter().map(|p| p.0).collect(),
            rows: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Entity index of a given frequency, if present.
    pub fn entity_index(&self, frequency: f64) -> Option<usize> {
        self.frequencies.iter().position(|&f| f == frequency)
    }
}

impl RhoSource for OdeRho<'_> {
    fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    fn channel_rho(&self, k: usize, z: &[f64]) -> Vec<f64> {
        let zg = &self.profile.z_grid;
        let row = &self.profile.powers[self.rows[k]];
        let p0 = row[0];
        z.iter()
            .map(|&zz| {
                let i = match zg.binary_search_by(|v| v.partial_cmp(&zz).unwrap()) {
                    Ok(i) => return (row[i] / p0).max(0.0),
                    Err(0) => 1,
                    Err(i) if i == zg.len() => zg.len() - 1,
                    Err(i) => i,
                };
                let t = (zz - zg[i - 1]) / (zg[i] - zg[i - 1]);
                ((row[i - 1] * (1.0 - t) + row[i] * t) / p0).max(0.0)
            })
            .collect()
    }
}

/// Exact oscillatory integral of the piecewise-linear interpolant:
/// int_0^{M h} PL(w)(z) e^{j phi z} dz, any phi with |phi| h < pi.
fn filon_pl(w: &[f64], h: f64, phi: f64) -> Complex64 {
    let m = w.len() - 1;
    let theta = phi * h;
    // moments of e^{j theta u} against 1 and u on [0, 1]
    let (m0, m1, w1) = if theta.abs() < 1e-4 {
        let t = Complex64::new(0.0, theta);
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let m0 = Complex64::new(1.0, 0.0) + t / 2.0 + t2 / 6.0 + t3 / 24.0 + t4 / 120.0;
        let m1 = Complex64::new(0.5, 0.0) + t / 3.0 + t2 / 8.0 + t3 / 30.0 + t4 / 144.0;
        let th2 = theta * theta;
        let w1 = 1.0 - th2 / 12.0 + th2 * th2 / 360.0;
        (m0, m1, w1)
    } else {
        let it = Complex64::new(0.0, theta);
        let e = Complex64::new(0.0, theta).exp();
        let m0 = (e - 1.0) / it;
        let m1 = (e * (it - 1.0) + 1.0) / (it * it);
        let w1 = 2.0 * (1.0 - theta.cos()) / (theta * theta);
        (m0, m1, w1)
    };
    let a = m0 - m1;
    let b = m1;
    // S = sum_j w_j e^{j theta j} by recurrence
    let rot = Complex64::new(theta.cos(), theta.sin());
    let mut ph = Complex64::new(1.0, 0.0);
    let mut s = Complex64::new(0.0, 0.0);
    for &wj in w.iter() {
        s += wj * ph;
        ph *= rot;
    }
    let e_end = Complex64::new((theta * m as f64).cos(), (theta * m as f64).sin());
    h * (w1 * s - w[0] * b * Complex64::new(theta.cos(), -theta.sin()) - w[m] * e_end * a)
}

/// Link function mu(f1, f2, f_i) [m^2] by direct quadrature of the exact
/// integrand with a refining grid for the weight.
pub fn link_function_numeric(
    source: &dyn RhoSource,
    fiber: &FiberSpec,
    f1: f64,
    f2: f64,
    f_i: f64,
    settings: &QuadratureSettings,
) -> Result<f64> {
    settings.validate()?;
    let l = fiber.length;
    let phi = phi_exact(fiber, f1, f2, f_i);
    let f3 = f1 + f2 - f_i;
    let mut m = settings.zeta_samples.max(501) - 1;
    // keep the per-segment phase below the PL formula's validity limit
    while phi.abs() * (l / m as f64) > 2.8 {
        m *= 2;
    }
    let mut prev: Option<f64> = None;
    for _ in 0..=settings.max_refinements {
        let h = l / m as f64;
        let mut w = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let z = j as f64 * h;
            let r1 = source.rho_at(f1, z);
            let r2 = source.rho_at(f2, z);
            let r3 = source.rho_at(f3, z);
            let ri = source.rho_at(f_i, z);
            if !(ri > 0.0) {
                return Err(Error::QuadratureDiverged(format!(
                    "rho(z, f_i) = 0 at z = {z} m; link function undefined"
                )));
            }
            w.push((r1 * r2 * r3 / ri).sqrt());
        }
        let mu = filon_pl(&w, h, phi).norm_sqr();
        if let Some(p) = prev {
            if (mu - p).abs() <= settings.rel_tol * p.abs().max(1e-300) {
                return Ok(mu);
            }
        }
        prev = Some(mu);
        m *= 2;
    }
    Err(Error::QuadratureDiverged(format!(
        "link function did not settle within {} refinements",
        settings.max_refinements
    )))
}

/// |I(phi)|^2 on a uniform phi grid with cumulative moment tables.
struct PhiTable {
    /// |I(n dphi)|^2 [m^2].
    values: Vec<f64>,
    /// C0(n) = int_0^{n dphi} |I|^2 dphi.
    c0: Vec<f64>,
    /// C1(n) = int_0^{n dphi} phi |I|^2 dphi.
    c1: Vec<f64>,
    dphi: f64,
}

impl PhiTable {
    /// Build for weight w(z) over [0, L]: directly per bin for small
    /// tables, otherwise via an endpoint-corrected FFT.
    fn build(w_z: &[f64], z_grid: &[f64], length: f64, phi_max: f64, dphi: f64) -> Self {
        let n_bins = ((phi_max / dphi).ceil() as usize + 2).max(8);
        // z step: PL formula needs |phi| h < pi with margin
        let h_cap = 2.0 / phi_max.max(1e-12);
        let m_min = ((length / h_cap).ceil() as usize).max(z_grid.len() - 1).max(2000);

        if n_bins <= 4096 {
            let m = m_min;
            let h = length / m as f64;
            let w = resample(w_z, z_grid, m, h);
            let values: Vec<f64> =
                (0..n_bins).map(|n| filon_pl(&w, h, n as f64 * dphi).norm_sqr()).collect();
            return Self::from_values(values, dphi);
        }

        // FFT path: phi_n = 2 pi n / (N h); choose N for the target dphi
        let mut m = m_min;
        let mut n_fft = (2.0 * std::f64::consts::PI / (dphi * (length / m as f64))).ceil() as usize;
        n_fft = n_fft.next_power_of_two();
        // Nyquist must cover phi_max
        while std::f64::consts::PI / (length / m as f64) < phi_max * 1.02 {
            m *= 2;
            n_fft = ((2.0 * std::f64::consts::PI / (dphi * (length / m as f64))).ceil() as usize)
                .next_power_of_two();
        }
        let h = length / m as f64;
        let dphi_fft = 2.0 * std::f64::consts::PI / (n_fft as f64 * h);
        let w = resample(w_z, z_grid, m, h);

        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        for (j, &wj) in w.iter().enumerate() {
            buf[j] = Complex64::new(wj, 0.0);
        }
        FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
        // forward FFT gives sum w_j e^{-2 pi i nj/N}; we need the conjugate
        let n_keep = ((phi_max / dphi_fft).ceil() as usize + 2).min(n_fft / 2);
        let mut values = Vec::with_capacity(n_keep);
        for (n, b) in buf.iter().take(n_keep).enumerate() {
            let s = b.conj();
            let theta = dphi_fft * n as f64 * h;
            let i_val = pl_correct(s, &w, h, theta, m);
            values.push(i_val.norm_sqr());
        }
        Self::from_values(values, dphi_fft)
    }

    fn from_values(values: Vec<f64>, dphi: f64) -> Self {
        let n = values.len();
        let mut c0 = vec![0.0; n];
        let mut c1 = vec![0.0; n];
        for i in 1..n {
            let (pa, pb) = ((i - 1) as f64 * dphi, i as f64 * dphi);
            c0[i] = c0[i - 1] + 0.5 * (values[i - 1] + values[i]) * dphi;
            c1[i] = c1[i - 1] + 0.5 * (pa * values[i - 1] + pb * values[i]) * dphi;
        }
        Self { values, c0, c1, dphi }
    }

    fn interp(table: &[f64], dphi: f64, x: f64) -> f64 {
        let ix = x / dphi;
        let i = (ix as usize).min(table.len() - 2);
        let t = (ix - i as f64).clamp(0.0, 1.0);
        table[i] * (1.0 - t) + table[i + 1] * t
    }

    /// int_0^X |I(phi(f1))|^2 df1 for phi = a f1 + b f1^2 monotone on [0, X].
    fn segment(&self, a: f64, b: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if a == 0.0 {
            // rare degenerate slope: direct Simpson over f1 on the table
            let n = 81;
            let h = x / (n - 1) as f64;
            let mut acc = 0.0;
            for j in 0..n {
                let f1 = j as f64 * h;
                let ph = (b * f1 * f1).abs().min(self.dphi * (self.values.len() - 1) as f64);
                let s = if j == 0 || j == n - 1 {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += s * Self::interp(&self.values, self.dphi, ph);
            }
            return acc * h / 3.0;
        }
        let phx = (a * x + b * x * x).abs();
        let top = self.dphi * (self.values.len() - 1) as f64;
        let phx = phx.min(top);
        let c0 = Self::interp(&self.c0, self.dphi, phx);
        let c1 = Self::interp(&self.c1, self.dphi, phx);
        (c0 - a.signum() * (2.0 * b / (a * a)) * c1) / a.abs()
    }

    /// int over [lo, hi] splitting at f1 = 0 (phi(0) = 0).
    fn f1_integral(&self, a: f64, b: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        if lo >= 0.0 {
            self.segment(a, b, hi) - self.segment(a, b, lo)
        } else if hi <= 0.0 {
            self.segment(-a, b, -lo) - self.segment(-a, b, -hi)
        } else {
            self.segment(a, b, hi) + self.segment(-a, b, -lo)
        }
    }

    fn phi_cap(&self) -> f64 {
        self.dphi * (self.values.len() - 1) as f64
    }
}

fn resample(w_z: &[f64], z_grid: &[f64], m: usize, h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(m + 1);
    let mut seg = 0usize;
    for j in 0..=m {
        let z = j as f64 * h;
        while seg + 2 < z_grid.len() && z_grid[seg + 1] < z {
            seg += 1;
        }
        let (z0, z1) = (z_grid[seg], z_grid[seg + 1]);
        let t = ((z - z0) / (z1 - z0)).clamp(0.0, 1.0);
        out.push(w_z[seg] * (1.0 - t) + w_z[seg + 1] * t);
    }
    out
}

/// Endpoint-corrected PL value from a raw DFT sum S(theta).
fn pl_correct(s: Complex64, w: &[f64], h: f64, theta: f64, m: usize) -> Complex64 {
    let (m0, m1, w1) = if theta.abs() < 1e-4 {
        let t = Complex64::new(0.0, theta);
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        (
            Complex64::new(1.0, 0.0) + t / 2.0 + t2 / 6.0 + t3 / 24.0 + t4 / 120.0,
            Complex64::new(0.5, 0.0) + t / 3.0 + t2 / 8.0 + t3 / 30.0 + t4 / 144.0,
            1.0 - theta * theta / 12.0 + theta.powi(4) / 360.0,
        )
    } else {
        let it = Complex64::new(0.0, theta);
        let e = it.exp();
        ((e - 1.0) / it, (e * (it - 1.0) + 1.0) / (it * it), 2.0 * (1.0 - theta.cos()) / (theta * theta))
    };
    let a = m0 - m1;
    let b = m1;
    let e_end = Complex64::new((theta * m as f64).cos(), (theta * m as f64).sin());
    h * (w1 * s - w[0] * b * Complex64::new(theta.cos(), -theta.sin()) - w[m] * e_end * a)
}

/// Per-interferer tables: the centre region and, for windowless
/// integration, the wings where the third mixing frequency crosses into
/// the neighbouring channel.
struct InterfererTables {
    center: PhiTable,
    low: Option<PhiTable>,
    high: Option<PhiTable>,
    /// Midpoint offsets (f relative to f_k) at which nearest-channel
    /// evaluation switches to the neighbours.
    mid_lo: f64,
    mid_hi: f64,
}

impl InterfererTables {
    fn build(
        source: &dyn RhoSource,
        k: usize,
        z_grid: &[f64],
        length: f64,
        phi_max: f64,
        settings: &QuadratureSettings,
        need_wings: bool,
    ) -> Self {
        let freqs = source.frequencies();
        let rho_k = source.channel_rho(k, z_grid);
        let center = PhiTable::build(&rho_k, z_grid, length, phi_max, settings.table_dphi);
        let mid_lo = if k > 0 { 0.5 * (freqs[k - 1] - freqs[k]) } else { f64::NEG_INFINITY };
        let mid_hi =
            if k + 1 < freqs.len() { 0.5 * (freqs[k + 1] - freqs[k]) } else { f64::INFINITY };
        let (mut low, mut high) = (None, None);
        if need_wings {
            if k > 0 {
                let rho_lo = source.channel_rho(k - 1, z_grid);
                let w: Vec<f64> =
                    rho_k.iter().zip(&rho_lo).map(|(a, b)| (a * b).sqrt()).collect();
                low = Some(PhiTable::build(&w, z_grid, length, phi_max, settings.table_dphi));
            }
            if k + 1 < freqs.len() {
                let rho_hi = source.channel_rho(k + 1, z_grid);
                let w: Vec<f64> =
                    rho_k.iter().zip(&rho_hi).map(|(a, b)| (a * b).sqrt()).collect();
                high = Some(PhiTable::build(&w, z_grid, length, phi_max, settings.table_dphi));
            }
        }
        Self { center, low, high, mid_lo, mid_hi }
    }

    /// f1-line integral over [lo, hi] at fixed f2, with the nearest-channel
    /// region splits at s = f1 + f2 crossing the channel midpoints.
    fn line(&self, a: f64, b: f64, f2: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        // boundaries in f1 where the third frequency switches channel
        let cut_lo = (self.mid_lo - f2).clamp(lo, hi);
        let cut_hi = (self.mid_hi - f2).clamp(lo, hi);
        let mut acc = 0.0;
        if cut_lo > lo {
            let t = self.low.as_ref().unwrap_or(&self.center);
            acc += t.f1_integral(a, b, lo, cut_lo);
        }
        acc += self.center.f1_integral(a, b, cut_lo, cut_hi);
        if hi > cut_hi {
            let t = self.high.as_ref().unwrap_or(&self.center);
            acc += t.f1_integral(a, b, cut_hi, hi);
        }
        acc
    }
}

fn simpson_weights(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |j| {
        if j == 0 || j == n - 1 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        }
    })
}

/// Upper bound of |phi| over the integration cell of pair (i, k).
fn phi_bound(fiber: &FiberSpec, f_i: f64, f_k: f64, b_i: f64, b_k: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut worst = 0.0f64;
    for &f2 in &[-b_k / 2.0, 0.0, b_k / 2.0] {
        let beta = fiber.beta2
            + pi * fiber.beta3 * ((f2 + f_k - fiber.f_ref) + (f_i - fiber.f_ref) + b_i / 2.0);
        let a = 4.0 * pi * pi * (f2 + f_k - f_i).abs() * beta.abs();
        let b = 4.0 * pi * pi * pi * fiber.beta3.abs() * (f2 + f_k - f_i).abs();
        worst = worst.max(a * b_i / 2.0 + b * (b_i / 2.0) * (b_i / 2.0));
    }
    worst * 1.05
}

struct PairGeometry {
    delta_f: f64,
    f_sum_off: f64, // f_i + f_k - 2 f_ref
}

fn quad_ab(fiber: &FiberSpec, geo: &PairGeometry, f2: f64) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    let base = f2 + geo.delta_f;
    let a = -4.0 * pi * pi * base * (fiber.beta2 + pi * fiber.beta3 * (f2 + geo.f_sum_off));
    let b = -4.0 * pi * pi * pi * fiber.beta3 * base;
    (a, b)
}

fn xpm_double_integral(
    tables: &InterfererTables,
    fiber: &FiberSpec,
    f_i: f64,
    f_k: f64,
    b_i: f64,
    b_k: f64,
    settings: &QuadratureSettings,
) -> f64 {
    let geo = PairGeometry { delta_f: f_k - f_i, f_sum_off: (f_i - fiber.f_ref) + (f_k - fiber.f_ref) };
    let n = settings.f2_points;
    let h2 = b_k / (n - 1) as f64;
    let mut acc = 0.0;
    for (j, wt) in simpson_weights(n).enumerate() {
        let f2 = -b_k / 2.0 + j as f64 * h2;
        let (a, b) = quad_ab(fiber, &geo, f2);
        let (mut lo, mut hi) = (-b_i / 2.0, b_i / 2.0);
        if settings.apply_window {
            lo = lo.max(-b_k / 2.0 - f2);
            hi = hi.min(b_k / 2.0 - f2);
        }
        acc += wt * tables.line(a, b, f2, lo, hi);
    }
    acc * h2 / 3.0
}

fn spm_double_integral(
    tables: &InterfererTables,
    fiber: &FiberSpec,
    f_i: f64,
    b_i: f64,
    settings: &QuadratureSettings,
) -> f64 {
    let geo = PairGeometry { delta_f: 0.0, f_sum_off: 2.0 * (f_i - fiber.f_ref) };
    let n = settings.spm_log_points;
    let f2_min = 1.0f64; // Hz; the |f2| < f2_min strip is negligible
    let (u0, u1) = (f2_min.ln(), (b_i / 2.0).ln());
    let hu = (u1 - u0) / (n - 1) as f64;
    let mut acc = 0.0;
    for side in [1.0, -1.0] {
        for (j, wt) in simpson_weights(n).enumerate() {
            let u = u0 + j as f64 * hu;
            let f2 = side * u.exp().min(b_i / 2.0);
            let (a, b) = quad_ab(fiber, &geo, f2);
            let (mut lo, mut hi) = (-b_i / 2.0, b_i / 2.0);
            if settings.apply_window {
                lo = lo.max(-b_i / 2.0 - f2);
                hi = hi.min(b_i / 2.0 - f2);
            }
            acc += wt * tables.line(a, b, f2, lo, hi) * f2.abs();
        }
    }
    acc * hu / 3.0
}

/// Numerical XPM contribution of interferer k on channel i [1/W^2].
pub fn eta_xpm_numeric(
    source: &dyn RhoSource,
    fiber: &FiberSpec,
    channels: &[Channel],
    i: usize,
    k: usize,
    settings: &QuadratureSettings,
) -> Result<f64> {
    settings.validate()?;
    if i == k {
        return Err(Error::invariant("eta_xpm_numeric requires k != i"));
    }
    let (ci, ck) = (channels[i], channels[k]);
    if ck.power == 0.0 {
        return Ok(0.0);
    }
    let z = uniform_grid(fiber.length, settings.zeta_samples);
    let phi_max = phi_bound(fiber, ci.frequency, ck.frequency, ci.bandwidth, ck.bandwidth);
    let tables = InterfererTables::build(
        source,
        k,
        &z,
        fiber.length,
        phi_max,
        settings,
        !settings.apply_window,
    );
    let integral = xpm_double_integral(
        &tables,
        fiber,
        ci.frequency,
        ck.frequency,
        ci.bandwidth,
        ck.bandwidth,
        settings,
    );
    let g = fiber.gamma;
    let ratio = ck.power / ci.power;
    Ok((32.0 / 27.0) * (g * g / (ck.bandwidth * ck.bandwidth)) * ratio * ratio * integral)
}

/// Numerical SPM contribution of channel i on itself [1/W^2]; half the
/// self-pair XPM with the exact phase factor.
pub fn eta_spm_numeric(
    source: &dyn RhoSource,
    fiber: &FiberSpec,
    channels: &[Channel],
    i: usize,
    settings: &QuadratureSettings,
) -> Result<f64> {
    settings.validate()?;
    let ci = channels[i];
    let z = uniform_grid(fiber.length, settings.zeta_samples);
    let phi_max = spm_phi_bound(fiber, ci.frequency, ci.bandwidth);
    let tables = InterfererTables::build(
        source,
        i,
        &z,
        fiber.length,
        phi_max,
        settings,
        !settings.apply_window,
    );
    let integral = spm_double_integral(&tables, fiber, ci.frequency, ci.bandwidth, settings);
    let g = fiber.gamma;
    Ok(0.5 * (32.0 / 27.0) * (g * g / (ci.bandwidth * ci.bandwidth)) * integral)
}

fn spm_phi_bound(fiber: &FiberSpec, f_i: f64, b_i: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let beta = fiber.beta2.abs() + pi * fiber.beta3.abs() * (b_i + 2.0 * (f_i - fiber.f_ref).abs());
    (4.0 * pi * pi * beta * (b_i / 2.0) * (b_i / 2.0)
        + 4.0 * pi * pi * pi * fiber.beta3.abs() * (b_i / 2.0) * (b_i / 2.0) * (b_i / 2.0))
        * 1.05
}

fn uniform_grid(length: f64, points: usize) -> Vec<f64> {
    (0..points).map(|j| length * j as f64 / (points - 1) as f64).collect()
}

/// Full-spectrum single-span SPM and XPM by the numerical route.
///
/// Builds each interferer's table once and reuses it against every
/// channel of interest; interferers run in parallel.
pub fn nli_numeric_span(
    source: &dyn RhoSource,
    fiber: &FiberSpec,
    channels: &[Channel],
    settings: &QuadratureSettings,
) -> Result<SpanNli> {
    settings.validate()?;
    let nch = channels.len();
    let z = uniform_grid(fiber.length, settings.zeta_samples);

    // one table per interferer must cover every pairing
    let mut phi_max = 0.0f64;
    for i in 0..nch {
        phi_max = phi_max.max(spm_phi_bound(fiber, channels[i].frequency, channels[i].bandwidth));
        for k in 0..nch {
            if k != i {
                phi_max = phi_max.max(phi_bound(
                    fiber,
                    channels[i].frequency,
                    channels[k].frequency,
                    channels[i].bandwidth,
                    channels[k].bandwidth,
                ));
            }
        }
    }

    let per_k: Result<Vec<(f64, Vec<f64>)>> = (0..nch)
        .into_par_iter()
        .map(|k| {
            let tables = InterfererTables::build(
                source,
                k,
                &z,
                fiber.length,
                phi_max,
                settings,
                !settings.apply_window,
            );
            if tables.center.phi_cap() < phi_max * 0.999 {
                return Err(Error::QuadratureDiverged("phi table shorter than required".into()));
            }
            let spm_int =
                spm_double_integral(&tables, fiber, channels[k].frequency, channels[k].bandwidth, settings);
            let mut xpm_on_i = vec![0.0; nch];
            for i in 0..nch {
                if i == k {
                    continue;
                }
                xpm_on_i[i] = xpm_double_integral(
                    &tables,
                    fiber,
                    channels[i].frequency,
                    channels[k].frequency,
                    channels[i].bandwidth,
                    channels[k].bandwidth,
                    settings,
                );
            }
            Ok((spm_int, xpm_on_i))
        })
        .collect();
    let per_k = per_k?;

    let g = fiber.gamma;
    let mut spm = vec![0.0; nch];
    let mut xpm = vec![0.0; nch];
    for (k, (spm_int, xpm_on_i)) in per_k.iter().enumerate() {
        let bk = channels[k].bandwidth;
        spm[k] = 0.5 * (32.0 / 27.0) * (g * g / (bk * bk)) * spm_int;
        for i in 0..nch {
            if i == k {
                continue;
            }
            let ratio = channels[k].power / channels[i].power;
            xpm[i] += (32.0 / 27.0) * (g * g / (bk * bk)) * ratio * ratio * xpm_on_i[i];
        }
    }
    Ok(SpanNli { spm, xpm })
}
