//! Closed-form evaluation of the link function and of the XPM/SPM
//! nonlinear coefficients from the fitted profile model.
//!
//! The fitted profile enters through the expansion
//! tau_k(z) = sum_{(l1,l2)} Upsilon e^{-(l1 a_f z + l2 a_b L - l2 a_b z)}
//! over (l1,l2) in {(0,0),(1,0),(0,1)}, which turns the link-function
//! integral into a rational-trigonometric expression per index pair.
//!
//! Note on signs: expanding |sum Upsilon (kappa_f e^{j phi L} - kappa_b)
//! / (-alpha_l + j phi)|^2 puts the sin(phi L) cross term in with a minus
//! sign; the quadrature oracle confirms it (the plus variant misses by up
//! to a percent, the minus variant matches to machine precision).

use super::sgn;
use crate::error::Error;
use crate::fitter::ProfileFit;
use crate::plan::FiberSpec;
use crate::Result;
use std::f64::consts::PI;

/// The three expansion index pairs (l1, l2).
pub const INDEX_PAIRS: [(u8, u8); 3] = [(0, 0), (1, 0), (0, 1)];

/// Per-channel closed-form ingredients for the three index pairs.
#[derive(Debug, Clone)]
pub struct ClosedFormTerms {
    pub t_f: f64,
    pub t_b: f64,
    /// T = 1 + T_f - T_b e^{-alpha_b L}.
    pub t_total: f64,
    /// Upsilon per index pair: [T, -T_f, T_b].
    pub upsilon: [f64; 3],
    /// alpha_l = alpha + l1 alpha_f - l2 alpha_b per pair [1/m].
    pub alpha_l: [f64; 3],
    /// kappa_f = e^{-(alpha + l1 alpha_f) L} per pair.
    pub kappa_f: [f64; 3],
    /// kappa_b = e^{-l2 alpha_b L} per pair.
    pub kappa_b: [f64; 3],
    /// Span length [m].
    pub length: f64,
}

impl ClosedFormTerms {
    /// tau(z) reconstructed from the expansion; tau(0) = 1 by construction.
    pub fn tau(&self, alpha_f: f64, alpha_b: f64, z: f64) -> f64 {
        let l = self.length;
        self.upsilon[0]
            + self.upsilon[1] * (-alpha_f * z).exp()
            + self.upsilon[2] * (-alpha_b * l).exp() * (alpha_b * z).exp()
    }
}

/// Build the expansion terms for channel k of a fitted span.
pub fn compute_terms(fit: &ProfileFit, k: usize) -> Result<ClosedFormTerms> {
    let c = &fit.channels[k];
    let f_off = fit.frequencies[k] - fit.f_hat;
    let l = fit.length;
    let t_f = -fit.p_f * c.c_f * f_off / c.alpha_f;
    let t_b = -fit.p_b * c.c_b * f_off / c.alpha_b;
    let t_total = 1.0 + t_f - t_b * (-c.alpha_b * l).exp();
    let upsilon = [t_total, -t_f, t_b];
    let mut alpha_l = [0.0; 3];
    let mut kappa_f = [0.0; 3];
    let mut kappa_b = [0.0; 3];
    for (idx, &(l1, l2)) in INDEX_PAIRS.iter().enumerate() {
        let (l1, l2) = (l1 as f64, l2 as f64);
        alpha_l[idx] = c.alpha + l1 * c.alpha_f - l2 * c.alpha_b;
        kappa_f[idx] = (-(c.alpha + l1 * c.alpha_f) * l).exp();
        kappa_b[idx] = (-l2 * c.alpha_b * l).exp();
    }
    let terms = ClosedFormTerms { t_f, t_b, t_total, upsilon, alpha_l, kappa_f, kappa_b, length: l };
    if !terms.upsilon.iter().all(|u| u.is_finite())
        || !terms.alpha_l.iter().all(|a| a.is_finite())
    {
        return Err(Error::DegenerateFit { index: k, reason: "non-finite expansion terms".into() });
    }
    Ok(terms)
}

/// Closed-form link function mu(phi) [m^2] for one channel's terms.
///
/// Double sum over the index pairs of a main part, a cos(phi L) part and
/// a sin(phi L) part, each over (alpha_l^2 + phi^2)(alpha_l'^2 + phi^2).
pub fn link_function_closed(terms: &ClosedFormTerms, phi: f64) -> f64 {
    let l = terms.length;
    let (cos_pl, sin_pl) = ((phi * l).cos(), (phi * l).sin());
    let mut total = 0.0;
    for a in 0..3 {
        let ua = terms.upsilon[a];
        if ua == 0.0 {
            continue;
        }
        for b in 0..3 {
            let ub = terms.upsilon[b];
            if ub == 0.0 {
                continue;
            }
            let (al, alp) = (terms.alpha_l[a], terms.alpha_l[b]);
            let (kf, kfp) = (terms.kappa_f[a], terms.kappa_f[b]);
            let (kb, kbp) = (terms.kappa_b[a], terms.kappa_b[b]);
            let den = (al * al + phi * phi) * (alp * alp + phi * phi);
            let main = (kf * kfp + kb * kbp) * (al * alp + phi * phi);
            let cos_t = (kf * kbp + kb * kfp) * (al * alp + phi * phi) * cos_pl;
            let sin_t = (kf * kbp - kb * kfp) * (al - alp) * phi * sin_pl;
            total += ua * ub * (main - cos_t - sin_t) / den;
        }
    }
    total
}

/// [atan(c/a) + atan(c/b)] / (a + b) with its removable singularity at
/// b -> -a evaluated analytically.
fn atan_pair(c: f64, a: f64, b: f64) -> f64 {
    if (a + b).abs() < 1e-9 * (a.abs() + b.abs()) {
        -c / (a * a + c * c)
    } else {
        ((c / a).atan() + (c / b).atan()) / (a + b)
    }
}

/// [asinh(q/a) + asinh(q/b)] / (a + b), singularity at b -> -a removed.
fn asinh_pair(q: f64, a: f64, b: f64) -> f64 {
    if (a + b).abs() < 1e-9 * (a.abs() + b.abs()) {
        -q / (a * (a * a + q * q).sqrt())
    } else {
        ((q / a).asinh() + (q / b).asinh()) / (a + b)
    }
}

/// [sign(a/phi) e^{-|aL|} + sign(b/phi) e^{-|bL|}] / (a + b), with the
/// b -> -a limit -sign(phi) L e^{-|aL|}.
fn exp_pair_signed(phi: f64, a: f64, b: f64, l: f64) -> f64 {
    if (a + b).abs() < 1e-9 * (a.abs() + b.abs()) {
        -sgn(phi) * l * (-(a * l).abs()).exp()
    } else {
        (sgn(a / phi) * (-(a * l).abs()).exp() + sgn(b / phi) * (-(b * l).abs()).exp()) / (a + b)
    }
}

/// [sign(-phi) e^{-|aL|} + sign(phi) e^{-|bL|}] / (a + b), with the
/// b -> -a limit sign(phi) sign(a) L e^{-|aL|}.
fn exp_pair_odd(phi: f64, a: f64, b: f64, l: f64) -> f64 {
    if (a + b).abs() < 1e-9 * (a.abs() + b.abs()) {
        sgn(phi) * sgn(a) * l * (-(a * l).abs()).exp()
    } else {
        (sgn(-phi) * (-(a * l).abs()).exp() + sgn(phi) * (-(b * l).abs()).exp()) / (a + b)
    }
}

/// Closed-form XPM contribution of interferer k on the channel of
/// interest [1/W^2].
///
/// `terms` belong to the interferer k. Requires non-overlapping channels
/// and a nonzero pair phase mismatch.
#[allow(clippy::too_many_arguments)]
pub fn eta_xpm_pair(
    terms: &ClosedFormTerms,
    fiber: &FiberSpec,
    f_i: f64,
    f_k: f64,
    b_i: f64,
    b_k: f64,
    p_i: f64,
    p_k: f64,
) -> Result<f64> {
    if (f_k - f_i).abs() < 0.5 * (b_i + b_k) {
        return Err(Error::invariant("XPM pair requires non-overlapping channels"));
    }
    let phi = super::phi_pair(fiber, f_i, f_k);
    if phi == 0.0 {
        return Err(Error::ZeroDispersion { f_i_hz: f_i, f_k_hz: f_k });
    }
    let l = terms.length;
    let mut sum = 0.0;
    for a in 0..3 {
        let ua = terms.upsilon[a];
        if ua == 0.0 {
            continue;
        }
        for b in 0..3 {
            let ub = terms.upsilon[b];
            if ub == 0.0 {
                continue;
            }
            let (al, alp) = (terms.alpha_l[a], terms.alpha_l[b]);
            let (kf, kfp) = (terms.kappa_f[a], terms.kappa_f[b]);
            let (kb, kbp) = (terms.kappa_b[a], terms.kappa_b[b]);
            let main = 2.0 * (kf * kfp + kb * kbp) * atan_pair(phi * b_i / 2.0, al, alp);
            let cos_part = -(kf * kbp + kb * kfp) * exp_pair_signed(phi, al, alp, l);
            let sin_part = -(kf * kbp - kb * kfp) * exp_pair_odd(phi, al, alp, l);
            sum += ua * ub * (main + PI * (cos_part + sin_part)) / phi;
        }
    }
    let gamma = fiber.gamma;
    Ok((32.0 / 27.0) * (gamma * gamma / b_k) * (p_k / p_i) * (p_k / p_i) * sum)
}

/// Closed-form SPM contribution of the channel on itself [1/W^2].
pub fn eta_spm(terms: &ClosedFormTerms, fiber: &FiberSpec, f_i: f64, b_i: f64) -> Result<f64> {
    let phi = super::phi_self(fiber, f_i);
    let l = terms.length;
    if phi * l * b_i * b_i <= 0.0 {
        return Err(Error::SpmDomain { f_i_hz: f_i, phi });
    }
    let log_factor = 4.0 * ((phi * l / (2.0 * PI)).sqrt() * b_i).ln();
    let q = 3.0 * phi * b_i * b_i / (8.0 * PI);
    let mut sum = 0.0;
    for a in 0..3 {
        let ua = terms.upsilon[a];
        if ua == 0.0 {
            continue;
        }
        for b in 0..3 {
            let ub = terms.upsilon[b];
            if ub == 0.0 {
                continue;
            }
            let (al, alp) = (terms.alpha_l[a], terms.alpha_l[b]);
            let (kf, kfp) = (terms.kappa_f[a], terms.kappa_f[b]);
            let (kb, kbp) = (terms.kappa_b[a], terms.kappa_b[b]);
            let main = 2.0 * (kf * kfp + kb * kbp) * asinh_pair(q, al, alp);
            let cos_part = -(kf * kbp + kb * kfp) * exp_pair_signed(phi, al, alp, l);
            let sin_part = -(kf * kbp - kb * kfp) * exp_pair_odd(phi, al, alp, l);
            sum += ua * ub * (PI / phi) * (main + log_factor * (cos_part + sin_part));
        }
    }
    let gamma = fiber.gamma;
    Ok((16.0 / 27.0) * (gamma * gamma / (b_i * b_i)) * sum)
}

/// Terms of the no-Raman reduction: T = 1, only the (0,0) pair active.
pub fn lumped_terms(alpha: f64, length: f64) -> ClosedFormTerms {
    ClosedFormTerms {
        t_f: 0.0,
        t_b: 0.0,
        t_total: 1.0,
        upsilon: [1.0, 0.0, 0.0],
        alpha_l: [alpha, alpha, alpha],
        kappa_f: [(-alpha * length).exp(); 3],
        kappa_b: [1.0; 3],
        length,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitter::ChannelCoefficients;
    use crate::gn::test_support::test_fiber;
    use approx::assert_relative_eq;

    fn raman_fit() -> ProfileFit {
        // BW-flavoured coefficients with all three pairs active
        let c = ChannelCoefficients {
            alpha: 4.6e-5,
            alpha_f: 5.5e-5,
            alpha_b: 7.0e-5,
            c_f: 2.2e-18,
            c_b: -3.1e-18,
        };
        ProfileFit {
            channels: vec![c],
            diagnostics: vec![crate::fitter::FitDiagnostics {
                weighted_rms_db: 0.0,
                max_abs_db: 0.0,
                eff_len_rel_err: 0.0,
                iterations: 0,
                converged: true,
            }],
            frequencies: vec![202e12],
            f_hat: 208e12,
            p_f: 0.3,
            p_b: 0.4,
            length: 80e3,
        }
    }

    #[test]
    fn terms_reconstruction_invariants() {
        let fit = raman_fit();
        let t = compute_terms(&fit, 0).unwrap();
        let c = &fit.channels[0];
        // T = 1 + T_f - T_b e^{-alpha_b L}
        assert_relative_eq!(
            t.t_total,
            1.0 + t.t_f - t.t_b * (-c.alpha_b * fit.length).exp(),
            max_relative = 1e-14
        );
        // tau(0) = 1 via the Upsilon expansion
        assert_relative_eq!(t.tau(c.alpha_f, c.alpha_b, 0.0), 1.0, max_relative = 1e-12);
        // kappas in (0, 1]
        for idx in 0..3 {
            assert!(t.kappa_f[idx] > 0.0 && t.kappa_f[idx] <= 1.0);
            assert!(t.kappa_b[idx] > 0.0 && t.kappa_b[idx] <= 1.0);
        }
        // tau matches the fitted rho with the exponential stripped
        for &z in &[13e3, 47e3, 80e3] {
            let rho = fit.rho(0, z);
            let expect = (-c.alpha * z).exp() * t.tau(c.alpha_f, c.alpha_b, z);
            assert_relative_eq!(rho, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn lumped_reduction_terms() {
        let t = lumped_terms(4.6e-5, 80e3);
        assert_eq!(t.upsilon, [1.0, 0.0, 0.0]);
        assert_eq!(t.t_total, 1.0);
    }

    #[test]
    fn link_function_lumped_phi_zero_is_leff_squared() {
        let alpha = 4.6e-5;
        let l = 80e3;
        let t = lumped_terms(alpha, l);
        let leff = (1.0 - (-alpha * l).exp()) / alpha;
        assert_relative_eq!(link_function_closed(&t, 0.0), leff * leff, max_relative = 1e-12);
    }

    #[test]
    fn link_function_lumped_general_phi() {
        let alpha = 4.6e-5;
        let l = 80e3;
        let t = lumped_terms(alpha, l);
        for &phi in &[1e-5, 7.7e-5, 4.3e-4] {
            let expect = (1.0 + (-2.0 * alpha * l).exp() - 2.0 * (-alpha * l).exp() * (phi * l).cos())
                / (alpha * alpha + phi * phi);
            assert_relative_eq!(link_function_closed(&t, phi), expect, max_relative = 1e-12);
        }
    }

    /// Straight complex quadrature of |int_0^L e^{-a z} tau(z) e^{j phi z} dz|^2
    /// on a dense Simpson grid; independent route used to pin the sin sign.
    fn mu_quadrature(fit: &ProfileFit, phi: f64) -> f64 {
        let l = fit.length;
        let n = 400_001;
        let h = l / (n - 1) as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for j in 0..n {
            let z = j as f64 * h;
            let w = fit.rho(0, z);
            let s = if j == 0 || j == n - 1 {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            re += s * w * (phi * z).cos();
            im += s * w * (phi * z).sin();
        }
        re *= h / 3.0;
        im *= h / 3.0;
        re * re + im * im
    }

    #[test]
    fn link_function_matches_quadrature_with_raman_terms() {
        let fit = raman_fit();
        let t = compute_terms(&fit, 0).unwrap();
        for &phi in &[0.0, 1e-5, 7.3e-5, 4.1e-4] {
            let closed = link_function_closed(&t, phi);
            let quad = mu_quadrature(&fit, phi);
            assert_relative_eq!(closed, quad, max_relative = 1e-6);
        }
    }

    #[test]
    fn pair_helpers_match_their_limits() {
        // removable singularities evaluated by approaching the limit
        let (c, a) = (3.7e-4, 5.1e-5);
        let lim = atan_pair(c, a, -a);
        let near = atan_pair(c, a, -a * (1.0 + 1e-7));
        assert_relative_eq!(lim, near, max_relative = 1e-4);

        let q = 2.2e-4;
        let lim = asinh_pair(q, a, -a);
        let near = asinh_pair(q, a, -a * (1.0 + 1e-7));
        assert_relative_eq!(lim, near, max_relative = 1e-4);

        let (phi, l) = (1.3e-13, 80e3);
        let lim = exp_pair_signed(phi, a, -a, l);
        let near = exp_pair_signed(phi, a, -a * (1.0 + 1e-7), l);
        assert_relative_eq!(lim, near, max_relative = 1e-3);

        let lim = exp_pair_odd(phi, a, -a, l);
        let near = exp_pair_odd(phi, a, -a * (1.0 + 1e-7), l);
        assert_relative_eq!(lim, near, max_relative = 1e-3);
    }

    #[test]
    fn xpm_quadratic_in_interferer_power() {
        let fiber = test_fiber();
        let t = lumped_terms(4.6e-5, 80e3);
        let e1 = eta_xpm_pair(&t, &fiber, 193e12, 193.2e12, 96e9, 96e9, 1e-3, 1e-3).unwrap();
        let e2 = eta_xpm_pair(&t, &fiber, 193e12, 193.2e12, 96e9, 96e9, 1e-3, 2e-3).unwrap();
        assert_relative_eq!(e2, 4.0 * e1, max_relative = 1e-12);
        let e0 = eta_xpm_pair(&t, &fiber, 193e12, 193.2e12, 96e9, 96e9, 1e-3, 0.0).unwrap();
        assert_eq!(e0, 0.0);
    }

    #[test]
    fn xpm_overlapping_pair_is_error() {
        let fiber = test_fiber();
        let t = lumped_terms(4.6e-5, 80e3);
        assert!(eta_xpm_pair(&t, &fiber, 193e12, 193.05e12, 96e9, 96e9, 1e-3, 1e-3).is_err());
    }

    #[test]
    fn spm_scales_with_gamma_squared_and_ignores_other_powers() {
        let mut fiber = test_fiber();
        let t = lumped_terms(4.6e-5, 80e3);
        let e1 = eta_spm(&t, &fiber, 193e12, 96e9).unwrap();
        fiber.gamma *= 2.0;
        let e2 = eta_spm(&t, &fiber, 193e12, 96e9).unwrap();
        assert_relative_eq!(e2, 4.0 * e1, max_relative = 1e-12);
    }

    #[test]
    fn spm_lumped_reduction_dominant_term() {
        // dominant single-pair form: (16/27) (gamma^2/B^2) (2 pi/(2 alpha phi))
        // * 2 asinh(3 phi B^2/(8 pi alpha)), up to e^{-alpha L} corrections
        let fiber = test_fiber();
        let alpha = 4.6e-5;
        let l = 80e3;
        let t = lumped_terms(alpha, l);
        let b = 96e9;
        let f = 193e12;
        let phi = super::super::phi_self(&fiber, f);
        let got = eta_spm(&t, &fiber, f, b).unwrap();
        let g = fiber.gamma;
        let dominant = (16.0 / 27.0) * (g * g / (b * b)) * (2.0 * PI / (phi * 2.0 * alpha))
            * 2.0
            * (3.0 * phi * b * b / (8.0 * PI * alpha)).asinh();
        // corrections are O(e^{-2 alpha L})
        assert_relative_eq!(got, dominant, max_relative = 0.02);
    }

    #[test]
    fn spm_normal_dispersion_is_signalled() {
        let mut fiber = test_fiber();
        fiber.beta2 = -fiber.beta2; // flip to normal dispersion
        let t = lumped_terms(4.6e-5, 80e3);
        assert!(matches!(eta_spm(&t, &fiber, 193e12, 96e9), Err(Error::SpmDomain { .. })));
    }

    #[test]
    fn xpm_zero_dispersion_is_signalled() {
        let mut fiber = test_fiber();
        fiber.beta2 = 0.0;
        fiber.beta3 = 0.0;
        let t = lumped_terms(4.6e-5, 80e3);
        assert!(matches!(
            eta_xpm_pair(&t, &fiber, 193e12, 193.2e12, 96e9, 96e9, 1e-3, 1e-3),
            Err(Error::ZeroDispersion { .. })
        ));
    }

    #[test]
    fn xpm_symmetric_under_grid_reflection() {
        // with beta3 = 0 and flat alpha, the pair contribution is even in
        // the sign of the frequency separation
        let mut fiber = test_fiber();
        fiber.beta3 = 0.0;
        let t = lumped_terms(4.6e-5, 80e3);
        let f0 = fiber.f_ref;
        let up = eta_xpm_pair(&t, &fiber, f0, f0 + 0.2e12, 96e9, 96e9, 1e-3, 1e-3).unwrap();
        let dn = eta_xpm_pair(&t, &fiber, f0, f0 - 0.2e12, 96e9, 96e9, 1e-3, 1e-3).unwrap();
        assert_relative_eq!(up, dn, max_relative = 1e-10);
    }
}
