//! Five-coefficient semi-analytical signal-profile model and its fit.
//!
//! Each channel's normalised profile from the ODE solve is matched by
//!
//! rho(z) = exp(-alpha z) * [1 - (C_f P_f L_eff(z) + C_b P_b Lt_eff(z)) (f_i - f_hat)]
//!
//! with L_eff = (1 - e^{-alpha_f z})/alpha_f and
//! Lt_eff = (e^{-alpha_b (L-z)} - e^{-alpha_b L})/alpha_b. The five
//! coefficients are deliberately redundant; only the reproduced rho(z) is
//! contractual. Fitting happens in the dB domain, weighted by the profile
//! power so the high-power region that dominates the NLI integral wins.

use crate::error::Error;
use crate::plan::LinkPlan;
use crate::solver::PowerProfile;
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// The five fitted coefficients of one channel.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelCoefficients {
    /// Base decay rate [1/m].
    pub alpha: f64,
    /// Extinction rate of the forward gain/loss contribution [1/m].
    pub alpha_f: f64,
    /// Extinction rate of the backward gain contribution [1/m].
    pub alpha_b: f64,
    /// Forward (channels + FW pumps) gain slope [1/(m W Hz)].
    pub c_f: f64,
    /// Backward-pump gain slope [1/(m W Hz)].
    pub c_b: f64,
}

/// Per-channel fit diagnostics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Power-weighted rms of the dB residual.
    pub weighted_rms_db: f64,
    /// Largest absolute dB residual on the grid.
    pub max_abs_db: f64,
    /// |int rho_fit - int rho_num| / int rho_num over the span.
    pub eff_len_rel_err: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fitted model for every channel of one span, plus the shared quantities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileFit {
    pub channels: Vec<ChannelCoefficients>,
    pub diagnostics: Vec<FitDiagnostics>,
    /// Channel centre frequencies [Hz], ascending.
    pub frequencies: Vec<f64>,
    /// Mean frequency of all pumps (FW and BW) [Hz]; 0 when pump-free.
    pub f_hat: f64,
    /// Total z=0 power of channels plus FW pumps [W].
    pub p_f: f64,
    /// Total z=L power of BW pumps [W].
    pub p_b: f64,
    /// Span length [m].
    pub length: f64,
}

impl ProfileFit {
    /// Evaluate the fitted rho for one channel at position z.
    pub fn rho(&self, channel: usize, z: f64) -> f64 {
        eval_rho(
            &self.channels[channel],
            self.frequencies[channel],
            self.f_hat,
            self.p_f,
            self.p_b,
            self.length,
            z,
        )
    }

    /// Write the per-channel fit report CSV.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "wavelength_nm,alpha_1_m,alpha_f_1_m,alpha_b_1_m,c_f_1_m_w_hz,c_b_1_m_w_hz,weighted_rms_db,max_abs_db"
        )?;
        for ((c, d), f) in self.channels.iter().zip(&self.diagnostics).zip(&self.frequencies) {
            writeln!(
                w,
                "{:.4},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.6},{:.6}",
                crate::units::frequency_to_wavelength(*f) * 1e9,
                c.alpha,
                c.alpha_f,
                c.alpha_b,
                c.c_f,
                c.c_b,
                d.weighted_rms_db,
                d.max_abs_db
            )?;
        }
        Ok(())
    }
}

/// rho(z, f_i) of the semi-analytical model. Total on its domain; rho(0)
/// is exactly 1 for any coefficients.
pub fn eval_rho(
    c: &ChannelCoefficients,
    f_i: f64,
    f_hat: f64,
    p_f: f64,
    p_b: f64,
    length: f64,
    z: f64,
) -> f64 {
    let l_eff = (1.0 - (-c.alpha_f * z).exp()) / c.alpha_f;
    let lt_eff = ((-c.alpha_b * (length - z)).exp() - (-c.alpha_b * length).exp()) / c.alpha_b;
    let x = c.c_f * p_f * l_eff + c.c_b * p_b * lt_eff;
    (-c.alpha * z).exp() * (1.0 - x * (f_i - f_hat))
}

/// Fit controls; the defaults are the production configuration.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when the internal-parameter step norm drops below this.
    pub step_tol: f64,
    /// Stop on relative cost decrease below this.
    pub cost_tol: f64,
    /// Forward-difference step for the Jacobian (internal parameters).
    pub fd_step: f64,
    /// Bounds for alpha_f and alpha_b [1/m].
    pub alpha_fb_lo: f64,
    pub alpha_fb_hi: f64,
    /// alpha_i is confined to [init/band, init*band].
    pub alpha_band: f64,
    /// |C_f|, |C_b| bound [1/(m W Hz)].
    pub c_bound: f64,
    /// Weight of the hinge keeping |alpha - alpha_b| L away from zero,
    /// where the closed-form expansion degenerates. Zero disables it.
    pub hinge_weight: f64,
    /// Hinge target gap in units of alpha*L.
    pub hinge_gap: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tol: 1e-10,
            cost_tol: 1e-12,
            fd_step: 1e-6,
            alpha_fb_lo: 1.2e-5,
            alpha_fb_hi: 6.0e-4,
            alpha_band: 2.0,
            c_bound: 8.0e-16,
            hinge_weight: 5.0,
            hinge_gap: 1.5,
        }
    }
}

/// Shared per-span quantities entering the model.
#[derive(Debug, Clone, Copy)]
pub struct SharedFitInputs {
    pub f_hat: f64,
    pub p_f: f64,
    pub p_b: f64,
    pub length: f64,
}

impl SharedFitInputs {
    /// Derive f_hat, P_f, P_b from a span description.
    pub fn from_span(span: &crate::plan::SpanConfig) -> Self {
        let pumps = span.pumps.pumps();
        let f_hat = if pumps.is_empty() {
            0.0
        } else {
            pumps.iter().map(|p| p.frequency).sum::<f64>() / pumps.len() as f64
        };
        let p_f = span.channels.total_power() + span.pumps.forward().map(|p| p.boundary_power).sum::<f64>();
        let p_b = span.pumps.backward().map(|p| p.boundary_power).sum::<f64>();
        Self { f_hat, p_f, p_b, length: span.fiber.length }
    }
}

// Bounded parameterisation: x = mid + half * tanh(u) keeps LM unconstrained
// while every physical coefficient stays in its box.
#[derive(Clone, Copy)]
struct Bound {
    mid: f64,
    half: f64,
}

impl Bound {
    fn new(lo: f64, hi: f64) -> Self {
        Self { mid: 0.5 * (lo + hi), half: 0.5 * (hi - lo) }
    }

    fn to_x(&self, u: f64) -> f64 {
        self.mid + self.half * u.tanh()
    }

    fn to_u(&self, x: f64) -> f64 {
        let t = ((x - self.mid) / self.half).clamp(-0.999, 0.999);
        t.atanh()
    }
}

struct FitProblem<'a> {
    z: &'a [f64],
    rho_db: Vec<f64>,
    weight: Vec<f64>,
    f_off: f64,
    shared: SharedFitInputs,
    bounds: Vec<Bound>, // ln(alpha), ln(alpha_f), ln(alpha_b), c_f, c_b
    n_params: usize,
    opts: FitOptions,
}

impl FitProblem<'_> {
    fn coefficients(&self, u: &[f64]) -> ChannelCoefficients {
        ChannelCoefficients {
            alpha: self.bounds[0].to_x(u[0]).exp(),
            alpha_f: self.bounds[1].to_x(u[1]).exp(),
            alpha_b: self.bounds[2].to_x(u[2]).exp(),
            c_f: self.bounds[3].to_x(u[3]),
            c_b: if self.n_params > 4 { self.bounds[4].to_x(u[4]) } else { 0.0 },
        }
    }

    fn residuals(&self, u: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let c = self.coefficients(u);
        for (&z, (&db, &w)) in self.z.iter().zip(self.rho_db.iter().zip(&self.weight)) {
            let rho = eval_rho(&c, self.f_off, 0.0, self.shared.p_f, self.shared.p_b, self.shared.length, z)
                .max(1e-30);
            out.push(w * (10.0 * rho.log10() - db));
        }
        if self.opts.hinge_weight > 0.0 && self.n_params > 4 {
            let gap = (c.alpha - c.alpha_b).abs() * self.shared.length;
            out.push(self.opts.hinge_weight * (1.0 - gap / self.opts.hinge_gap).max(0.0));
        } else {
            out.push(0.0);
        }
    }
}

/// Fit one channel's coefficients to its normalised ODE profile.
///
/// `alpha_init` seeds (and centres the box of) the base decay rate;
/// callers use the attenuation curve at the channel frequency. `c_init`
/// seeds both gain slopes; callers use the triangular-approximation slope
/// of the Raman gain curve.
pub fn fit_channel(
    z_grid: &[f64],
    rho_num: &[f64],
    f_i: f64,
    shared: &SharedFitInputs,
    alpha_init: f64,
    c_init: f64,
    opts: &FitOptions,
) -> Result<(ChannelCoefficients, FitDiagnostics)> {
    if rho_num.iter().all(|&r| r <= 0.0) {
        return Err(Error::invariant("degenerate profile: no positive samples"));
    }
    let peak = rho_num.iter().cloned().fold(0.0f64, f64::max);
    let mut zs = Vec::with_capacity(z_grid.len());
    let mut db = Vec::with_capacity(z_grid.len());
    let mut wt = Vec::with_capacity(z_grid.len());
    for (&z, &r) in z_grid.iter().zip(rho_num) {
        if r > 1e-15 {
            zs.push(z);
            db.push(10.0 * r.log10());
            wt.push(r / peak);
        }
    }

    let fit_bw = shared.p_b > 0.0;
    let n_params = if fit_bw { 5 } else { 4 };
    let bounds = vec![
        Bound::new((alpha_init / opts.alpha_band).ln(), (alpha_init * opts.alpha_band).ln()),
        Bound::new(opts.alpha_fb_lo.ln(), opts.alpha_fb_hi.ln()),
        Bound::new(opts.alpha_fb_lo.ln(), opts.alpha_fb_hi.ln()),
        Bound::new(-opts.c_bound, opts.c_bound),
        Bound::new(-opts.c_bound, opts.c_bound),
    ];
    let problem = FitProblem {
        z: &zs,
        rho_db: db,
        weight: wt,
        f_off: f_i - shared.f_hat,
        shared: SharedFitInputs { f_hat: 0.0, ..*shared },
        bounds: bounds.clone(),
        n_params,
        opts: *opts,
    };

    let mut u = vec![
        bounds[0].to_u(alpha_init.ln()),
        bounds[1].to_u(6.0e-5f64.ln()),
        bounds[2].to_u(1.5e-4f64.ln()),
        bounds[3].to_u(c_init),
        bounds[4].to_u(c_init),
    ];
    u.truncate(n_params);

    let (iterations, converged) = levenberg_marquardt(&problem, &mut u, opts);
    let coeffs = problem.coefficients(&u);

    // diagnostics on the full grid
    let mut wsum = 0.0;
    let mut wres = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut int_fit = 0.0;
    let mut int_num = 0.0;
    let rho_fit_at = |z: f64| -> f64 {
        eval_rho(&coeffs, f_i, shared.f_hat, shared.p_f, shared.p_b, shared.length, z).max(1e-30)
    };
    for (j, (&z, &r)) in z_grid.iter().zip(rho_num).enumerate() {
        let rho_fit = rho_fit_at(z);
        if j + 1 < z_grid.len() {
            let dz = z_grid[j + 1] - z;
            int_fit += 0.5 * (rho_fit + rho_fit_at(z_grid[j + 1])) * dz;
            int_num += 0.5 * (r + rho_num[j + 1]) * dz;
        }
        if r > 1e-15 {
            let res = 10.0 * rho_fit.log10() - 10.0 * r.log10();
            wsum += r;
            wres += r * res * res;
            max_abs = max_abs.max(res.abs());
        }
    }
    let diag = FitDiagnostics {
        weighted_rms_db: (wres / wsum).sqrt(),
        max_abs_db: max_abs,
        eff_len_rel_err: (int_fit - int_num).abs() / int_num,
        iterations,
        converged,
    };
    Ok((coeffs, diag))
}

fn levenberg_marquardt(problem: &FitProblem, u: &mut Vec<f64>, opts: &FitOptions) -> (usize, bool) {
    let n = u.len();
    let mut r = Vec::new();
    problem.residuals(u, &mut r);
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = 1e-3;
    let mut jac = vec![0.0; r.len() * n];
    let mut r_pert = Vec::new();

    for iter in 1..=opts.max_iterations {
        // forward-difference Jacobian
        for j in 0..n {
            let saved = u[j];
            u[j] += opts.fd_step;
            problem.residuals(u, &mut r_pert);
            u[j] = saved;
            for (i, (rp, r0)) in r_pert.iter().zip(&r).enumerate() {
                jac[i * n + j] = (rp - r0) / opts.fd_step;
            }
        }
        // normal equations with Marquardt scaling
        let mut jtj = vec![0.0; n * n];
        let mut jtr = vec![0.0; n];
        for i in 0..r.len() {
            for a in 0..n {
                let ja = jac[i * n + a];
                jtr[a] += ja * r[i];
                for b in a..n {
                    jtj[a * n + b] += ja * jac[i * n + b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[a * n + b] = jtj[b * n + a];
            }
        }
        let max_diag = (0..n).map(|a| jtj[a * n + a]).fold(0.0f64, f64::max).max(1e-300);

        let mut accepted = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[d * n + d] += lambda * jtj[d * n + d].max(1e-12 * max_diag);
            }
            let neg_g: Vec<f64> = jtr.iter().map(|g| -g).collect();
            let Some(step) = crate::solver::solve_linear(&mut a, &neg_g, n) else {
                lambda *= 10.0;
                continue;
            };
            let u_new: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + b).collect();
            problem.residuals(&u_new, &mut r_pert);
            let cost_new: f64 = r_pert.iter().map(|v| v * v).sum();
            if cost_new < cost {
                let rel_decrease = (cost - cost_new) / cost.max(1e-300);
                let step_norm: f64 = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                *u = u_new;
                std::mem::swap(&mut r, &mut r_pert);
                cost = cost_new;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if step_norm < opts.step_tol || rel_decrease < opts.cost_tol {
                    return (iter, true);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction at any damping: as converged as finite
            // differences can tell
            return (iter, true);
        }
    }
    (opts.max_iterations, false)
}

/// Fit every channel of a solved span. Channels run in parallel; results
/// are deterministic and ordered by channel index.
pub fn fit_all(
    profile: &PowerProfile,
    plan: &LinkPlan,
    span_index: usize,
    opts: &FitOptions,
) -> Result<ProfileFit> {
    let span = &plan.spans[span_index];
    let shared = SharedFitInputs::from_span(span);
    let c_init = span.fiber.raman_gain.triangular_slope(15e12);
    let channels = span.channels.channels();

    let rows: Vec<(usize, usize)> = profile
        .channel_rows()
        .map(|(row, e)| {
            let crate::solver::EntityKind::Channel(i) = e.kind else { unreachable!() };
            (row, i)
        })
        .collect();

    let fitted: Result<Vec<(usize, ChannelCoefficients, FitDiagnostics)>> = rows
        .par_iter()
        .map(|&(row, i)| {
            let rho = profile.normalized_row(row, i)?;
            let alpha_init = span.fiber.attenuation.alpha(channels[i].frequency)?;
            let (c, d) = fit_channel(
                &profile.z_grid,
                &rho,
                channels[i].frequency,
                &shared,
                alpha_init,
                c_init,
                opts,
            )
            .map_err(|e| Error::DegenerateFit { index: i, reason: e.to_string() })?;
            Ok((i, c, d))
        })
        .collect();
    let mut fitted = fitted?;
    fitted.sort_by_key(|(i, _, _)| *i);

    Ok(ProfileFit {
        channels: fitted.iter().map(|(_, c, _)| *c).collect(),
        diagnostics: fitted.iter().map(|(_, _, d)| *d).collect(),
        frequencies: channels.iter().map(|c| c.frequency).collect(),
        f_hat: shared.f_hat,
        p_f: shared.p_f,
        p_b: shared.p_b,
        length: shared.length,
    })
}
