//! Numerical solution of the coupled Raman power-evolution equations.
//!
//! Every co-propagating entity (channel or FW pump) obeys
//!
//! dP_i/dz = P_i * [ sum_{f_k > f_i} g_r(df) P_k
//!                 - sum_{f_k < f_i} (f_i/f_k) g_r(df) P_k ] - alpha_i P_i
//!
//! with the photon-conserving donor factor f_i/f_k (the donor loses more
//! power than the recipient gains; the difference goes to phonons). A
//! counter-propagating pump carries the opposite sign on its spatial
//! derivative. Forward problems integrate with an embedded Dormand-Prince
//! 4(5) pair; the backward-pump boundary problem is solved by shooting on
//! the unknown z=0 pump powers with a log-domain Newton iteration.

use crate::error::Error;
use crate::plan::{PumpDirection, SpanConfig};
use crate::Result;

/// What a row of the coupled state refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    /// Index into the span's channel list.
    Channel(usize),
    /// Index into the span's pump list.
    FwPump(usize),
    BwPump(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct EntityInfo {
    pub frequency: f64,
    pub kind: EntityKind,
}

impl EntityInfo {
    pub fn is_channel(&self) -> bool {
        matches!(self.kind, EntityKind::Channel(_))
    }

    pub fn is_bw_pump(&self) -> bool {
        matches!(self.kind, EntityKind::BwPump(_))
    }
}

/// Integration and shooting controls.
#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    /// Relative local-error tolerance.
    pub rtol: f64,
    /// Absolute local-error tolerance [W].
    pub atol: f64,
    /// Initial step [m].
    pub initial_step: f64,
    /// Step cap [m]; keeps dense-output interpolation below tolerance.
    pub max_step: f64,
    /// Number of points in the uniform output grid over [0, L].
    pub output_points: usize,
    /// Relative boundary mismatch below which the shooting stops.
    pub bvp_tol: f64,
    /// Newton iteration cap for the shooting loop.
    pub bvp_max_iterations: usize,
    /// Backtracking shrink factor for rejected Newton steps.
    pub bvp_damping: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-15,
            initial_step: 100.0,
            max_step: 400.0,
            output_points: 1001,
            bvp_tol: 1e-6,
            bvp_max_iterations: 40,
            bvp_damping: 0.5,
        }
    }
}

impl SolverSettings {
    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.bvp_tol > 0.0) {
            return Err(Error::invariant("solver tolerances must be positive"));
        }
        if self.bvp_max_iterations < 1 {
            return Err(Error::invariant("bvp_max_iterations must be at least 1"));
        }
        if self.output_points < 2 {
            return Err(Error::invariant("output grid needs at least 2 points"));
        }
        Ok(())
    }
}

/// Power of every entity on a shared z grid.
#[derive(Debug, Clone)]
pub struct PowerProfile {
    /// Strictly increasing, starts at 0, ends at the span length [m].
    pub z_grid: Vec<f64>,
    /// powers[entity][z_index] in W.
    pub powers: Vec<Vec<f64>>,
    pub entities: Vec<EntityInfo>,
    /// True if any entity had to be clamped up to zero during integration.
    pub clamped: bool,
    /// Present when the profile came out of a shooting solve.
    pub bvp: Option<BvpReport>,
}

#[derive(Debug, Clone)]
pub struct BvpReport {
    pub iterations: usize,
    /// Worst relative boundary mismatch at convergence.
    pub worst_mismatch: f64,
    /// Converged z=0 powers of the BW pumps [W], in pump-list order.
    pub bw_start_powers: Vec<f64>,
}

impl PowerProfile {
    /// rho(z) = P(z, f_i) / P(0, f_i) for the given channel, sampled on
    /// the profile grid. rho(0) is exactly 1.
    pub fn normalized_channel(&self, channel_index: usize) -> Result<Vec<f64>> {
        let row = self
            .entities
            .iter()
            .position(|e| e.kind == EntityKind::Channel(channel_index))
            .ok_or_else(|| Error::invariant(format!("no channel with index {channel_index}")))?;
        self.normalized_row(row, channel_index)
    }

    /// Normalised profile of an arbitrary entity row.
    pub fn normalized_row(&self, row: usize, index_for_error: usize) -> Result<Vec<f64>> {
        let p0 = self.powers[row][0];
        if !(p0 > 0.0) {
            return Err(Error::ZeroLaunchPower { index: index_for_error });
        }
        let mut rho: Vec<f64> = self.powers[row].iter().map(|p| (p / p0).max(0.0)).collect();
        rho[0] = 1.0;
        Ok(rho)
    }

    pub fn channel_rows(&self) -> impl Iterator<Item = (usize, &EntityInfo)> {
        self.entities.iter().enumerate().filter(|(_, e)| e.is_channel())
    }
}

/// Precomputed pairwise coupling for one span.
///
/// coupling[i*n + k] multiplies P_i * P_k in dP_i/dz.
pub struct CoupledSystem {
    pub entities: Vec<EntityInfo>,
    coupling: Vec<f64>,
    alpha: Vec<f64>,
    sign: Vec<f64>,
    pub length: f64,
}

impl CoupledSystem {
    /// Assemble entities (channels first, then pumps in list order) and
    /// precompute all pairwise gains.
    pub fn new(span: &SpanConfig) -> Result<Self> {
        let mut entities: Vec<EntityInfo> = span
            .channels
            .channels()
            .iter()
            .enumerate()
            .map(|(i, c)| EntityInfo { frequency: c.frequency, kind: EntityKind::Channel(i) })
            .collect();
        for (i, p) in span.pumps.pumps().iter().enumerate() {
            let kind = match p.direction {
                PumpDirection::Fw => EntityKind::FwPump(i),
                PumpDirection::Bw => EntityKind::BwPump(i),
            };
            entities.push(EntityInfo { frequency: p.frequency, kind });
        }
        let n = entities.len();
        let mut coupling = vec![0.0; n * n];
        let mut alpha = vec![0.0; n];
        let mut sign = vec![1.0; n];
        for i in 0..n {
            alpha[i] = span.fiber.attenuation.alpha(entities[i].frequency)?;
            if entities[i].is_bw_pump() {
                sign[i] = -1.0;
            }
            for k in 0..n {
                if k == i {
                    continue;
                }
                let (fi, fk) = (entities[i].frequency, entities[k].frequency);
                let g = span.fiber.raman_gain.gain((fk - fi).abs())?;
                coupling[i * n + k] = if fk > fi { g } else { -(fi / fk) * g };
            }
        }
        Ok(Self { entities, coupling, alpha, sign, length: span.fiber.length })
    }

    pub fn dim(&self) -> usize {
        self.entities.len()
    }

    /// dP/dz for the full coupled state. Negative inputs are treated as
    /// zero; Raman transfer cannot act on negative power.
    pub fn rhs(&self, powers: &[f64], out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(powers.len(), n);
        for i in 0..n {
            let pi = powers[i].max(0.0);
            let row = &self.coupling[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for k in 0..n {
                acc += row[k] * powers[k].max(0.0);
            }
            out[i] = self.sign[i] * (pi * acc - self.alpha[i] * pi);
        }
    }
}

/// Spec-shaped convenience wrapper: evaluate dP/dz once.
pub fn rhs(span: &SpanConfig, powers: &[f64]) -> Result<Vec<f64>> {
    let sys = CoupledSystem::new(span)?;
    if powers.len() != sys.dim() {
        return Err(Error::invariant(format!(
            "state has {} entries, system has {} entities",
            powers.len(),
            sys.dim()
        )));
    }
    let mut out = vec![0.0; sys.dim()];
    sys.rhs(powers, &mut out);
    Ok(out)
}

// Dormand-Prince 4(5) coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct StepNode {
    z: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
}

enum Integration {
    Done(Vec<StepNode>),
    /// A blow-up guard tripped before reaching z = L.
    Aborted,
}

/// Integrate dP/dz over [0, L] with accepted steps recorded for dense output.
fn integrate(
    sys: &CoupledSystem,
    y0: &[f64],
    settings: &SolverSettings,
    abort_above: Option<f64>,
) -> Result<Integration> {
    let n = sys.dim();
    let l = sys.length;
    let mut z = 0.0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    sys.rhs(&y, &mut k[0]);
    let mut nodes = vec![StepNode { z, y: y.clone(), dy: k[0].clone() }];
    let mut h = settings.initial_step.min(settings.max_step).min(l);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    while z < l {
        if h < 1e-9 * l {
            return Err(Error::StepUnderflow { z_m: z });
        }
        h = h.min(l - z);
        // six derivative stages
        for s in 0..6 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += h * a * kj[i];
                    }
                }
                ytmp[i] = acc;
            }
            let (head, tail) = k.split_at_mut(s + 1);
            let _ = head;
            sys.rhs(&ytmp, &mut tail[0]);
        }
        // 5th-order solution (stage 7 derivative doubles as FSAL)
        for i in 0..n {
            let mut acc = y[i];
            for (j, kj) in k.iter().enumerate().take(6) {
                if B5[j] != 0.0 {
                    acc += h * B5[j] * kj[i];
                }
            }
            ynew[i] = acc;
        }
        {
            let (head, tail) = k.split_at_mut(6);
            let _ = head;
            sys.rhs(&ynew, &mut tail[0]);
        }
        // embedded error estimate
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                let d = B5[j] - B4[j];
                if d != 0.0 {
                    e += h * d * kj[i];
                }
            }
            let scale = settings.atol + settings.rtol * y[i].abs().max(ynew[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / n as f64).sqrt();

        if err <= 1.0 {
            z += h;
            std::mem::swap(&mut y, &mut ynew);
            let k6 = k[6].clone();
            k[0].copy_from_slice(&k6);
            nodes.push(StepNode { z, y: y.clone(), dy: k6 });
            if let Some(cap) = abort_above {
                let worst = y
                    .iter()
                    .zip(&sys.entities)
                    .filter(|(_, e)| e.is_bw_pump())
                    .map(|(p, _)| *p)
                    .fold(0.0f64, f64::max);
                if worst > cap {
                    return Ok(Integration::Aborted);
                }
            }
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h = (h * factor.clamp(0.2, 5.0)).min(settings.max_step);
    }
    Ok(Integration::Done(nodes))
}

/// Cubic-Hermite sample of the accepted-step sequence onto a uniform grid.
fn dense_output(nodes: &[StepNode], l: f64, points: usize) -> (Vec<f64>, Vec<Vec<f64>>, bool) {
    let n = nodes[0].y.len();
    let z_grid: Vec<f64> = (0..points).map(|i| l * i as f64 / (points - 1) as f64).collect();
    let mut powers = vec![vec![0.0; points]; n];
    let mut clamped = false;
    let mut seg = 0;
    for (gi, &zq) in z_grid.iter().enumerate() {
        while seg + 2 < nodes.len() && nodes[seg + 1].z < zq {
            seg += 1;
        }
        let (n0, n1) = (&nodes[seg], &nodes[seg + 1]);
        let h = n1.z - n0.z;
        let t = if h > 0.0 { ((zq - n0.z) / h).clamp(0.0, 1.0) } else { 0.0 };
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        for i in 0..n {
            let v = h00 * n0.y[i] + h10 * h * n0.dy[i] + h01 * n1.y[i] + h11 * h * n1.dy[i];
            if v < 0.0 {
                clamped = true;
            }
            powers[i][gi] = v.max(0.0);
        }
    }
    (z_grid, powers, clamped)
}

fn initial_state(span: &SpanConfig, sys: &CoupledSystem, bw_start: &[f64]) -> Vec<f64> {
    let mut y0 = Vec::with_capacity(sys.dim());
    for e in &sys.entities {
        let p = match e.kind {
            EntityKind::Channel(i) => span.channels.channels()[i].power,
            EntityKind::FwPump(i) => span.pumps.pumps()[i].boundary_power,
            EntityKind::BwPump(i) => {
                let pos = bw_pump_order(span).iter().position(|&j| j == i).unwrap();
                bw_start[pos]
            }
        };
        y0.push(p);
    }
    y0
}

/// Pump-list indices of the BW pumps, in list order.
fn bw_pump_order(span: &SpanConfig) -> Vec<usize> {
    span.pumps
        .pumps()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.direction == PumpDirection::Bw)
        .map(|(i, _)| i)
        .collect()
}

/// Forward-only solve: every boundary condition sits at z = 0.
pub fn solve_forward(span: &SpanConfig, settings: &SolverSettings) -> Result<PowerProfile> {
    settings.validate()?;
    if span.pumps.has_backward() {
        return Err(Error::invariant(
            "solve_forward requires a pump set without BW pumps; use solve_bvp",
        ));
    }
    let sys = CoupledSystem::new(span)?;
    let y0 = initial_state(span, &sys, &[]);
    match integrate(&sys, &y0, settings, None)? {
        Integration::Done(nodes) => {
            let (z_grid, powers, clamped) = dense_output(&nodes, sys.length, settings.output_points);
            Ok(PowerProfile { z_grid, powers, entities: sys.entities, clamped, bvp: None })
        }
        Integration::Aborted => unreachable!("no abort guard installed"),
    }
}

/// Two-point boundary solve by shooting on the BW pumps' z=0 powers.
///
/// Newton iteration on r(ln p0) = ln P_bw(L) - ln P_prescribed with a
/// finite-difference Jacobian and backtracking; guesses that blow the
/// integration up are scaled down and retried.
pub fn solve_bvp(span: &SpanConfig, settings: &SolverSettings) -> Result<PowerProfile> {
    settings.validate()?;
    let bw_idx = bw_pump_order(span);
    if bw_idx.is_empty() {
        return Err(Error::invariant("solve_bvp requires at least one BW pump"));
    }
    let sys = CoupledSystem::new(span)?;
    let nb = bw_idx.len();
    let pumps = span.pumps.pumps();
    let target: Vec<f64> = bw_idx.iter().map(|&i| pumps[i].boundary_power).collect();
    let ln_target: Vec<f64> = target.iter().map(|p| p.ln()).collect();
    let cap = 50.0 * target.iter().cloned().fold(0.0f64, f64::max);

    // loss-only seed, well below the expected answer so growth stays tame
    let mut ln_guess: Vec<f64> = bw_idx
        .iter()
        .map(|&i| {
            let a = span.fiber.attenuation.alpha(pumps[i].frequency).unwrap_or(5e-5);
            (pumps[i].boundary_power * (-a * sys.length).exp() * 0.02).ln()
        })
        .collect();

    let shoot = |ln_p0: &[f64]| -> Result<Option<Vec<f64>>> {
        let p0: Vec<f64> = ln_p0.iter().map(|v| v.exp()).collect();
        let y0 = initial_state(span, &sys, &p0);
        match integrate(&sys, &y0, settings, Some(cap))? {
            Integration::Done(nodes) => {
                let last = &nodes.last().unwrap().y;
                let ends: Vec<f64> = sys
                    .entities
                    .iter()
                    .zip(last)
                    .filter(|(e, _)| e.is_bw_pump())
                    .map(|(_, &p)| p.max(1e-300).ln())
                    .collect();
                Ok(Some(ends))
            }
            Integration::Aborted => Ok(None),
        }
    };

    let mut got = loop {
        match shoot(&ln_guess)? {
            Some(v) => break v,
            None => {
                for g in ln_guess.iter_mut() {
                    *g += (0.3f64).ln();
                }
            }
        }
    };

    let mismatch = |got: &[f64]| -> f64 {
        got.iter()
            .zip(&ln_target)
            .map(|(g, t)| ((g - t).exp() - 1.0).abs())
            .fold(0.0, f64::max)
    };

    let mut iterations = 0;
    let mut worst = mismatch(&got);
    while worst > settings.bvp_tol && iterations < settings.bvp_max_iterations {
        iterations += 1;
        // finite-difference Jacobian in log domain
        let mut jac = vec![0.0; nb * nb];
        let fd = 1e-6;
        for j in 0..nb {
            let mut lp = ln_guess.clone();
            lp[j] += fd;
            match shoot(&lp)? {
                Some(g2) => {
                    for i in 0..nb {
                        jac[i * nb + j] = (g2[i] - got[i]) / fd;
                    }
                }
                None => {
                    jac[j * nb + j] = 1.0;
                }
            }
        }
        let resid: Vec<f64> = got.iter().zip(&ln_target).map(|(g, t)| g - t).collect();
        let step = match solve_linear(&mut jac.clone(), &resid, nb) {
            Some(s) => s,
            None => resid.clone(), // singular Jacobian: fall back to identity
        };
        let norm0: f64 = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-3 {
            let cand: Vec<f64> = ln_guess
                .iter()
                .zip(&step)
                .map(|(g, s)| g - (lambda * s).clamp(-3.0, 3.0))
                .collect();
            if let Some(g2) = shoot(&cand)? {
                let norm1: f64 = g2
                    .iter()
                    .zip(&ln_target)
                    .map(|(g, t)| (g - t) * (g - t))
                    .sum::<f64>()
                    .sqrt();
                if norm1 < norm0 {
                    ln_guess = cand;
                    got = g2;
                    accepted = true;
                    break;
                }
            }
            lambda *= settings.bvp_damping;
        }
        if !accepted {
            // crude fallback: small damped step, retreat on blow-up
            let cand: Vec<f64> = ln_guess
                .iter()
                .zip(&step)
                .map(|(g, s)| g - (0.05 * s).clamp(-0.5, 0.5))
                .collect();
            match shoot(&cand)? {
                Some(g2) => {
                    ln_guess = cand;
                    got = g2;
                }
                None => {
                    for g in ln_guess.iter_mut() {
                        *g += (0.5f64).ln();
                    }
                    got = shoot(&ln_guess)?.ok_or(Error::BvpDiverged {
                        iterations,
                        worst_mismatch: worst,
                    })?;
                }
            }
        }
        worst = mismatch(&got);
    }
    if worst > settings.bvp_tol {
        return Err(Error::BvpDiverged { iterations, worst_mismatch: worst });
    }

    // final dense solve from the converged start values
    let p0: Vec<f64> = ln_guess.iter().map(|v| v.exp()).collect();
    let y0 = initial_state(span, &sys, &p0);
    match integrate(&sys, &y0, settings, None)? {
        Integration::Done(nodes) => {
            let (z_grid, powers, clamped) = dense_output(&nodes, sys.length, settings.output_points);
            Ok(PowerProfile {
                z_grid,
                powers,
                entities: sys.entities,
                clamped,
                bvp: Some(BvpReport { iterations, worst_mismatch: worst, bw_start_powers: p0 }),
            })
        }
        Integration::Aborted => unreachable!("no abort guard installed"),
    }
}

/// Solve a span with whatever boundary structure it has.
pub fn solve_span(span: &SpanConfig, settings: &SolverSettings) -> Result<PowerProfile> {
    if span.pumps.has_backward() {
        solve_bvp(span, settings)
    } else {
        solve_forward(span, settings)
    }
}

/// Gaussian elimination with partial pivoting; returns None when singular.
pub(crate) fn solve_linear(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            x.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for c in col + 1..n {
            acc -= a[col * n + c] * x[c];
        }
        x[col] = acc / a[col * n + col];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{AttenuationCurve, RamanGainCurve};
    use crate::plan::{Channel, ChannelPlan, FiberSpec, Pump, PumpSet};
    use crate::units::DispersionDs;
    use approx::assert_relative_eq;

    fn flat_attenuation(alpha: f64) -> AttenuationCurve {
        AttenuationCurve::new(vec![(150e12, alpha), (250e12, alpha)]).unwrap()
    }

    fn zero_gain() -> RamanGainCurve {
        RamanGainCurve::new(vec![(0.0, 0.0), (40e12, 0.0)]).unwrap()
    }

    /// Linear gain g = slope * df, forced to satisfy curve invariants.
    fn linear_gain(slope_per_hz: f64) -> RamanGainCurve {
        let samples: Vec<(f64, f64)> = (0..=40)
            .map(|i| {
                let df = i as f64 * 1e12;
                (df, slope_per_hz * df)
            })
            .collect();
        RamanGainCurve::new(samples).unwrap()
    }

    fn fiber(att: AttenuationCurve, rg: RamanGainCurve, l: f64) -> FiberSpec {
        FiberSpec::new(att, rg, 1.16e-3, DispersionDs { d: 16.5, s: 0.09, lambda_ref_m: 1550e-9 }, l).unwrap()
    }

    fn span(fiber: FiberSpec, channels: Vec<Channel>, pumps: Vec<Pump>) -> SpanConfig {
        let channels = ChannelPlan::new(channels).unwrap();
        let pumps = PumpSet::new(pumps, &channels).unwrap();
        SpanConfig { fiber, channels, pumps }
    }

    fn ch(f: f64, p: f64) -> Channel {
        Channel { frequency: f, bandwidth: 96e9, power: p }
    }

    #[test]
    fn rhs_loss_only_single_channel() {
        // alpha = 0.046/km, P = 1 mW -> dP/dz = -4.6e-8 W/m
        let s = span(fiber(flat_attenuation(4.6e-5), zero_gain(), 80e3), vec![ch(193e12, 1e-3)], vec![]);
        let d = rhs(&s, &[1e-3]).unwrap();
        assert_relative_eq!(d[0], -4.6e-8, max_relative = 1e-12);
    }

    #[test]
    fn rhs_two_channel_photon_factors() {
        // 13 THz separation, equal powers, no loss: the low channel gains
        // g*P^2, the high channel loses (f_high/f_low)*g*P^2 so that the
        // photon flux P/f is exactly conserved.
        let g = 0.4e-3;
        let slope = g / 13e12;
        let f_lo = 187e12;
        let f_hi = 200e12;
        let s = span(
            fiber(flat_attenuation(1e-30), linear_gain(slope), 80e3),
            vec![ch(f_lo, 1e-3), ch(f_hi, 1e-3)],
            vec![],
        );
        let d = rhs(&s, &[1e-3, 1e-3]).unwrap();
        let g_at = slope * 13e12;
        assert_relative_eq!(d[0], g_at * 1e-6, max_relative = 1e-9);
        assert_relative_eq!(d[1], -(f_hi / f_lo) * g_at * 1e-6, max_relative = 1e-9);
        // photon flux balance
        assert_relative_eq!(d[0] / f_lo + d[1] / f_hi, 0.0, epsilon = 1e-30);
    }

    #[test]
    fn rhs_zero_gain_reduces_to_loss() {
        let s = span(
            fiber(flat_attenuation(4.6e-5), zero_gain(), 80e3),
            vec![ch(188e12, 2e-3), ch(196e12, 1e-3)],
            vec![Pump { frequency: 210e12, direction: PumpDirection::Fw, boundary_power: 0.1 }],
        );
        let d = rhs(&s, &[2e-3, 1e-3, 0.1]).unwrap();
        assert_relative_eq!(d[0], -4.6e-5 * 2e-3, max_relative = 1e-12);
        assert_relative_eq!(d[1], -4.6e-5 * 1e-3, max_relative = 1e-12);
        assert_relative_eq!(d[2], -4.6e-5 * 0.1, max_relative = 1e-12);
    }

    #[test]
    fn rhs_frequency_outside_curve_is_error() {
        let s = span(fiber(flat_attenuation(4.6e-5), zero_gain(), 80e3), vec![ch(193e12, 1e-3)], vec![]);
        let mut bad = s.clone();
        bad.fiber.attenuation = AttenuationCurve::new(vec![(194e12, 4e-5), (195e12, 4e-5)]).unwrap();
        assert!(matches!(rhs(&bad, &[1e-3]), Err(Error::CurveDomain { .. })));
    }

    #[test]
    fn forward_loss_only_matches_exponential() {
        let alpha = 4.6e-5;
        let s = span(fiber(flat_attenuation(alpha), zero_gain(), 80e3), vec![ch(193e12, 1e-3)], vec![]);
        let prof = solve_forward(&s, &SolverSettings::default()).unwrap();
        for (i, &z) in prof.z_grid.iter().enumerate() {
            let expect = 1e-3 * (-alpha * z).exp();
            assert_relative_eq!(prof.powers[0][i], expect, max_relative = 1e-7);
        }
        assert!(!prof.clamped);
    }

    #[test]
    fn forward_rejects_bw_pumps() {
        let s = span(
            fiber(flat_attenuation(4.6e-5), zero_gain(), 80e3),
            vec![ch(193e12, 1e-3)],
            vec![Pump { frequency: 210e12, direction: PumpDirection::Bw, boundary_power: 0.1 }],
        );
        assert!(solve_forward(&s, &SolverSettings::default()).is_err());
    }

    #[test]
    fn photon_number_conserved_without_loss() {
        // three coupled channels, no attenuation: sum of P/f is conserved
        let slope = 0.4e-3 / 13e12;
        let s = span(
            fiber(flat_attenuation(1e-30), linear_gain(slope), 80e3),
            vec![ch(188e12, 1.5e-3), ch(193e12, 1e-3), ch(199e12, 2e-3)],
            vec![],
        );
        let prof = solve_forward(&s, &SolverSettings::default()).unwrap();
        let photon = |col: usize| -> f64 {
            prof.powers.iter().zip(&prof.entities).map(|(p, e)| p[col] / e.frequency).sum()
        };
        let start = photon(0);
        for col in [250, 500, 750, 1000] {
            assert_relative_eq!(photon(col), start, max_relative = 1e-6);
        }
    }

    #[test]
    fn bvp_single_pump_pure_loss() {
        // lone BW pump with zero gain: P(0) = P(L) e^{-alpha L}
        let alpha = 5.5e-5;
        let s = span(
            fiber(flat_attenuation(alpha), zero_gain(), 80e3),
            vec![ch(193e12, 1e-9)], // negligible probe channel
            vec![Pump { frequency: 212e12, direction: PumpDirection::Bw, boundary_power: 0.5 }],
        );
        let prof = solve_bvp(&s, &SolverSettings::default()).unwrap();
        let report = prof.bvp.as_ref().unwrap();
        let expect = 0.5 * (-alpha * 80e3f64).exp();
        assert_relative_eq!(report.bw_start_powers[0], expect, max_relative = 1e-5);
        // boundary met
        let row = prof.entities.iter().position(|e| e.is_bw_pump()).unwrap();
        assert_relative_eq!(prof.powers[row].last().unwrap(), &0.5, max_relative = 1e-5);
    }

    #[test]
    fn normalized_profile_starts_at_one() {
        let s = span(fiber(flat_attenuation(4.6e-5), zero_gain(), 80e3), vec![ch(193e12, 1e-3)], vec![]);
        let prof = solve_forward(&s, &SolverSettings::default()).unwrap();
        let rho = prof.normalized_channel(0).unwrap();
        assert_eq!(rho[0], 1.0);
        assert!(rho.iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn grid_refinement_stays_within_coarse_tolerance() {
        let slope = 0.4e-3 / 13e12;
        let s = span(
            fiber(flat_attenuation(4.6e-5), linear_gain(slope), 80e3),
            vec![ch(188e12, 1.5e-3), ch(193e12, 1e-3), ch(199e12, 2e-3)],
            vec![],
        );
        let coarse = SolverSettings { rtol: 1e-7, atol: 1e-14, ..Default::default() };
        let fine = SolverSettings { rtol: 5e-8, atol: 5e-15, ..Default::default() };
        let p1 = solve_forward(&s, &coarse).unwrap();
        let p2 = solve_forward(&s, &fine).unwrap();
        for (r1, r2) in p1.powers.iter().zip(&p2.powers) {
            let (e1, e2) = (*r1.last().unwrap(), *r2.last().unwrap());
            assert!((e1 - e2).abs() / e2 < 1e-7, "{e1} vs {e2}");
        }
    }
}
