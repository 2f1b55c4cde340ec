use serde::{Deserialize, Serialize};

use super::{CheckResult, Tolerances};
use crate::error::{Error, Result};
use crate::flow::{rhs_q, Sample, Trajectory};
use crate::graph::geometry_unchecked;
use crate::rescale::{log_theta, theta, RescaleContext};
use crate::sphere::Boundary;

fn first_sample(traj: &Trajectory) -> Result<&Sample> {
    traj.samples.first().ok_or_else(|| Error::Trajectory("no samples recorded".into()))
}

/// Model log-radius started from `c`.
fn model_log(t: f64, c: f64, ctx: &RescaleContext) -> f64 {
    log_theta(t, &RescaleContext { c, ..*ctx })
}

/// `inf phi(0) - tau <= phi - log Theta(t, inf phi(0))` and the mirror bound.
pub fn check_c0(traj: &Trajectory, tol: &Tolerances) -> Result<CheckResult> {
    let s0 = first_sample(traj)?;
    let (phi1, phi2) = (s0.u_min.ln(), s0.u_max.ln());
    let mut worst = (f64::INFINITY, 0.0);
    for s in &traj.samples {
        let lo = s.u_min.ln() - model_log(s.t, phi1, &traj.ctx);
        let hi = model_log(s.t, phi2, &traj.ctx) - s.u_max.ln();
        let m = lo.min(hi);
        if !(m >= worst.0) {
            worst = (m, s.t);
        }
    }
    let tau = tol.tau_h(&traj.grid);
    Ok(CheckResult::new("c0_sandwich", worst.0, tau)
        .at(worst.1, None)
        .details(format!("phi1 = {phi1:e}, phi2 = {phi2:e}, tau = {tau:e}")))
}

/// `min(m0, 1/n) <= phi_t Theta^alpha <= max(M0, 1/n)`.
pub fn check_phidot(traj: &Trajectory, tol: &Tolerances) -> Result<CheckResult> {
    let s0 = first_sample(traj)?;
    let inv_n = 1.0 / traj.grid.n_dim() as f64;
    let lo = s0.phidot_theta_min.min(inv_n);
    let hi = s0.phidot_theta_max.max(inv_n);
    let scale = lo.abs().max(hi.abs());
    let mut worst = (f64::INFINITY, 0.0);
    for s in &traj.samples {
        let m = ((s.phidot_theta_min - lo).min(hi - s.phidot_theta_max)) / scale;
        if !(m >= worst.0) {
            worst = (m, s.t);
        }
    }
    let tau = tol.tau_h(&traj.grid);
    Ok(CheckResult::new("phidot_bounds", worst.0, tau)
        .at(worst.1, None)
        .details(format!("band [{lo:e}, {hi:e}] (relative margin)")))
}

/// `sup |D phi|` never exceeds its initial value and does not grow between
/// samples by more than `tau_step`.
pub fn check_gradient_monotone(traj: &Trajectory, tol: &Tolerances) -> Result<CheckResult> {
    let g0 = first_sample(traj)?.sup_grad_phi;
    let tau_h = tol.tau_h(&traj.grid);
    let mut step = (f64::INFINITY, 0.0);
    let mut global = (f64::INFINITY, 0.0);
    for w in traj.samples.windows(2) {
        let m = w[0].sup_grad_phi - w[1].sup_grad_phi;
        if !(m >= step.0) {
            step = (m, w[1].t);
        }
    }
    for s in &traj.samples {
        let m = g0 - s.sup_grad_phi;
        if !(m >= global.0) {
            global = (m, s.t);
        }
    }
    if traj.samples.len() < 2 {
        step = (0.0, 0.0);
    }
    Ok(CheckResult::new("gradient_monotone", step.0, tol.tau_step)
        .at(step.1, None)
        .details(format!(
            "sup|Dphi(0)| = {g0:e}; worst growth over initial {:e} at t = {:e} (slack {tau_h:e})",
            -global.0, global.1
        ))
        .fail_if(!(global.0 >= -tau_h), "sup|Dphi| exceeds its initial value"))
}

/// Constants of the initial data that enter the curvature band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConstants {
    pub phi1: f64,
    pub phi2: f64,
    /// `min(inf phi_t(0) Theta(0)^alpha, 1/n)`.
    pub m1: f64,
    pub m2: f64,
    /// `e^{phi1 - c}` and `e^{phi2 - c}`: bounds of `u / Theta`.
    pub c1: f64,
    pub c2: f64,
    pub v_max: f64,
    /// Lower and upper bounds of `H Theta`.
    pub c3: f64,
    pub c4: f64,
}

impl InitialConstants {
    fn assemble(phi1: f64, phi2: f64, pt_min: f64, pt_max: f64, v_max: f64, ctx: &RescaleContext) -> Self {
        let inv_n = 1.0 / ctx.n_dim as f64;
        let m1 = pt_min.min(inv_n);
        let m2 = pt_max.max(inv_n);
        let c1 = (phi1 - ctx.c).exp();
        let c2 = (phi2 - ctx.c).exp();
        let a1 = ctx.alpha + 1.0;
        Self { phi1, phi2, m1, m2, c1, c2, v_max, c3: c2.powf(-a1) / m2, c4: v_max * c1.powf(-a1) / m1 }
    }
}

/// Constants from the first recorded sample.
pub fn derived_constants(traj: &Trajectory) -> Result<InitialConstants> {
    let s0 = first_sample(traj)?;
    let v_max = (1.0 + s0.sup_grad_phi * s0.sup_grad_phi).sqrt();
    Ok(InitialConstants::assemble(
        s0.u_min.ln(),
        s0.u_max.ln(),
        s0.phidot_theta_min,
        s0.phidot_theta_max,
        v_max,
        &traj.ctx,
    ))
}

/// Same constants from a direct pass over the initial snapshot.
pub fn brute_force_constants(traj: &Trajectory) -> Result<InitialConstants> {
    let snap = traj.snapshots.first().ok_or_else(|| Error::Trajectory("no snapshots recorded".into()))?;
    let grid = &traj.grid;
    let ctx = &traj.ctx;
    let u = snap.u.clone().with_boundary(Boundary::Neumann);
    let phi = u.map(f64::ln);
    let q = rhs_q(&phi, grid, ctx.alpha)?;
    let theta_alpha = theta(snap.t, ctx).powf(ctx.alpha);
    let geo = geometry_unchecked(&u, grid, ctx.alpha);
    let mut pt = (f64::INFINITY, f64::NEG_INFINITY);
    let mut v_max = 0.0_f64;
    let mut phi_ext = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..grid.len() {
        let x = q.values()[i] * theta_alpha;
        pt = (pt.0.min(x), pt.1.max(x));
        let g = geo.grad_log_norm(grid, &u, i);
        v_max = v_max.max((1.0 + g * g).sqrt());
        let p = phi.values()[i];
        phi_ext = (phi_ext.0.min(p), phi_ext.1.max(p));
    }
    Ok(InitialConstants::assemble(phi_ext.0, phi_ext.1, pt.0, pt.1, v_max, ctx))
}

/// `c3 <= H Theta <= c4` with relative slack.
pub fn check_h_theta(traj: &Trajectory, tol: &Tolerances) -> Result<(CheckResult, InitialConstants)> {
    let k = derived_constants(traj)?;
    check_h_theta_band(traj, tol, k.c3, k.c4).map(|r| (r, k))
}

pub(crate) fn check_h_theta_band(traj: &Trajectory, tol: &Tolerances, c3: f64, c4: f64) -> Result<CheckResult> {
    let mut worst = (f64::INFINITY, 0.0);
    for s in &traj.samples {
        let m = ((s.h_theta_min - c3) / c3).min((c4 - s.h_theta_max) / c4);
        if !(m >= worst.0) {
            worst = (m, s.t);
        }
    }
    let tau = tol.tau_h(&traj.grid);
    Ok(CheckResult::new("h_theta_band", worst.0, tau)
        .at(worst.1, None)
        .details(format!("band [{c3:e}, {c4:e}] (relative margin)")))
}

/// Indices of samples kept for time differencing: drops samples that sit
/// much closer to their predecessor than the typical spacing (the short
/// steps that land on snapshot times).
fn thinned(samples: &[Sample]) -> Vec<usize> {
    if samples.len() < 3 {
        return (0..samples.len()).collect();
    }
    let mut gaps: Vec<f64> = samples.windows(2).map(|w| w[1].s - w[0].s).collect();
    gaps.sort_by(f64::total_cmp);
    let median = gaps[gaps.len() / 2];
    let mut keep = vec![0];
    for i in 1..samples.len() {
        if samples[i].s - samples[*keep.last().unwrap()].s >= 0.25 * median {
            keep.push(i);
        }
    }
    keep
}

/// Largest relative residual of the area law, the time at which it occurs
/// and the largest sample spacing in rescaled time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaResidual {
    pub max_relative: f64,
    pub worst_time: f64,
    pub max_ds: f64,
}

/// `f'(t)` from three-point differences of the recorded area series against
/// the recorded `int u^{-alpha} dH^n`.
pub fn area_law_residual(traj: &Trajectory) -> Result<AreaResidual> {
    let keep = thinned(&traj.samples);
    if keep.len() < 3 {
        return Err(Error::Trajectory("area law needs at least three samples".into()));
    }
    let alpha = traj.ctx.alpha;
    let mut out = AreaResidual { max_relative: 0.0, worst_time: 0.0, max_ds: 0.0 };
    for w in keep.windows(3) {
        let (a, b, c) = (&traj.samples[w[0]], &traj.samples[w[1]], &traj.samples[w[2]]);
        let (h1, h2) = (b.t - a.t, c.t - b.t);
        let df = -h2 / (h1 * (h1 + h2)) * a.area + (h2 - h1) / (h1 * h2) * b.area + h1 / (h2 * (h1 + h2)) * c.area;
        let r = (df - b.integral_u_minus_alpha).abs() / b.integral_u_minus_alpha.abs();
        if !(r <= out.max_relative) {
            out.max_relative = r;
            out.worst_time = b.t;
        }
        // Spacing in rescaled time, where the series varies on unit scale.
        let th = theta(b.t, &traj.ctx).powf(alpha);
        out.max_ds = out.max_ds.max(h1.max(h2) / th);
    }
    Ok(out)
}

/// First-variation law `f'(t) = int u^{-alpha} dH^n` for the area `f`.
pub fn check_area_law(traj: &Trajectory, tol: &Tolerances) -> Result<CheckResult> {
    let r = area_law_residual(traj)?;
    let limit =
        tol.area_floor.max(tol.area_c_time * r.max_ds * r.max_ds + tol.area_c_h * traj.grid.h_theta().powi(2));
    Ok(CheckResult::new("area_law", limit - r.max_relative, 0.0)
        .at(r.worst_time, None)
        .details(format!("max relative residual {:e}, limit {limit:e}, max ds {:e}", r.max_relative, r.max_ds)))
}
