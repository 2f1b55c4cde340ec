//! Rescaling by the model radius `Theta(t, c)` and the time change
//! `dt/ds = Theta^alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, FlowParams, Horizon, Record, Snapshot, Termination, Trajectory};
use crate::graph;
use crate::sphere::{integrate_values, Boundary, CapGrid, ScalarField};

/// Reference log-radius `c` for the model solution, together with the flow
/// exponent and dimension it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleContext {
    pub alpha: f64,
    pub n_dim: usize,
    pub c: f64,
}

impl RescaleContext {
    /// `c` halfway between the extrema of `log u0`.
    pub fn midpoint(alpha: f64, n_dim: usize, u0: &ScalarField) -> Result<Self> {
        graph::check_positive(u0)?;
        let c = 0.5 * (u0.min().ln() + u0.max().ln());
        Self::new(alpha, n_dim, c)
    }

    /// Explicit `c`, which must lie between the extrema of `log u0`.
    pub fn explicit(alpha: f64, n_dim: usize, c: f64, u0: &ScalarField) -> Result<Self> {
        graph::check_positive(u0)?;
        let (lo, hi) = (u0.min().ln(), u0.max().ln());
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if !(c >= lo - tol && c <= hi + tol) {
            return Err(Error::InvalidParam {
                name: "c",
                reason: format!("{c} outside [inf log u0, sup log u0] = [{lo}, {hi}]"),
            });
        }
        Self::new(alpha, n_dim, c)
    }

    /// Unvalidated against data; only the scalar ranges are checked.
    pub fn new(alpha: f64, n_dim: usize, c: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParam { name: "alpha", reason: format!("{alpha} must be >= 0") });
        }
        if n_dim < 2 {
            return Err(Error::InvalidParam { name: "n_dim", reason: format!("{n_dim} must be >= 2") });
        }
        if !c.is_finite() {
            return Err(Error::InvalidParam { name: "c", reason: "must be finite".into() });
        }
        Ok(Self { alpha, n_dim, c })
    }
}

/// `log Theta(t, c)`.
pub fn log_theta(t: f64, ctx: &RescaleContext) -> f64 {
    let n = ctx.n_dim as f64;
    if ctx.alpha == 0.0 {
        ctx.c + t / n
    } else {
        let a = ctx.alpha;
        ctx.c + (a * t * (-a * ctx.c).exp() / n).ln_1p() / a
    }
}

/// Model radius `(alpha t / n + e^{alpha c})^{1/alpha}`, or `e^{c + t/n}` at
/// `alpha = 0`.
pub fn theta(t: f64, ctx: &RescaleContext) -> f64 {
    log_theta(t, ctx).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TToS,
    SToT,
}

/// Closed-form time change with `t(0) = s(0) = 0`.
pub fn time_map(value: f64, ctx: &RescaleContext, direction: Direction) -> Result<f64> {
    if !(value >= 0.0) {
        return Err(Error::NegativeTime(value));
    }
    if ctx.alpha == 0.0 {
        return Ok(value);
    }
    let n = ctx.n_dim as f64;
    let a = ctx.alpha;
    let scale = (a * ctx.c).exp();
    Ok(match direction {
        Direction::TToS => n / a * (a * value / (n * scale)).ln_1p(),
        Direction::SToT => n * scale * (a * value / n).exp_m1() / a,
    })
}

/// Diagnostics of the rescaled solution at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RescaledSample {
    pub s: f64,
    pub t: f64,
    pub utilde_min: f64,
    pub utilde_max: f64,
    pub sup_grad_phi: f64,
    pub sup_grad_utilde: f64,
    pub h_tilde_min: f64,
    pub h_tilde_max: f64,
    pub area_tilde: f64,
}

impl RescaledSample {
    pub fn oscillation(&self) -> f64 {
        self.utilde_max - self.utilde_min
    }
}

/// Rescaled field at one instant.
#[derive(Debug, Clone)]
pub struct RescaledSnapshot {
    pub s: f64,
    pub t: f64,
    pub utilde: ScalarField,
}

#[derive(Debug, Clone)]
pub struct RescaledTrajectory {
    pub ctx: RescaleContext,
    pub grid: CapGrid,
    pub samples: Vec<RescaledSample>,
    pub snapshots: Vec<RescaledSnapshot>,
    pub termination: Termination,
    pub steps: usize,
}

impl RescaledTrajectory {
    pub fn final_snapshot(&self) -> &RescaledSnapshot {
        self.snapshots.last().expect("rescaled trajectory always has an initial snapshot")
    }

    /// Snapshot whose `s` is within `1e-12` relative of the request.
    pub fn snapshot_near(&self, s: f64) -> Option<&RescaledSnapshot> {
        self.snapshots.iter().find(|r| (r.s - s).abs() <= 1e-12 * s.abs().max(1.0))
    }
}

/// Re-expresses a physical trajectory in `(s, u / Theta)`.
pub fn rescale_trajectory(traj: &Trajectory, ctx: &RescaleContext) -> Result<RescaledTrajectory> {
    let n = ctx.n_dim as f64;
    let mut samples = Vec::with_capacity(traj.samples.len());
    for smp in &traj.samples {
        let lt = log_theta(smp.t, ctx);
        let th = lt.exp();
        samples.push(RescaledSample {
            s: time_map(smp.t, ctx, Direction::TToS)?,
            t: smp.t,
            utilde_min: smp.u_min / th,
            utilde_max: smp.u_max / th,
            sup_grad_phi: smp.sup_grad_phi,
            // Recorded with the trajectory's own context; rescale by the ratio.
            sup_grad_utilde: smp.sup_grad_utilde * theta(smp.t, &traj.ctx) / th,
            h_tilde_min: smp.h_theta_min / theta(smp.t, &traj.ctx) * th,
            h_tilde_max: smp.h_theta_max / theta(smp.t, &traj.ctx) * th,
            area_tilde: smp.area * (-n * lt).exp(),
        });
    }
    let mut snapshots = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let lt = log_theta(snap.t, ctx);
        snapshots.push(RescaledSnapshot {
            s: time_map(snap.t, ctx, Direction::TToS)?,
            t: snap.t,
            utilde: snap.u.map(|u| (u.ln() - lt).exp()),
        });
    }
    Ok(RescaledTrajectory {
        ctx: *ctx,
        grid: traj.grid.clone(),
        samples,
        snapshots,
        termination: traj.termination,
        steps: traj.steps,
    })
}

/// Diagnostics of a rescaled field; `H~` is the mean curvature of the graph of
/// `u~` itself.
pub(crate) fn rescaled_sample(grid: &CapGrid, phi_tilde: &[f64], s: f64, ctx: &RescaleContext) -> RescaledSample {
    let u = ScalarField::from_parts(grid.key(), phi_tilde.iter().map(|p| p.exp()).collect(), Boundary::Neumann);
    let geo = graph::geometry_unchecked(&u, grid, ctx.alpha);
    let mut r = RescaledSample {
        s,
        t: time_map(s, ctx, Direction::SToT).unwrap_or(f64::NAN),
        utilde_min: u.min(),
        utilde_max: u.max(),
        sup_grad_phi: 0.0,
        sup_grad_utilde: 0.0,
        h_tilde_min: geo.min_mean_curv(),
        h_tilde_max: geo.mean_curv.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        area_tilde: integrate_values(&graph::area_density(&u, grid), grid),
    };
    for (i, uu) in u.values().iter().enumerate() {
        let g = geo.grad_log_norm(grid, &u, i);
        r.sup_grad_phi = r.sup_grad_phi.max(g);
        r.sup_grad_utilde = r.sup_grad_utilde.max(uu * g);
    }
    r
}

/// Integrates `d u~/ds = v / (u~^alpha H~) - u~ / n` directly in `s`.
///
/// The horizon and snapshot times of `params` are read as `s` values; a
/// [`Horizon::Time`] end is mapped to `s` first.
pub fn run_rescaled_flow(
    u0_tilde: &ScalarField,
    grid: &CapGrid,
    params: &FlowParams,
    ctx: &RescaleContext,
) -> Result<RescaledTrajectory> {
    params.validate()?;
    flow::validate_initial(u0_tilde, grid, params.eps_mc)?;
    let s_end = match params.horizon {
        Horizon::Rescaled(s) => s,
        Horizon::Time(t) => time_map(t, ctx, Direction::TToS)?,
    };
    let n = grid.n_dim() as f64;
    let phi0: Vec<f64> = u0_tilde.values().iter().map(|u| u.ln()).collect();
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut observe = |r: Record<'_>| -> Result<()> {
        let sample = rescaled_sample(grid, r.phi, r.time, ctx);
        if r.snapshot {
            snapshots.push(RescaledSnapshot {
                s: r.time,
                t: sample.t,
                utilde: ScalarField::from_parts(grid.key(), r.phi.iter().map(|p| p.exp()).collect(), Boundary::Neumann),
            });
        }
        samples.push(sample);
        Ok(())
    };
    let outcome =
        flow::drive(grid, phi0, params.alpha, 1.0 / n, params, s_end, &params.snapshot_times, &mut observe)?;
    Ok(RescaledTrajectory {
        ctx: *ctx,
        grid: grid.clone(),
        samples,
        snapshots,
        termination: outcome.termination,
        steps: outcome.steps,
    })
}

/// Right-hand side of the rescaled log equation, `d log u~ / ds`.
pub fn rescaled_rhs(u_tilde: &ScalarField, grid: &CapGrid, alpha: f64) -> Result<ScalarField> {
    let phi = u_tilde.map(f64::ln).with_boundary(Boundary::Neumann);
    let q = flow::rhs_q(&phi, grid, alpha)?;
    let n = grid.n_dim() as f64;
    Ok(q.map(|x| x - 1.0 / n))
}

/// Convenience for callers holding only physical snapshots.
pub fn rescale_snapshot(snap: &Snapshot, ctx: &RescaleContext) -> Result<RescaledSnapshot> {
    let lt = log_theta(snap.t, ctx);
    Ok(RescaledSnapshot {
        s: time_map(snap.t, ctx, Direction::TToS)?,
        t: snap.t,
        utilde: snap.u.map(|u| (u.ln() - lt).exp()),
    })
}
