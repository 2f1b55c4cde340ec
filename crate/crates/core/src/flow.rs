//! Explicit integration of the log-radius equation
//! `d phi / dt = Q(phi, D phi, D^2 phi)` with a homogeneous Neumann condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, graph_geometry_with, DEFAULT_EPS_MC};
use crate::rescale::{self, RescaleContext};
use crate::sphere::{
    integrate_values, jets, jets_into, neumann_residual, round_metric, Boundary, CapGrid, Jet,
    Mode, PoleFrame, ScalarField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stepper {
    Euler,
    Rk4,
}

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Physical time.
    Time(f64),
    /// Rescaled time, mapped through `dt/ds = Theta^alpha`.
    Rescaled(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub alpha: f64,
    pub cfl_safety: f64,
    pub horizon: Horizon,
    pub stepper: Stepper,
    pub eps_mc: f64,
    /// Snapshot times in the run's own time variable (t for the physical
    /// flow, s for the rescaled one).
    pub snapshot_times: Vec<f64>,
    pub record_every: usize,
}

impl FlowParams {
    pub fn new(alpha: f64, horizon: Horizon) -> Self {
        Self {
            alpha,
            cfl_safety: 0.4,
            horizon,
            stepper: Stepper::Rk4,
            eps_mc: DEFAULT_EPS_MC,
            snapshot_times: Vec::new(),
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParam { name: "alpha", reason: format!("{} must be >= 0", self.alpha) });
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParam {
                name: "cfl_safety",
                reason: format!("{} must lie in (0, 1]", self.cfl_safety),
            });
        }
        let end = match self.horizon {
            Horizon::Time(t) | Horizon::Rescaled(t) => t,
        };
        if !(end > 0.0) || !end.is_finite() {
            return Err(Error::InvalidParam { name: "t_end", reason: format!("{end} must be > 0") });
        }
        if !(self.eps_mc > 0.0) {
            return Err(Error::InvalidParam { name: "eps_mc", reason: format!("{} must be > 0", self.eps_mc) });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParam { name: "record_every", reason: "must be >= 1".into() });
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidParam { name: "snapshot_times", reason: format!("{t} must be >= 0") });
        }
        Ok(())
    }
}

/// Time plus the evolved log-radius.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub phi: ScalarField,
}

impl FlowState {
    pub fn from_u(u: &ScalarField) -> Result<Self> {
        graph::check_positive(u)?;
        Ok(Self { t: 0.0, phi: u.map(f64::ln).with_boundary(Boundary::Neumann) })
    }

    pub fn u(&self) -> ScalarField {
        self.phi.map(f64::exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedTEnd,
    MeanConvexityLost,
    BlowupDetected,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::MeanConvexityLost => "mean_convexity_lost",
            Termination::BlowupDetected => "blowup_detected",
        }
    }
}

/// One recorded row of diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub s: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub phidot_theta_min: f64,
    pub phidot_theta_max: f64,
    pub sup_grad_phi: f64,
    pub h_theta_min: f64,
    pub h_theta_max: f64,
    pub area: f64,
    pub integral_u_minus_alpha: f64,
    pub h_min: f64,
    pub w_min: f64,
    pub utilde_min: f64,
    pub utilde_max: f64,
    pub sup_grad_utilde: f64,
}

impl Sample {
    pub const COLUMNS: [&'static str; 16] = [
        "t",
        "s",
        "u_min",
        "u_max",
        "phidot_theta_min",
        "phidot_theta_max",
        "sup_grad_phi",
        "H_theta_min",
        "H_theta_max",
        "area",
        "integral_u_minus_alpha",
        "H_min",
        "w_min",
        "utilde_min",
        "utilde_max",
        "sup_grad_utilde",
    ];

    pub fn to_row(&self) -> [f64; 16] {
        [
            self.t,
            self.s,
            self.u_min,
            self.u_max,
            self.phidot_theta_min,
            self.phidot_theta_max,
            self.sup_grad_phi,
            self.h_theta_min,
            self.h_theta_max,
            self.area,
            self.integral_u_minus_alpha,
            self.h_min,
            self.w_min,
            self.utilde_min,
            self.utilde_max,
            self.sup_grad_utilde,
        ]
    }

    pub fn from_row(r: &[f64; 16]) -> Self {
        Self {
            t: r[0],
            s: r[1],
            u_min: r[2],
            u_max: r[3],
            phidot_theta_min: r[4],
            phidot_theta_max: r[5],
            sup_grad_phi: r[6],
            h_theta_min: r[7],
            h_theta_max: r[8],
            area: r[9],
            integral_u_minus_alpha: r[10],
            h_min: r[11],
            w_min: r[12],
            utilde_min: r[13],
            utilde_max: r[14],
            sup_grad_utilde: r[15],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub s: f64,
    pub u: ScalarField,
}

/// Recorded run of the physical flow.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: FlowParams,
    pub ctx: RescaleContext,
    pub grid: CapGrid,
    pub samples: Vec<Sample>,
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
    pub steps: usize,
}

impl Trajectory {
    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory always records the initial snapshot")
    }

    /// Snapshot whose time equals `t` exactly.
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.t == t)
    }
}

/// Per-node invariants of the log-radius jet needed by the operator.
#[derive(Debug, Clone, Copy)]
struct Invariants {
    grad2: f64,
    denom: f64,
}

#[inline]
fn invariants(jet: &Jet, s22: f64, mult: f64, n: f64) -> Invariants {
    let up = [jet.grad[0], jet.grad[1] / s22];
    let grad2 = jet.grad[0] * up[0] + mult * jet.grad[1] * up[1];
    let trace = jet.hess.a11 + mult * jet.hess.a22 / s22;
    let quad = jet.hess.quad(up);
    let v2 = 1.0 + grad2;
    Invariants { grad2, denom: n - trace + quad / v2 }
}

/// Evaluates `Q - shift` node-wise for the log-radius `phi`, where `shift` is
/// 0 for the physical flow and `1/n` for the rescaled one.
pub(crate) struct Operator<'g> {
    grid: &'g CapGrid,
    alpha: f64,
    eps_mc: f64,
    shift: f64,
    s22: Vec<f64>,
    jets: Vec<Jet>,
}

impl<'g> Operator<'g> {
    pub(crate) fn new(grid: &'g CapGrid, alpha: f64, eps_mc: f64, shift: f64) -> Self {
        let s22 = (0..grid.len()).map(|i| grid.angular_metric(i)).collect();
        Self { grid, alpha, eps_mc, shift, s22, jets: vec![Jet::default(); grid.len()] }
    }

    fn load(&mut self, phi: &[f64]) {
        jets_into(phi, self.grid, Boundary::Neumann, PoleFrame::Canonical, &mut self.jets);
    }

    pub(crate) fn eval(&mut self, phi: &[f64], out: &mut [f64]) -> Result<()> {
        self.load(phi);
        let n = self.grid.n_dim() as f64;
        let mult = self.grid.angular_multiplicity() as f64;
        for (i, jet) in self.jets.iter().enumerate() {
            let inv = invariants(jet, self.s22[i], mult, n);
            let v2 = 1.0 + inv.grad2;
            // H = denom / (u v) must stay above the floor.
            let mean_curv = inv.denom * (-phi[i]).exp() / v2.sqrt();
            if !(mean_curv > self.eps_mc) {
                return Err(Error::MeanConvexityLost { node: i, quantity: "H", value: mean_curv });
            }
            out[i] = (-self.alpha * phi[i]).exp() * v2 / inv.denom - self.shift;
            if !out[i].is_finite() {
                return Err(Error::NonFinite { node: i, value: out[i] });
            }
        }
        Ok(())
    }

    /// Largest stable explicit step for the current `phi`.
    pub(crate) fn stable_dt(&mut self, phi: &[f64], cfl_safety: f64) -> f64 {
        self.load(phi);
        let n = self.grid.n_dim() as f64;
        let mult = self.grid.angular_multiplicity() as f64;
        let mut dt = f64::INFINITY;
        for (i, jet) in self.jets.iter().enumerate() {
            let inv = invariants(jet, self.s22[i], mult, n);
            // Largest eigenvalue of dQ/dphi_ij against sigma.
            let lam = (-self.alpha * phi[i]).exp() * (1.0 + inv.grad2) / (inv.denom * inv.denom);
            let dx = self.grid.local_spacing(i);
            dt = dt.min(dx * dx / (2.0 * n * lam));
        }
        cfl_safety * dt
    }
}

/// Right-hand side `Q(phi, D phi, D^2 phi)` of the log-radius equation.
pub fn rhs_q(phi: &ScalarField, grid: &CapGrid, alpha: f64) -> Result<ScalarField> {
    rhs_q_with(phi, grid, alpha, DEFAULT_EPS_MC)
}

pub fn rhs_q_with(phi: &ScalarField, grid: &CapGrid, alpha: f64, eps_mc: f64) -> Result<ScalarField> {
    phi.check_grid(grid)?;
    let mut out = vec![0.0; grid.len()];
    Operator::new(grid, alpha, eps_mc, 0.0).eval(phi.values(), &mut out)?;
    Ok(ScalarField::from_parts(grid.key(), out, Boundary::Neumann))
}

fn underflow_guard(dt: f64, t: f64) -> Result<f64> {
    if !(dt >= 1e-14 * t.abs().max(1.0)) {
        return Err(Error::BlowupDetected { t, dt });
    }
    Ok(dt)
}

/// CFL-limited explicit step size.
pub fn stable_dt(state: &FlowState, grid: &CapGrid, params: &FlowParams) -> Result<f64> {
    state.phi.check_grid(grid)?;
    let dt = Operator::new(grid, params.alpha, params.eps_mc, 0.0)
        .stable_dt(state.phi.values(), params.cfl_safety);
    underflow_guard(dt, state.t)
}

/// Explicit stepper over a fixed operator.
pub(crate) struct Integrator<'g> {
    op: Operator<'g>,
    stepper: Stepper,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

fn scan(values: &[f64]) -> Result<()> {
    if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { node, value });
    }
    Ok(())
}

impl<'g> Integrator<'g> {
    pub(crate) fn new(grid: &'g CapGrid, alpha: f64, eps_mc: f64, shift: f64, stepper: Stepper) -> Self {
        let n = grid.len();
        Self {
            op: Operator::new(grid, alpha, eps_mc, shift),
            stepper,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: vec![0.0; n],
        }
    }

    pub(crate) fn stable_dt(&mut self, phi: &[f64], cfl: f64) -> f64 {
        self.op.stable_dt(phi, cfl)
    }

    /// Advances `phi` in place by `dt`.
    pub(crate) fn advance(&mut self, phi: &mut [f64], dt: f64) -> Result<()> {
        match self.stepper {
            Stepper::Euler => {
                self.op.eval(phi, &mut self.k[0])?;
                for (p, k) in phi.iter_mut().zip(&self.k[0]) {
                    *p += dt * k;
                }
            }
            Stepper::Rk4 => {
                let [k1, k2, k3, k4] = &mut self.k;
                self.op.eval(phi, k1)?;
                for ((s, p), k) in self.stage.iter_mut().zip(phi.iter()).zip(k1.iter()) {
                    *s = p + 0.5 * dt * k;
                }
                scan(&self.stage)?;
                self.op.eval(&self.stage, k2)?;
                for ((s, p), k) in self.stage.iter_mut().zip(phi.iter()).zip(k2.iter()) {
                    *s = p + 0.5 * dt * k;
                }
                scan(&self.stage)?;
                self.op.eval(&self.stage, k3)?;
                for ((s, p), k) in self.stage.iter_mut().zip(phi.iter()).zip(k3.iter()) {
                    *s = p + dt * k;
                }
                scan(&self.stage)?;
                self.op.eval(&self.stage, k4)?;
                for (i, p) in phi.iter_mut().enumerate() {
                    *p += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        scan(phi)
    }
}

/// One explicit step of size `dt` (at most the stable step).
pub fn step(state: &FlowState, grid: &CapGrid, params: &FlowParams, dt: f64) -> Result<FlowState> {
    state.phi.check_grid(grid)?;
    let mut phi = state.phi.values().to_vec();
    Integrator::new(grid, params.alpha, params.eps_mc, 0.0, params.stepper).advance(&mut phi, dt)?;
    Ok(FlowState { t: state.t + dt, phi: ScalarField::from_parts(grid.key(), phi, Boundary::Neumann) })
}

/// Callback events of [`drive`].
pub(crate) struct Record<'a> {
    pub time: f64,
    pub phi: &'a [f64],
    pub snapshot: bool,
}

pub(crate) struct DriveOutcome {
    pub termination: Termination,
    pub steps: usize,
}

/// Adaptive time loop from time 0 to `end`, landing exactly on every
/// snapshot time. `observe` is called at time 0, every `record_every` steps,
/// at snapshot times, and at the final time.
#[allow(clippy::too_many_arguments)]
pub(crate) fn drive(
    grid: &CapGrid,
    phi0: Vec<f64>,
    alpha: f64,
    shift: f64,
    params: &FlowParams,
    end: f64,
    snapshot_times: &[f64],
    observe: &mut dyn FnMut(Record<'_>) -> Result<()>,
) -> Result<DriveOutcome> {
    let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|t| *t > 0.0 && *t < end).collect();
    targets.push(end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    let want_initial_snapshot = true;

    let mut integ = Integrator::new(grid, alpha, params.eps_mc, shift, params.stepper);
    let mut phi = phi0;
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut last_recorded = true;
    observe(Record { time: 0.0, phi: &phi, snapshot: want_initial_snapshot })?;

    let termination = 'outer: {
        for &target in &targets {
            while t < target {
                let dt_stable = integ.stable_dt(&phi, params.cfl_safety);
                let dt_stable = match underflow_guard(dt_stable, t) {
                    Ok(dt) => dt,
                    Err(_) => break 'outer Termination::BlowupDetected,
                };
                let remaining = target - t;
                let (dt, lands) = if remaining <= dt_stable { (remaining, true) } else { (dt_stable, false) };
                let mut next = phi.clone();
                match integ.advance(&mut next, dt) {
                    Ok(()) => {}
                    Err(Error::MeanConvexityLost { .. }) => break 'outer Termination::MeanConvexityLost,
                    Err(Error::NonFinite { .. }) => break 'outer Termination::BlowupDetected,
                    Err(e) => return Err(e),
                }
                phi = next;
                t = if lands { target } else { t + dt };
                steps += 1;
                last_recorded = false;
                let at_target = lands;
                if at_target || steps % params.record_every == 0 {
                    observe(Record { time: t, phi: &phi, snapshot: at_target })?;
                    last_recorded = true;
                }
            }
        }
        Termination::ReachedTEnd
    };
    if !last_recorded {
        observe(Record { time: t, phi: &phi, snapshot: true })?;
    }
    Ok(DriveOutcome { termination, steps })
}

/// Diagnostics of the physical flow at one instant.
pub(crate) fn physical_sample(
    grid: &CapGrid,
    phi: &[f64],
    t: f64,
    ctx: &RescaleContext,
) -> Sample {
    let alpha = ctx.alpha;
    let u = ScalarField::from_parts(grid.key(), phi.iter().map(|p| p.exp()).collect(), Boundary::Neumann);
    let geo = graph::geometry_unchecked(&u, grid, alpha);
    let mut q = vec![0.0; grid.len()];
    // Recording never fails on a state the stepper accepted; fall back to
    // NaN so a corrupted state shows in the series.
    if Operator::new(grid, alpha, 0.0, 0.0).eval(phi, &mut q).is_err() {
        q.iter_mut().for_each(|x| *x = f64::NAN);
    }
    let theta = rescale::theta(t, ctx);
    let theta_alpha = theta.powf(alpha);
    let n = grid.n_dim() as i32;

    let mut s = Sample {
        t,
        s: rescale::time_map(t, ctx, rescale::Direction::TToS).unwrap_or(f64::NAN),
        u_min: f64::INFINITY,
        u_max: f64::NEG_INFINITY,
        phidot_theta_min: f64::INFINITY,
        phidot_theta_max: f64::NEG_INFINITY,
        sup_grad_phi: 0.0,
        h_theta_min: f64::INFINITY,
        h_theta_max: f64::NEG_INFINITY,
        area: 0.0,
        integral_u_minus_alpha: 0.0,
        h_min: f64::INFINITY,
        w_min: f64::INFINITY,
        utilde_min: 0.0,
        utilde_max: 0.0,
        sup_grad_utilde: 0.0,
    };
    let mut sup_grad_u = 0.0_f64;
    let mut area = Vec::with_capacity(grid.len());
    let mut flux = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let uu = u.values()[i];
        let v = geo.v[i];
        s.u_min = s.u_min.min(uu);
        s.u_max = s.u_max.max(uu);
        s.phidot_theta_min = s.phidot_theta_min.min(q[i] * theta_alpha);
        s.phidot_theta_max = s.phidot_theta_max.max(q[i] * theta_alpha);
        let grad_phi = geo.grad_log_norm(grid, &u, i);
        s.sup_grad_phi = s.sup_grad_phi.max(grad_phi);
        sup_grad_u = sup_grad_u.max(uu * grad_phi);
        let h = geo.mean_curv[i];
        s.h_theta_min = s.h_theta_min.min(h * theta);
        s.h_theta_max = s.h_theta_max.max(h * theta);
        s.h_min = s.h_min.min(h);
        s.w_min = s.w_min.min(geo.support[i]);
        let density = uu.powi(n) * v;
        area.push(density);
        flux.push(uu.powf(-alpha) * density);
    }
    s.area = integrate_values(&area, grid);
    s.integral_u_minus_alpha = integrate_values(&flux, grid);
    s.utilde_min = s.u_min / theta;
    s.utilde_max = s.u_max / theta;
    s.sup_grad_utilde = sup_grad_u / theta;
    s
}

/// Checks positivity, boundary compatibility and strict mean convexity of
/// initial data.
pub fn validate_initial(u0: &ScalarField, grid: &CapGrid, eps_mc: f64) -> Result<()> {
    u0.check_grid(grid)?;
    graph::check_positive(u0)?;
    let u0n = u0.clone().with_boundary(Boundary::Neumann);
    match graph_geometry_with(&u0n, grid, 0.0, eps_mc) {
        Ok(_) => {}
        Err(Error::MeanConvexityLost { .. }) => {
            let min_h = graph::geometry_unchecked(&u0n, grid, 0.0).min_mean_curv();
            return Err(Error::InitialNotMeanConvex { min_h });
        }
        Err(e) => return Err(e),
    }
    let residual = neumann_residual(u0, grid)?;
    let tol = 10.0 * grid.h_theta().powi(2) * u0.max();
    if residual > tol {
        return Err(Error::InitialNotCompatible { residual });
    }
    Ok(())
}

/// Runs the physical flow with the midpoint reference constant.
pub fn run_flow(u0: &ScalarField, grid: &CapGrid, params: &FlowParams) -> Result<Trajectory> {
    let ctx = RescaleContext::midpoint(params.alpha, grid.n_dim(), u0)?;
    run_flow_with_context(u0, grid, params, &ctx)
}

pub fn run_flow_with_context(
    u0: &ScalarField,
    grid: &CapGrid,
    params: &FlowParams,
    ctx: &RescaleContext,
) -> Result<Trajectory> {
    params.validate()?;
    validate_initial(u0, grid, params.eps_mc)?;
    let t_end = match params.horizon {
        Horizon::Time(t) => t,
        Horizon::Rescaled(s) => rescale::time_map(s, ctx, rescale::Direction::SToT)?,
    };
    let phi0: Vec<f64> = u0.values().iter().map(|u| u.ln()).collect();
    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut observe = |r: Record<'_>| -> Result<()> {
        let sample = physical_sample(grid, r.phi, r.time, ctx);
        if r.snapshot {
            snapshots.push(Snapshot {
                t: r.time,
                s: sample.s,
                u: ScalarField::from_parts(grid.key(), r.phi.iter().map(|p| p.exp()).collect(), Boundary::Neumann),
            });
        }
        samples.push(sample);
        Ok(())
    };
    let outcome = drive(grid, phi0, params.alpha, 0.0, params, t_end, &params.snapshot_times, &mut observe)?;
    Ok(Trajectory {
        params: params.clone(),
        ctx: *ctx,
        grid: grid.clone(),
        samples,
        snapshots,
        termination: outcome.termination,
        steps: outcome.steps,
    })
}

/// Parameters of the initial-data families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialFamily {
    pub r0: f64,
    pub eps: f64,
    pub k_radial: u32,
    pub m_angular: u32,
}

impl Default for InitialFamily {
    fn default() -> Self {
        Self { r0: 1.0, eps: 0.05, k_radial: 1, m_angular: 0 }
    }
}

/// Angular profile `(sin theta / sin theta_max)^m w(theta)` with
/// `w = 1 - kappa (theta / theta_max)^2` chosen so the profile has zero slope
/// at theta_max.
pub fn angular_profile(theta: f64, theta_max: f64, m: u32) -> f64 {
    let m_f = m as f64;
    let cot = theta_max.cos() / theta_max.sin();
    let kappa = m_f * cot / (m_f * cot + 2.0 / theta_max);
    let ratio = theta / theta_max;
    (theta.sin() / theta_max.sin()).powi(m as i32) * (1.0 - kappa * ratio * ratio)
}

/// Star-shaped, boundary-compatible, mean-convex initial radius.
///
/// Axisymmetric data: `r0 (1 + eps cos(k pi theta / theta_max))`. On a full2d
/// grid with `m_angular > 0`: `r0 (1 + eps f_m(theta) cos(m psi))` with
/// [`angular_profile`].
pub fn make_initial_data(grid: &CapGrid, family: &InitialFamily, eps_mc: f64) -> Result<ScalarField> {
    if !(family.r0 > 0.0) {
        return Err(Error::InvalidParam { name: "r0", reason: format!("{} must be > 0", family.r0) });
    }
    if !(family.eps.abs() < 1.0) {
        return Err(Error::EpsTooLarge { eps: family.eps.abs() });
    }
    let tmax = grid.theta_max();
    let InitialFamily { r0, eps, k_radial, m_angular } = *family;
    let u0 = if grid.mode() == Mode::Full2d && m_angular > 0 {
        ScalarField::from_fn(grid, Boundary::Neumann, |t, p| {
            r0 * (1.0 + eps * angular_profile(t, tmax, m_angular) * (m_angular as f64 * p).cos())
        })?
    } else {
        let freq = k_radial as f64 * std::f64::consts::PI / tmax;
        ScalarField::from_fn(grid, Boundary::Neumann, |t, _| r0 * (1.0 + eps * (freq * t).cos()))?
    };
    validate_initial(&u0, grid, eps_mc)?;
    Ok(u0)
}

/// `max |d Q| / |Q|` style guard used by tests: evaluates `Q` assembled from
/// the public derivative operators.
#[doc(hidden)]
pub fn rhs_q_reference(phi: &ScalarField, grid: &CapGrid, alpha: f64) -> Result<Vec<f64>> {
    let jets = jets(phi.values(), grid, phi.boundary(), PoleFrame::Standard);
    let n = grid.n_dim() as f64;
    let mult = grid.angular_multiplicity();
    Ok(jets
        .iter()
        .enumerate()
        .map(|(i, j)| {
            let si = round_metric(grid, i).inverse();
            let up = [j.grad[0] * si.a11, j.grad[1] * si.a22];
            let g2 = j.grad[0] * up[0] + mult as f64 * j.grad[1] * up[1];
            let v2 = 1.0 + g2;
            let tilde = si - crate::sphere::Sym2::outer(up) * (1.0 / v2);
            let denom = n - tilde.contract(j.hess, mult);
            (-alpha * phi.values()[i]).exp() * v2 / denom
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::Resolution;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn axis(n: usize, tmax: f64, nt: usize) -> CapGrid {
        CapGrid::build(n, tmax, Resolution::axisymmetric(nt), Mode::Axisymmetric).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    #[test]
    fn constant_log_radius_gives_ode_rate() {
        let g = axis(2, 1.0, 21);
        let q = rhs_q(&ScalarField::constant(&g, 0.3), &g, 2.0).unwrap();
        assert!(q.values().iter().all(|x| rel_err(*x, (-0.6f64).exp() / 2.0) < 1e-14));
        let q0 = rhs_q(&ScalarField::constant(&g, 0.3), &g, 0.0).unwrap();
        assert!(q0.values().iter().all(|x| rel_err(*x, 0.5) < 1e-14));
    }

    #[test]
    fn rhs_matches_reference_assembly() {
        let g = axis(2, FRAC_PI_2, 101);
        let phi = ScalarField::from_fn(&g, Boundary::Neumann, |t, _| 2f64.ln() + 0.01 * t.cos()).unwrap();
        let q = rhs_q(&phi, &g, 1.0).unwrap();
        let r = rhs_q_reference(&phi, &g, 1.0).unwrap();
        for (a, b) in q.values().iter().zip(&r) {
            assert!((a - b).abs() <= 1e-14 * b.abs());
        }
        let gf = CapGrid::build(2, 1.0, Resolution::full2d(21, 16), Mode::Full2d).unwrap();
        let phi = ScalarField::from_fn(&gf, Boundary::Neumann, |t, p| 0.02 * angular_profile(t, 1.0, 2) * (2.0 * p).cos())
            .unwrap();
        let q = rhs_q(&phi, &gf, 1.0).unwrap();
        let r = rhs_q_reference(&phi, &gf, 1.0).unwrap();
        // The pole uses a different (rotation-invariant) summation order.
        for (a, b) in q.values().iter().zip(&r) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn rhs_rejects_concave_state() {
        let g = axis(2, 1.0, 21);
        let phi = ScalarField::from_fn(&g, Boundary::Neumann, |t, _| 20.0 * t * t).unwrap();
        assert!(matches!(rhs_q(&phi, &g, 1.0), Err(Error::MeanConvexityLost { .. })));
    }

    #[test]
    fn stable_dt_scaling() {
        let p = FlowParams::new(1.0, Horizon::Time(1.0));
        let s = |nt| {
            let g = axis(2, FRAC_PI_2, nt);
            stable_dt(&FlowState::from_u(&ScalarField::constant(&g, 1.0)).unwrap(), &g, &p).unwrap()
        };
        let (a, b) = (s(101), s(201));
        assert!(a > 0.0);
        assert!((a / b / 4.0 - 1.0).abs() < 0.1);
        let g = axis(2, FRAC_PI_2, 101);
        let st = FlowState::from_u(&ScalarField::constant(&g, 1.0)).unwrap();
        let mut half = p.clone();
        half.cfl_safety = 0.2;
        assert_eq!(stable_dt(&st, &g, &half).unwrap(), 0.5 * stable_dt(&st, &g, &p).unwrap());
    }

    #[test]
    fn stable_dt_collapses_near_degeneracy() {
        let g = axis(2, 1.0, 41);
        let p = FlowParams::new(1.0, Horizon::Time(1.0));
        // Concave bump at the pole; its amplitude drives n - lap(phi) to zero.
        let field = |amp: f64| {
            ScalarField::from_fn(&g, Boundary::Neumann, |t, _| amp * (1.0 - t * t).powi(2)).unwrap()
        };
        let (mut ok, mut bad) = (0.0, -1.0);
        for _ in 0..80 {
            let mid = 0.5 * (ok + bad);
            if rhs_q(&field(mid), &g, 1.0).is_ok() {
                ok = mid;
            } else {
                bad = mid;
            }
        }
        let dt = |amp: f64| stable_dt(&FlowState { t: 1.0, phi: field(amp) }, &g, &p);
        let far = dt(0.0).unwrap();
        let closer = dt(0.9 * ok).unwrap();
        let closest = dt(0.999 * ok).unwrap();
        assert!(closest < closer && closer < far);
        assert!(closest < 1e-4 * far);
        assert!(matches!(dt(ok), Err(Error::BlowupDetected { .. })));
    }

    #[test]
    fn single_rk4_step_matches_ode() {
        let g = axis(2, 1.0, 21);
        let r0: f64 = 1.3;
        let p = FlowParams::new(1.0, Horizon::Time(1.0));
        let st = FlowState::from_u(&ScalarField::constant(&g, r0)).unwrap();
        for dt in [0.1, 0.05] {
            let next = step(&st, &g, &p, dt).unwrap();
            let u = next.u();
            let exact = (dt / 2.0 + r0).powf(1.0);
            assert!(u.values().iter().all(|x| *x == u.values()[0]));
            assert!(rel_err(u.values()[0], exact) < dt.powi(5));
        }
        // alpha = 2: u(t) = (alpha t / n + r0^alpha)^{1/alpha}.
        let mut p2 = p.clone();
        p2.alpha = 2.0;
        let next = step(&st, &g, &p2, 0.05).unwrap();
        let exact = (2.0 * 0.05 / 2.0 + r0 * r0).sqrt();
        assert!(rel_err(next.u().values()[0], exact) < 0.05f64.powi(5));
    }

    #[test]
    fn model_solutions() {
        let g = axis(2, FRAC_PI_2, 101);
        let u0 = ScalarField::constant(&g, 1.0);
        let traj = run_flow(&u0, &g, &FlowParams::new(1.0, Horizon::Time(4.0))).unwrap();
        assert_eq!(traj.termination, Termination::ReachedTEnd);
        let snap = traj.final_snapshot();
        assert_eq!(snap.t, 4.0);
        assert!(snap.u.values().iter().all(|x| rel_err(*x, 3.0) <= 1e-8));

        let traj = run_flow(&u0, &g, &FlowParams::new(0.0, Horizon::Time(2.0))).unwrap();
        let snap = traj.final_snapshot();
        assert!(snap.u.values().iter().all(|x| rel_err(*x, 1f64.exp()) <= 1e-8));
    }

    #[test]
    fn snapshots_land_exactly() {
        let g = axis(2, 1.0, 21);
        let u0 = make_initial_data(&g, &InitialFamily::default(), DEFAULT_EPS_MC).unwrap();
        let mut p = FlowParams::new(1.0, Horizon::Time(0.5));
        p.snapshot_times = vec![0.1, 0.25, 0.1000001];
        p.record_every = 7;
        let traj = run_flow(&u0, &g, &p).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.1, 0.1000001, 0.25, 0.5]);
        assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t));
        assert_eq!(traj.samples.last().unwrap().t, 0.5);
    }

    #[test]
    fn perturbed_run_keeps_gradient_and_boundary() {
        let g = axis(2, FRAC_PI_3, 61);
        let u0 = make_initial_data(&g, &InitialFamily::default(), DEFAULT_EPS_MC).unwrap();
        let traj = run_flow(&u0, &g, &FlowParams::new(1.0, Horizon::Time(2.0))).unwrap();
        let grads: Vec<f64> = traj.samples.iter().map(|s| s.sup_grad_phi).collect();
        assert!(grads.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        assert!(traj.samples.iter().all(|s| s.w_min > 0.0));
        let res = neumann_residual(&traj.final_snapshot().u, &g).unwrap();
        assert!(res <= g.h_theta().powi(2), "residual {res}");
    }

    #[test]
    fn initial_data_families() {
        let g = axis(2, FRAC_PI_3, 61);
        let flat = make_initial_data(&g, &InitialFamily { eps: 0.0, r0: 2.0, ..Default::default() }, 1e-8).unwrap();
        assert!(flat.values().iter().all(|x| *x == 2.0));
        let bad = InitialFamily { eps: 0.9, k_radial: 3, ..Default::default() };
        assert!(matches!(make_initial_data(&g, &bad, 1e-8), Err(Error::InitialNotMeanConvex { .. })));
        let big = InitialFamily { eps: 1.0, ..Default::default() };
        assert!(matches!(make_initial_data(&g, &big, 1e-8), Err(Error::EpsTooLarge { .. })));
        // f_m'(theta_max) = 0.
        for m in 1..5 {
            let t = 1.1;
            let d = (angular_profile(t + 1e-6, t, m) - angular_profile(t - 1e-6, t, m)) / 2e-6;
            assert!(d.abs() < 1e-8, "m = {m}: {d}");
        }
        let gf = CapGrid::build(2, FRAC_PI_3, Resolution::full2d(31, 16), Mode::Full2d).unwrap();
        let u = make_initial_data(&gf, &InitialFamily { m_angular: 2, ..Default::default() }, 1e-8).unwrap();
        assert!(u.max() > u.min());
    }

    fn full2d_run(u0: &ScalarField, g: &CapGrid) -> Trajectory {
        let mut p = FlowParams::new(1.0, Horizon::Time(0.3));
        p.record_every = 10;
        run_flow(u0, g, &p).unwrap()
    }

    #[test]
    fn full2d_equivariance_and_symmetry() {
        let g = CapGrid::build(2, FRAC_PI_3, Resolution::full2d(15, 16), Mode::Full2d).unwrap();
        let u0 = make_initial_data(&g, &InitialFamily { m_angular: 2, eps: 0.05, ..Default::default() }, 1e-8).unwrap();
        let shifted = ScalarField::from_fn(&g, Boundary::Neumann, |t, p| {
            1.0 + 0.05 * angular_profile(t, FRAC_PI_3, 2) * (2.0 * (p - g.h_psi())).cos()
        })
        .unwrap();
        // Shift of the stored values by one psi period.
        let rot: Vec<f64> = (0..g.len())
            .map(|i| if i == 0 { u0.values()[0] } else { u0.values()[g.index2(g.ring_of(i), (i - 1) as isize % 16 - 1)] })
            .collect();
        let rot = ScalarField::new(&g, rot, Boundary::Neumann).unwrap();
        for (a, b) in rot.values().iter().zip(shifted.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        let ta = full2d_run(&u0, &g);
        let tb = full2d_run(&rot, &g);
        let (ua, ub) = (&ta.final_snapshot().u, &tb.final_snapshot().u);
        for i in 1..g.len() {
            let src = g.index2(g.ring_of(i), (i - 1) as isize % 16 - 1);
            assert_eq!(ub.values()[i].to_bits(), ua.values()[src].to_bits());
        }
        assert_eq!(ub.values()[0].to_bits(), ua.values()[0].to_bits());

        let ax = make_initial_data(&g, &InitialFamily::default(), 1e-8).unwrap();
        let t = full2d_run(&ax, &g);
        let u = &t.final_snapshot().u;
        for j in 1..g.n_theta() {
            let ring: Vec<f64> = (0..16).map(|k| u.values()[g.index2(j, k)]).collect();
            let spread = ring.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ring.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(spread <= 1e-12);
        }
    }
}
