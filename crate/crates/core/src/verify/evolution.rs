//! Time derivatives of the metric, its inverse and the normal, compared by
//! centred differences in time against their closed-form evolution.
//!
//! The recorded surfaces are graphs `X = u(x, t) p(x)`, whose velocity
//! `u_t p` has the normal part `Phi nu` and a tangential part `T`. The
//! expected rates are the normal-flow rates plus the Lie derivative along `T`:
//!
//! * `g_ij' = 2 Phi h_ij + (L_T g)_ij`
//! * `g^ij' = -2 Phi h^ij - g^ik g^jl (L_T g)_kl`
//! * `nu'   = (-g^kl Phi_k + T^k h_k^l) X_l`
//!
//! with `T^k = u_t u^k / (u^2 v^2)` and `nu` written in the fixed frame
//! `(p, p_j)`.

use serde::{Deserialize, Serialize};

use super::{CheckResult, Tolerances};
use crate::error::{Error, Result};
use crate::flow::{Snapshot, Trajectory};
use crate::graph::{geometry_unchecked, GraphGeometry};
use crate::rescale::theta;
use crate::sphere::{gradient, Boundary, CapGrid, ScalarField, Sym2};

/// Relative residuals of the three identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResiduals {
    pub metric: f64,
    pub inverse_metric: f64,
    pub normal: f64,
    pub t_mid: f64,
    pub delta: f64,
    /// `delta` in rescaled-time units, `delta / Theta(t_mid)^alpha`.
    pub delta_s: f64,
    pub worst_node: usize,
}

impl EvolutionResiduals {
    pub fn max(&self) -> f64 {
        self.metric.max(self.inverse_metric).max(self.normal)
    }
}

fn find<'a>(traj: &'a Trajectory, t: f64) -> Result<&'a Snapshot> {
    traj.snapshots
        .iter()
        .find(|s| (s.t - t).abs() <= 1e-12 * t.abs().max(1.0))
        .ok_or_else(|| Error::Trajectory(format!("no snapshot at t = {t}")))
}

/// Orthonormal-frame components of a covariant tensor.
fn lower_on(t: Sym2, s22: f64) -> [f64; 3] {
    [t.a11, t.a12 / s22.sqrt(), t.a22 / s22]
}

/// Orthonormal-frame components of a contravariant tensor.
fn upper_on(t: Sym2, s22: f64) -> [f64; 3] {
    [t.a11, t.a12 * s22.sqrt(), t.a22 * s22]
}

/// Normal in the frame `(p, p_theta, p_psi)`, angular part orthonormalised.
fn normal_frame(geo: &GraphGeometry, u: f64, idx: usize, s22: f64) -> [f64; 3] {
    let n = geo.normal[idx];
    [n[0], u * n[1], u * n[2] * s22.sqrt()]
}

fn mat(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn sym(m: [[f64; 2]; 2]) -> Sym2 {
    Sym2::new(m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1])
}

/// Rates below this fraction of `max |u_t / u|` count as stationary, so a
/// normal that does not move is not judged by its round-off.
const STATIONARY_FLOOR: f64 = 1e-8;

#[derive(Default)]
struct Accum {
    diff: f64,
    scale: f64,
    node: usize,
}

impl Accum {
    fn push(&mut self, fd: &[f64], rhs: &[f64], node: usize) {
        for (a, b) in fd.iter().zip(rhs) {
            let d = (a - b).abs();
            if d > self.diff {
                self.diff = d;
                self.node = node;
            }
            self.scale = self.scale.max(a.abs()).max(b.abs());
        }
    }

    fn relative(&self, floor: f64) -> f64 {
        let scale = self.scale.max(floor);
        if scale == 0.0 {
            0.0
        } else {
            self.diff / scale
        }
    }
}

/// Residuals from the snapshots at `t_mid - delta`, `t_mid`, `t_mid + delta`.
///
/// `speed_factor` multiplies `Phi` in the normal-flow terms; 1 gives the true
/// identities.
pub fn evolution_residuals(traj: &Trajectory, t_mid: f64, delta: f64, speed_factor: f64) -> Result<EvolutionResiduals> {
    if !(delta > 0.0) || t_mid - delta < 0.0 {
        return Err(Error::InvalidParam { name: "delta", reason: format!("need 0 < delta <= t_mid, got {delta}") });
    }
    let grid: &CapGrid = &traj.grid;
    let alpha = traj.ctx.alpha;
    let snaps = [find(traj, t_mid - delta)?, find(traj, t_mid)?, find(traj, t_mid + delta)?];
    let fields: Vec<ScalarField> = snaps.iter().map(|s| s.u.clone().with_boundary(Boundary::Neumann)).collect();
    let geos: Vec<GraphGeometry> = fields.iter().map(|u| geometry_unchecked(u, grid, alpha)).collect();
    let (gm, gp, g0) = (&geos[0], &geos[2], &geos[1]);
    let u0 = fields[1].values();
    let dt = snaps[2].t - snaps[0].t;

    let udot: Vec<f64> = (0..grid.len()).map(|i| g0.v[i] * g0.speed[i]).collect();
    let udot_grad = gradient(&ScalarField::new(grid, udot.clone(), Boundary::Neumann)?, grid)?;
    let speed_grad = gradient(&ScalarField::new(grid, g0.speed.clone(), Boundary::Neumann)?, grid)?;
    let mult = grid.angular_multiplicity() as f64;

    let (mut acc_g, mut acc_gi, mut acc_nu) = (Accum::default(), Accum::default(), Accum::default());
    for i in 0..grid.len() {
        let s22 = grid.angular_metric(i);
        let sigma = Sym2::diag(1.0, s22);
        let u = u0[i];
        let v2 = g0.v[i] * g0.v[i];
        let du = g0.du[i];
        let du_up = [du[0], du[1] / s22];
        let du2 = du[0] * du_up[0] + mult * du[1] * du_up[1];
        let d2u = g0.d2u[i];
        let ud = udot[i];
        let udi = udot_grad.lower()[i];
        let phi_speed = g0.speed[i] * speed_factor;

        // Lie derivative of g along the tangential velocity.
        let lie = Sym2::new(udi[0] * du[0] * 2.0, udi[0] * du[1] + udi[1] * du[0], udi[1] * du[1] * 2.0)
            + d2u * (2.0 * ud)
            - ((Sym2::outer(du) * 2.0 - sigma * du2) * u + d2u * du2) * (2.0 * ud / (u * u * v2));

        let h = g0.second_ff.comps()[i];
        let fd_g = (gp.metric.comps()[i] - gm.metric.comps()[i]) * (1.0 / dt);
        let rhs_g = h * (2.0 * phi_speed) + lie;
        acc_g.push(&lower_on(fd_g, s22), &lower_on(rhs_g, s22), i);

        let gi = g0.inv_metric.comps()[i].as_matrix();
        let h_up = sym(mat(mat(gi, h.as_matrix()), gi));
        let lie_up = sym(mat(mat(gi, lie.as_matrix()), gi));
        let fd_gi = (gp.inv_metric.comps()[i] - gm.inv_metric.comps()[i]) * (1.0 / dt);
        let rhs_gi = h_up * (-2.0 * phi_speed) - lie_up;
        acc_gi.push(&upper_on(fd_gi, s22), &upper_on(rhs_gi, s22), i);

        let tang = [ud * du_up[0] / (u * u * v2), ud * du_up[1] / (u * u * v2)];
        let sg = speed_grad.lower()[i];
        let shape = g0.shape[i];
        let mut a = [0.0; 2];
        for l in 0..2 {
            a[l] = -(gi[l][0] * sg[0] + gi[l][1] * sg[1]) * speed_factor + shape[l][0] * tang[0] + shape[l][1] * tang[1];
        }
        let rhs_nu = [a[0] * du[0] + a[1] * du[1], u * a[0], u * a[1] * s22.sqrt()];
        let (np, nm) = (normal_frame(gp, fields[2].values()[i], i, s22), normal_frame(gm, fields[0].values()[i], i, s22));
        let fd_nu: Vec<f64> = (0..3).map(|k| (np[k] - nm[k]) / dt).collect();
        acc_nu.push(&fd_nu, &rhs_nu, i);
    }
    let floor = STATIONARY_FLOOR * udot.iter().zip(u0).map(|(d, u)| (d / u).abs()).fold(0.0, f64::max);
    let worst = [&acc_g, &acc_gi, &acc_nu]
        .into_iter()
        .max_by(|a, b| a.relative(floor).total_cmp(&b.relative(floor)))
        .map(|a| a.node)
        .unwrap_or(0);
    Ok(EvolutionResiduals {
        metric: acc_g.relative(floor),
        inverse_metric: acc_gi.relative(floor),
        normal: acc_nu.relative(floor),
        t_mid,
        delta,
        delta_s: delta / theta(t_mid, &traj.ctx).powf(alpha),
        worst_node: worst,
    })
}

/// Passes iff every residual is at most
/// `evolution_c_time delta_s^2 + evolution_c_h h^2`.
pub fn check_evolution_identities(
    traj: &Trajectory,
    t_mid: f64,
    delta: f64,
    tol: &Tolerances,
) -> Result<(CheckResult, EvolutionResiduals)> {
    let r = evolution_residuals(traj, t_mid, delta, 1.0)?;
    Ok((evolution_verdict(&r, traj.grid.h_theta(), tol), r))
}

pub(crate) fn evolution_verdict(r: &EvolutionResiduals, h: f64, tol: &Tolerances) -> CheckResult {
    let limit = tol.evolution_c_time * r.delta_s * r.delta_s + tol.evolution_c_h * h * h;
    CheckResult::new("evolution_identities", limit - r.max(), 0.0)
        .at(r.t_mid, Some(r.worst_node))
        .details(format!(
            "relative residuals g {:e}, g^-1 {:e}, nu {:e}; limit {limit:e} (delta_s {:e}, h {h:e})",
            r.metric, r.inverse_metric, r.normal, r.delta_s
        ))
}
