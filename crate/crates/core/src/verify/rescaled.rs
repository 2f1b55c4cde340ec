use serde::{Deserialize, Serialize};

use super::{CheckResult, Tolerances};
use crate::error::{Error, Result};
use crate::graph::{geometry_unchecked, graph_area};
use crate::rescale::{rescaled_rhs, RescaledTrajectory};
use crate::sphere::{gradient, integrate, Boundary, CapGrid, Mode, ScalarField};

const HOLDER_EXPONENT: f64 = 0.5;

/// Node-wise fields entering the Hoelder proxy: orthonormal components of
/// `D u~`, `d u~/ds` and `H~`.
fn holder_fields(u: &ScalarField, grid: &CapGrid, alpha: f64) -> Result<[Vec<f64>; 4]> {
    let u = u.clone().with_boundary(Boundary::Neumann);
    let d = gradient(&u, grid)?;
    let mut g0 = Vec::with_capacity(grid.len());
    let mut g1 = Vec::with_capacity(grid.len());
    for (i, c) in d.lower().iter().enumerate() {
        g0.push(c[0]);
        g1.push(c[1] / grid.angular_metric(i).sqrt());
    }
    let rate = rescaled_rhs(&u, grid, alpha)?;
    let us: Vec<f64> = rate.values().iter().zip(u.values()).map(|(r, x)| r * x).collect();
    let h = geometry_unchecked(&u, grid, alpha).mean_curv;
    Ok([g0, g1, us, h])
}

/// Pairs of non-pole nodes within `radius` index steps along a meridian or a
/// ring, with their geodesic distance.
fn pairs(grid: &CapGrid, radius: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    let h = grid.h_theta();
    match grid.mode() {
        Mode::Axisymmetric => {
            for i in 1..grid.len() {
                for d in 1..=radius {
                    if i + d < grid.len() {
                        out.push((i, i + d, d as f64 * h));
                    }
                }
            }
        }
        Mode::Full2d => {
            let (nt, np) = (grid.n_theta(), grid.n_psi());
            for j in 1..nt {
                let s = grid.ring_theta(j).sin();
                for k in 0..np as isize {
                    let a = grid.index2(j, k);
                    for d in 1..=radius {
                        if j + d < nt {
                            out.push((a, grid.index2(j + d, k), d as f64 * h));
                        }
                        if 2 * d < np {
                            let dist = 2.0 * (s * (0.5 * d as f64 * grid.h_psi()).sin()).asin();
                            out.push((a, grid.index2(j, k + d as isize), dist));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Per-snapshot Hoelder proxies `max |f(a) - f(b)| / d(a, b)^beta` with
/// `beta = 1/2`, for `f` in (`D u~`, `d u~/ds`, `H~`). Time pairs join the
/// same node in consecutive snapshots at parabolic distance `|ds|^{1/2}`.
pub fn holder_series(rt: &RescaledTrajectory, radius: usize) -> Result<Vec<(f64, [f64; 3])>> {
    let grid = &rt.grid;
    let pairs = pairs(grid, radius);
    let mut prev: Option<(f64, [Vec<f64>; 4])> = None;
    let mut out = Vec::with_capacity(rt.snapshots.len());
    for snap in &rt.snapshots {
        let f = holder_fields(&snap.utilde, grid, rt.ctx.alpha)?;
        let mut q = [0.0_f64; 3];
        for &(a, b, d) in &pairs {
            let w = d.powf(-HOLDER_EXPONENT);
            q[0] = q[0].max(w * (f[0][a] - f[0][b]).abs().max((f[1][a] - f[1][b]).abs()));
            q[1] = q[1].max(w * (f[2][a] - f[2][b]).abs());
            q[2] = q[2].max(w * (f[3][a] - f[3][b]).abs());
        }
        if let Some((s_prev, fp)) = &prev {
            let w = (snap.s - s_prev).abs().powf(-0.5 * HOLDER_EXPONENT);
            for i in 1..grid.len() {
                q[0] = q[0].max(w * (f[0][i] - fp[0][i]).abs().max((f[1][i] - fp[1][i]).abs()));
                q[1] = q[1].max(w * (f[2][i] - fp[2][i]).abs());
                q[2] = q[2].max(w * (f[3][i] - fp[3][i]).abs());
            }
        }
        out.push((snap.s, q));
        prev = Some((snap.s, f));
    }
    Ok(out)
}

/// Bounded-seminorm diagnostic: for each proxy the mean over the last quarter
/// of the snapshots may not exceed `holder_growth` times the mean over the
/// first quarter. Means below `holder_noise_floor` count as round-off.
pub fn check_holder_diagnostic(rt: &RescaledTrajectory, tol: &Tolerances) -> Result<CheckResult> {
    let series = holder_series(rt, tol.holder_radius)?;
    if series.len() < 4 {
        return Ok(CheckResult::new("holder_proxy", 0.0, 0.0)
            .details(format!("only {} snapshots; trend not assessed", series.len())));
    }
    let quarter = series.len() / 4;
    let mean = |range: &[(f64, [f64; 3])], k: usize| range.iter().map(|r| r.1[k]).sum::<f64>() / range.len() as f64;
    let names = ["Du", "du/ds", "H"];
    let mut worst = (f64::INFINITY, 0usize);
    let mut details = Vec::new();
    for k in 0..3 {
        let first = mean(&series[..quarter], k);
        let last = mean(&series[series.len() - quarter..], k);
        let bound = tol.holder_growth * first.max(tol.holder_noise_floor);
        let m = if last <= tol.holder_noise_floor { 0.0 } else { (bound - last) / bound };
        if m < worst.0 {
            worst = (m, k);
        }
        details.push(format!("{}: first {first:e} last {last:e}", names[k]));
    }
    Ok(CheckResult::new("holder_proxy", worst.0, 0.0)
        .at(series.last().map(|r| r.0).unwrap_or(0.0), None)
        .details(details.join(", ")))
}

/// Least-squares fit `log y = a - lambda s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub lambda: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub s_start: f64,
}

/// Fits the last half of the samples above `noise_floor`; `None` when fewer
/// than three such samples exist.
pub fn fit_decay(series: &[(f64, f64)], noise_floor: f64) -> Option<DecayFit> {
    let usable: Vec<(f64, f64)> = series.iter().copied().filter(|(_, y)| *y > noise_floor).collect();
    let tail = &usable[usable.len() / 2..];
    if tail.len() < 3 {
        return None;
    }
    let n = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in tail {
        let (dx, dy) = (x - mx, y.ln() - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(DecayFit { lambda: -slope, intercept: my - slope * mx, r_squared, points: tail.len(), s_start: tail[0].0 })
}

/// Exponential decay of `sup |D u~|`: positive fitted rate, `R^2` at least
/// `decay_r2`, and the envelope `sup|D u~(s)| <= sup|D u~(0)| e^{-lambda s / 2}`
/// past the burn-in.
pub fn check_gradient_decay(rt: &RescaledTrajectory, tol: &Tolerances) -> Result<(CheckResult, Option<DecayFit>)> {
    let series: Vec<(f64, f64)> = rt.samples.iter().map(|s| (s.s, s.sup_grad_utilde)).collect();
    let g0 = series.first().map(|p| p.1).ok_or_else(|| Error::Trajectory("no samples recorded".into()))?;
    if g0 <= tol.decay_noise_floor && series.iter().all(|p| p.1 <= tol.decay_noise_floor) {
        return Ok((CheckResult::new("gradient_decay", 0.0, 0.0).details("degenerate: gradient identically negligible"), None));
    }
    // Long runs freeze at a round-off plateau once updates fall below one ulp
    // of u; values within a factor 2 of the series minimum are treated as noise.
    let least = series.iter().map(|p| p.1).filter(|y| *y > 0.0).fold(f64::INFINITY, f64::min);
    let floor = tol.decay_noise_floor.max(2.0 * least);
    let Some(fit) = fit_decay(&series, floor) else {
        return Ok((
            CheckResult::new("gradient_decay", -1.0, 0.0).details("fewer than three samples above the noise floor"),
            None,
        ));
    };
    let mut worst = (f64::INFINITY, 0.0);
    for &(s, y) in series.iter().filter(|p| p.0 >= tol.decay_burn_in) {
        let env = g0 * (-0.5 * fit.lambda * s).exp();
        let m = if y <= floor { 0.0 } else { (env - y) / env };
        if m < worst.0 {
            worst = (m, s);
        }
    }
    if !worst.0.is_finite() {
        worst = (0.0, 0.0);
    }
    let r = CheckResult::new("gradient_decay", worst.0, 0.0)
        .at(worst.1, None)
        .details(format!(
            "lambda {:e}, R^2 {:.6}, {} points from s = {:e}, noise floor {floor:e}",
            fit.lambda, fit.r_squared, fit.points, fit.s_start
        ))
        .fail_if(!(fit.lambda > 0.0), "fitted rate not positive")
        .fail_if(!(fit.r_squared >= tol.decay_r2), "fit R^2 below threshold");
    Ok((r, Some(fit)))
}

/// Limit radius from the final rescaled snapshot, and the sandwich bounds
/// computed from the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub r_inf: f64,
    pub lower: f64,
    pub upper: f64,
    pub oscillation: f64,
    pub sup_grad: f64,
}

/// Roundness of the final `u~`, and `r_inf` within
/// `(|M_0| / |M|)^{1/n} / sup u0 <= r_inf <= (|M_0| / |M|)^{1/n} / inf u0`.
pub fn check_radius(
    rt: &RescaledTrajectory,
    u0: &ScalarField,
    grid: &CapGrid,
    tol: &Tolerances,
) -> Result<(CheckResult, RadiusEstimate)> {
    u0.check_grid(grid)?;
    let last = rt.samples.last().ok_or_else(|| Error::Trajectory("no samples recorded".into()))?;
    let snap = rt.final_snapshot();
    let n = grid.n_dim() as f64;
    let cap = integrate(&ScalarField::constant(grid, 1.0), grid)?;
    let area0 = graph_area(&u0.clone().with_boundary(Boundary::Neumann), grid)?;
    let area_radius = (area0 / cap).powf(1.0 / n);
    let est = RadiusEstimate {
        r_inf: integrate(&snap.utilde, grid)? / cap,
        lower: area_radius / u0.max(),
        upper: area_radius / u0.min(),
        oscillation: snap.utilde.max() - snap.utilde.min(),
        sup_grad: last.sup_grad_utilde,
    };
    let tau = tol.tau_h(grid);
    let m = ((est.r_inf - est.lower) / est.lower).min((est.upper - est.r_inf) / est.upper);
    let r = CheckResult::new("radius", m, tau)
        .at(snap.s, None)
        .details(format!(
            "r_inf {:e} in [{:e}, {:e}]; final oscillation {:e}, sup|Du~| {:e}",
            est.r_inf, est.lower, est.upper, est.oscillation, est.sup_grad
        ))
        .fail_if(!(est.oscillation < tol.sphere_oscillation), "final surface not close enough to a sphere for r_inf")
        .fail_if(!(est.oscillation < tol.roundness), "final oscillation above roundness threshold")
        .fail_if(!(est.sup_grad < tol.final_gradient), "final gradient above threshold");
    Ok((r, est))
}
