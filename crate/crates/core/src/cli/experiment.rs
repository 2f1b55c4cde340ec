//! One experiment: integrate, write the run directory, verify.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::{CPolicy, Config};
use super::io;
use crate::error::{Error, Result};
use crate::flow::{make_initial_data, run_flow_with_context, Horizon, Termination, Trajectory};
use crate::rescale::{rescale_trajectory, run_rescaled_flow, time_map, Direction, RescaleContext, RescaledTrajectory};
use crate::sphere::{CapGrid, Mode, Resolution, ScalarField};
use crate::verify::{
    build_report, check_area_law, check_c0, check_evolution_identities, check_full2d_matches_axisymmetric,
    check_gradient_decay, check_gradient_monotone, check_h_theta, check_holder_diagnostic, check_phidot,
    check_radius, check_two_path, richardson_error, CheckResult, DerivedConstants, EstimateReport, RunMeta,
};

pub const DIRECT_DIR: &str = "direct";
pub const DIRECT_COARSE_DIR: &str = "direct_coarse";
pub const AXISYM_DIR: &str = "axisym";
pub const AXISYM_COARSE_DIR: &str = "axisym_coarse";

/// Runs on other grids that some checks compare against.
#[derive(Debug, Default)]
pub struct Companions {
    /// Direct rescaled runs on the experiment grid and on the halved grid.
    pub direct: Option<(RescaledTrajectory, RescaledTrajectory)>,
    /// Axisymmetric physical runs with the same rings and on the halved grid.
    pub axisym: Option<(Trajectory, Trajectory)>,
}

#[derive(Debug)]
pub struct Outcome {
    pub report: EstimateReport,
    pub out_dir: PathBuf,
}

impl Outcome {
    /// Status line and the process exit code: 0 iff the run completed and
    /// every enabled check passed.
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            0
        } else {
            1
        }
    }
}

fn halved(n_theta: usize) -> usize {
    (n_theta + 1) / 2
}

fn context(cfg: &Config, grid: &CapGrid, u0: &ScalarField) -> Result<RescaleContext> {
    match cfg.rescale.c {
        CPolicy::Midpoint => RescaleContext::midpoint(cfg.flow.alpha, grid.n_dim(), u0),
        CPolicy::Explicit(c) => RescaleContext::explicit(cfg.flow.alpha, grid.n_dim(), c, u0),
    }
    .map_err(|e| Error::Config(format!("rescale.c: {e}")))
}

fn horizon_s(cfg: &Config, ctx: &RescaleContext) -> Result<f64> {
    match cfg.horizon() {
        Horizon::Rescaled(s) => Ok(s),
        Horizon::Time(t) => time_map(t, ctx, Direction::TToS),
    }
}

fn horizon_t(cfg: &Config, ctx: &RescaleContext) -> Result<f64> {
    match cfg.horizon() {
        Horizon::Time(t) => Ok(t),
        Horizon::Rescaled(s) => time_map(s, ctx, Direction::SToT),
    }
}

/// `(t_mid, delta)` of the evolution-identity probe.
pub fn evolution_probe(cfg: &Config, ctx: &RescaleContext) -> Result<(f64, f64)> {
    if let Some(p) = &cfg.verify.evolution {
        return Ok((p.t_mid, p.delta));
    }
    let t_end = horizon_t(cfg, ctx)?;
    let t_mid = (0.5 * t_end).min(time_map(0.5, ctx, Direction::SToT)?);
    Ok((t_mid, 1e-3 * t_mid))
}

pub fn two_path_s(cfg: &Config, ctx: &RescaleContext) -> Result<Vec<f64>> {
    if let Some(s) = &cfg.verify.two_path_s {
        return Ok(s.clone());
    }
    let s_end = horizon_s(cfg, ctx)?;
    Ok(vec![0.25 * s_end, 0.5 * s_end, s_end])
}

/// Snapshot times of the physical run: requested ones, the evolution probe,
/// a regular grid in `s` and the two-path comparison points.
fn snapshot_times(cfg: &Config, ctx: &RescaleContext) -> Result<Vec<f64>> {
    let mut times = cfg.output.snapshot_times.clone();
    if cfg.verify.enabled("evolution_identities") {
        let (t_mid, delta) = evolution_probe(cfg, ctx)?;
        times.extend([t_mid - delta, t_mid, t_mid + delta]);
    }
    let s_end = horizon_s(cfg, ctx)?;
    let spacing = cfg.rescale.snapshot_spacing;
    if spacing > 0.0 {
        let mut k = 1;
        while (k as f64) * spacing < s_end {
            times.push(time_map(k as f64 * spacing, ctx, Direction::SToT)?);
            k += 1;
        }
    }
    if cfg.verify.enabled("two_path_rescaling") {
        for s in two_path_s(cfg, ctx)? {
            times.push(time_map(s, ctx, Direction::SToT)?);
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

fn direct_run(cfg: &Config, grid: &CapGrid, ctx: &RescaleContext, s_values: &[f64]) -> Result<RescaledTrajectory> {
    let u0 = make_initial_data(grid, &cfg.initial.family(), cfg.flow.eps_mc)?;
    let mut p = cfg.flow_params(s_values.to_vec());
    p.horizon = Horizon::Rescaled(horizon_s(cfg, ctx)?);
    run_rescaled_flow(&u0.map(|u| u / ctx.c.exp()), grid, &p, ctx)
}

fn axisym_run(cfg: &Config, n_theta: usize, ctx: &RescaleContext) -> Result<Trajectory> {
    let grid = CapGrid::build(cfg.grid.n_dim, cfg.grid.theta_max, Resolution::axisymmetric(n_theta), Mode::Axisymmetric)?;
    let u0 = make_initial_data(&grid, &cfg.initial.family(), cfg.flow.eps_mc)?;
    let mut p = cfg.flow_params(Vec::new());
    p.horizon = Horizon::Time(horizon_t(cfg, ctx)?);
    run_flow_with_context(&u0, &grid, &p, ctx)
}

fn coarse_grid(cfg: &Config) -> Result<CapGrid> {
    CapGrid::build(cfg.grid.n_dim, cfg.grid.theta_max, cfg.resolution(halved(cfg.grid.n_theta)), cfg.grid.mode)
}

/// Integrates the experiment and any companion runs.
pub fn simulate(cfg: &Config) -> Result<(Trajectory, Companions)> {
    let grid = cfg.build_grid()?;
    let u0 = make_initial_data(&grid, &cfg.initial.family(), cfg.flow.eps_mc)?;
    let ctx = context(cfg, &grid, &u0)?;
    let mut params = cfg.flow_params(snapshot_times(cfg, &ctx)?);
    params.horizon = Horizon::Time(horizon_t(cfg, &ctx)?);
    let traj = run_flow_with_context(&u0, &grid, &params, &ctx)?;
    let mut comp = Companions::default();
    if cfg.verify.enabled("two_path_rescaling") {
        let s = two_path_s(cfg, &ctx)?;
        comp.direct = Some((direct_run(cfg, &grid, &ctx, &s)?, direct_run(cfg, &coarse_grid(cfg)?, &ctx, &s)?));
    }
    if cfg.verify.enabled("full2d_matches_axisymmetric") {
        comp.axisym = Some((axisym_run(cfg, cfg.grid.n_theta, &ctx)?, axisym_run(cfg, halved(cfg.grid.n_theta), &ctx)?));
    }
    Ok((traj, comp))
}

/// Check errors become failed results so one broken check does not hide the
/// others.
fn guarded(name: &str, r: Result<CheckResult>) -> CheckResult {
    r.unwrap_or_else(|e| {
        CheckResult { name: name.into(), passed: false, margin: f64::NAN, tolerance: 0.0, worst_time: f64::NAN, worst_node: None, details: e.to_string() }
    })
}

fn meta(cfg: &Config, traj: &Trajectory) -> RunMeta {
    let g = &traj.grid;
    let s_end = traj.samples.last().map_or(0.0, |s| s.s);
    RunMeta {
        name: cfg.name.clone(),
        n_dim: g.n_dim(),
        theta_max: g.theta_max(),
        mode: g.mode().as_str().into(),
        n_theta: g.n_theta(),
        n_psi: g.n_psi(),
        h_theta: g.h_theta(),
        alpha: traj.ctx.alpha,
        c: traj.ctx.c,
        stepper: format!("{:?}", cfg.flow.stepper).to_lowercase(),
        cfl_safety: cfg.flow.cfl_safety,
        eps_mc: cfg.flow.eps_mc,
        t_end: traj.samples.last().map_or(0.0, |s| s.t),
        s_end,
        steps: traj.steps,
        termination: traj.termination.as_str().into(),
        tau_h: cfg.verify.tolerances.tau_h(g),
    }
}

/// Evaluates the enabled checks. The trajectory's first snapshot stands in
/// for the initial data, so a run directory read back from disk verifies to
/// the same report.
pub fn evaluate(cfg: &Config, traj: &Trajectory, comp: &Companions) -> Result<EstimateReport> {
    let tol = &cfg.verify.tolerances;
    let on = |name: &str| cfg.verify.enabled(name);
    let mut checks = Vec::new();
    let mut k = DerivedConstants::default();

    checks.push(
        CheckResult {
            name: "run_completed".into(),
            passed: traj.termination == Termination::ReachedTEnd,
            margin: 0.0,
            tolerance: 0.0,
            worst_time: traj.samples.last().map_or(f64::NAN, |s| s.t),
            worst_node: None,
            details: format!("terminated: {} after {} steps", traj.termination.as_str(), traj.steps),
        },
    );
    if on("c0_sandwich") {
        checks.push(guarded("c0_sandwich", check_c0(traj, tol)));
    }
    if on("phidot_bounds") {
        checks.push(guarded("phidot_bounds", check_phidot(traj, tol)));
    }
    if on("gradient_monotone") {
        checks.push(guarded("gradient_monotone", check_gradient_monotone(traj, tol)));
    }
    if on("h_theta_band") {
        checks.push(guarded(
            "h_theta_band",
            check_h_theta(traj, tol).map(|(r, c)| {
                k.absorb_initial(&c);
                r
            }),
        ));
    }
    if on("area_law") {
        checks.push(guarded("area_law", check_area_law(traj, tol)));
    }
    if on("evolution_identities") {
        let r = evolution_probe(cfg, &traj.ctx).and_then(|(t_mid, delta)| {
            check_evolution_identities(traj, t_mid, delta, tol).map(|(c, r)| {
                k.evolution_residuals = Some([r.metric, r.inverse_metric, r.normal]);
                c
            })
        });
        checks.push(guarded("evolution_identities", r));
    }
    let rescaled = rescale_trajectory(traj, &traj.ctx);
    if on("holder_proxy") {
        checks.push(guarded("holder_proxy", rescaled.as_ref().map_err(clone_err).and_then(|rt| check_holder_diagnostic(rt, tol))));
    }
    if on("gradient_decay") {
        let r = rescaled.as_ref().map_err(clone_err).and_then(|rt| check_gradient_decay(rt, tol)).map(|(c, fit)| {
            if let Some(f) = fit {
                k.lambda_fit = Some(f.lambda);
                k.r_squared = Some(f.r_squared);
            }
            c
        });
        checks.push(guarded("gradient_decay", r));
    }
    if on("radius") {
        let u0 = &traj.snapshots[0].u;
        let r = rescaled.as_ref().map_err(clone_err).and_then(|rt| check_radius(rt, u0, &traj.grid, tol)).map(|(c, est)| {
            k.r_inf = Some(est.r_inf);
            k.radius_lower = Some(est.lower);
            k.radius_upper = Some(est.upper);
            c
        });
        checks.push(guarded("radius", r));
    }
    if on("two_path_rescaling") {
        let r = match (&comp.direct, &rescaled) {
            (Some((direct, coarse)), Ok(post)) => {
                two_path_s(cfg, &traj.ctx).and_then(|s| check_two_path(post, direct, coarse, &s))
            }
            (None, _) => Err(Error::Trajectory("direct rescaled runs missing".into())),
            (_, Err(e)) => Err(clone_err(e)),
        };
        checks.push(guarded("two_path_rescaling", r));
    }
    if on("full2d_matches_axisymmetric") {
        let r = match &comp.axisym {
            Some((fine, coarse)) => (|| {
                let (a, b) = (&fine.final_snapshot().u, &coarse.final_snapshot().u);
                let err = richardson_error(a, &fine.grid, b, &coarse.grid)?;
                check_full2d_matches_axisymmetric(&traj.final_snapshot().u, &traj.grid, a, &fine.grid, err, tol)
            })(),
            None => Err(Error::Trajectory("axisymmetric companion runs missing".into())),
        };
        checks.push(guarded("full2d_matches_axisymmetric", r));
    }
    build_report(meta(cfg, traj), tol.clone(), checks, k)
}

fn clone_err(e: &Error) -> Error {
    Error::Trajectory(e.to_string())
}

fn write_physical(dir: &Path, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    io::write_timeseries(&dir.join(io::TIMESERIES), &traj.samples)?;
    io::write_snapshots(dir, &traj.grid, &traj.snapshots)
}

fn write_rescaled(dir: &Path, rt: &RescaledTrajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    io::write_rescaled_timeseries(&dir.join(io::RESCALED_TIMESERIES), &rt.samples)?;
    io::write_rescaled_snapshots(dir, &rt.grid, &rt.snapshots)
}

/// Writes the run directory: `config.echo`, `timeseries.csv`, `snap_<i>.csv`,
/// `report.json` and one subdirectory per companion run.
pub fn write_run(dir: &Path, cfg: &Config, traj: &Trajectory, comp: &Companions, report: &EstimateReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(io::CONFIG_ECHO), cfg.echo())?;
    write_physical(dir, traj)?;
    if let Some((fine, coarse)) = &comp.direct {
        write_rescaled(&dir.join(DIRECT_DIR), fine)?;
        write_rescaled(&dir.join(DIRECT_COARSE_DIR), coarse)?;
    }
    if let Some((fine, coarse)) = &comp.axisym {
        write_physical(&dir.join(AXISYM_DIR), fine)?;
        write_physical(&dir.join(AXISYM_COARSE_DIR), coarse)?;
    }
    io::write_report(&dir.join(io::REPORT), report)
}

/// Runs, writes and verifies one experiment.
pub fn run_experiment(cfg: &Config) -> Result<Outcome> {
    let (traj, comp) = simulate(cfg)?;
    let report = evaluate(cfg, &traj, &comp)?;
    let out_dir = cfg.out_dir();
    write_run(&out_dir, cfg, &traj, &comp, &report)?;
    Ok(Outcome { report, out_dir })
}

fn termination_from(s: &str) -> Result<Termination> {
    [Termination::ReachedTEnd, Termination::MeanConvexityLost, Termination::BlowupDetected]
        .into_iter()
        .find(|t| t.as_str() == s)
        .ok_or_else(|| Error::Trajectory(format!("unknown termination `{s}`")))
}

fn load_physical(dir: &Path, grid: &CapGrid, cfg: &Config, ctx: &RescaleContext, facts: &io::RunFacts) -> Result<Trajectory> {
    let samples = io::read_timeseries(&dir.join(io::TIMESERIES))?;
    let snapshots = io::read_snapshots(dir, grid)?
        .into_iter()
        .map(|f| crate::flow::Snapshot { t: f.t, s: f.s, u: f.values })
        .collect();
    Ok(Trajectory {
        params: cfg.flow_params(Vec::new()),
        ctx: *ctx,
        grid: grid.clone(),
        samples,
        snapshots,
        termination: termination_from(&facts.termination)?,
        steps: facts.steps,
    })
}

fn load_rescaled(dir: &Path, grid: &CapGrid, ctx: &RescaleContext) -> Result<RescaledTrajectory> {
    let samples = io::read_rescaled_timeseries(&dir.join(io::RESCALED_TIMESERIES))?;
    let snapshots = io::read_snapshots(dir, grid)?
        .into_iter()
        .map(|f| crate::rescale::RescaledSnapshot { s: f.s, t: f.t, utilde: f.values })
        .collect();
    Ok(RescaledTrajectory { ctx: *ctx, grid: grid.clone(), samples, snapshots, termination: Termination::ReachedTEnd, steps: 0 })
}

/// Re-verifies a run directory written by [`run_experiment`].
pub fn verify_dir(dir: &Path) -> Result<EstimateReport> {
    let cfg = super::config::parse_config(&fs::read_to_string(dir.join(io::CONFIG_ECHO))?, &[])?;
    let facts = io::read_run_facts(&dir.join(io::REPORT))?;
    let grid = cfg.build_grid()?;
    let ctx = RescaleContext::new(cfg.flow.alpha, grid.n_dim(), facts.c)?;
    let traj = load_physical(dir, &grid, &cfg, &ctx, &facts)?;
    let mut comp = Companions::default();
    if cfg.verify.enabled("two_path_rescaling") && dir.join(DIRECT_DIR).is_dir() {
        comp.direct =
            Some((load_rescaled(&dir.join(DIRECT_DIR), &grid, &ctx)?, load_rescaled(&dir.join(DIRECT_COARSE_DIR), &coarse_grid(&cfg)?, &ctx)?));
    }
    if cfg.verify.enabled("full2d_matches_axisymmetric") && dir.join(AXISYM_DIR).is_dir() {
        let axis = |n: usize| {
            CapGrid::build(cfg.grid.n_dim, cfg.grid.theta_max, Resolution::axisymmetric(n), Mode::Axisymmetric)
        };
        let ok = io::RunFacts { c: facts.c, termination: Termination::ReachedTEnd.as_str().into(), steps: 0 };
        comp.axisym = Some((
            load_physical(&dir.join(AXISYM_DIR), &axis(cfg.grid.n_theta)?, &cfg, &ctx, &ok)?,
            load_physical(&dir.join(AXISYM_COARSE_DIR), &axis(halved(cfg.grid.n_theta))?, &cfg, &ctx, &ok)?,
        ));
    }
    evaluate(&cfg, &traj, &comp)
}
