//! Grid convergence study: the same experiment over several `N_theta`,
//! reduced to observed orders.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::Config;
use super::io::{self, fmt};
use crate::error::{Error, Result};
use crate::flow::{make_initial_data, run_flow_with_context, Horizon, Trajectory};
use crate::graph::{embedding_oracle, graph_geometry};
use crate::rescale::{theta, RescaleContext};
use crate::sphere::CapGrid;
use crate::verify::{area_law_residual, richardson_error};

pub const ORDERS: &str = "orders.csv";
pub const ORDER_COLUMNS: [&str; 9] =
    ["quantity", "n_theta_coarse", "n_theta_fine", "h_coarse", "h_fine", "err_coarse", "err_fine", "order", "status"];

/// Expected order and the accepted band around it.
pub const EXPECTED_ORDER: f64 = 2.0;
pub const ORDER_BAND: f64 = 0.2;

/// Errors below this carry no spatial signal.
const SIGNAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OrderRow {
    pub quantity: String,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub h_coarse: f64,
    pub h_fine: f64,
    pub err_coarse: f64,
    pub err_fine: f64,
    pub order: f64,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    OutOfRange,
    /// The error does not shrink with `h`: time stepping or round-off dominates.
    TimeDominated,
    /// No reference for this pair (grids not nested).
    Unavailable,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::OutOfRange => "out_of_range",
            Status::TimeDominated => "time_dominated",
            Status::Unavailable => "unavailable",
        }
    }
}

struct Level {
    grid: CapGrid,
    traj: Trajectory,
    h_discrepancy: f64,
}

fn level(cfg: &Config, n_theta: usize, dir: &Path) -> Result<Level> {
    let grid = CapGrid::build(cfg.grid.n_dim, cfg.grid.theta_max, cfg.resolution(n_theta), cfg.grid.mode)?;
    let u0 = make_initial_data(&grid, &cfg.initial.family(), cfg.flow.eps_mc)?;
    let geo = graph_geometry(&u0, &grid, cfg.flow.alpha)?;
    let oracle = embedding_oracle(&u0, &grid)?;
    let h_discrepancy = geo.mean_curv.iter().zip(&oracle.mean_curv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ctx = RescaleContext::midpoint(cfg.flow.alpha, grid.n_dim(), &u0)?;
    let mut p = cfg.flow_params(Vec::new());
    if let Horizon::Rescaled(s) = p.horizon {
        p.horizon = Horizon::Time(crate::rescale::time_map(s, &ctx, crate::rescale::Direction::SToT)?);
    }
    let traj = run_flow_with_context(&u0, &grid, &p, &ctx)?;
    fs::create_dir_all(dir)?;
    io::write_timeseries(&dir.join(io::TIMESERIES), &traj.samples)?;
    Ok(Level { grid, traj, h_discrepancy })
}

fn pair(quantity: &str, a: &Level, b: &Level, ea: f64, eb: f64) -> OrderRow {
    let (ha, hb) = (a.grid.h_theta(), b.grid.h_theta());
    let order = (ea / eb).ln() / (ha / hb).ln();
    let status = if !ea.is_finite() || !eb.is_finite() {
        Status::Unavailable
    } else if ea.max(eb) < SIGNAL_FLOOR || eb >= 0.5 * ea {
        Status::TimeDominated
    } else if (order - EXPECTED_ORDER).abs() <= ORDER_BAND {
        Status::Ok
    } else {
        Status::OutOfRange
    };
    OrderRow {
        quantity: quantity.into(),
        n_coarse: a.grid.n_theta(),
        n_fine: b.grid.n_theta(),
        h_coarse: ha,
        h_fine: hb,
        err_coarse: ea,
        err_fine: eb,
        order,
        status,
    }
}

/// Final-`u` error per level: against the model solution for constant data,
/// otherwise the Richardson estimate against the next finer level.
fn final_u_errors(cfg: &Config, levels: &[Level]) -> Vec<f64> {
    if cfg.initial.is_constant() {
        return levels
            .iter()
            .map(|l| {
                let ctx = RescaleContext { c: cfg.initial.r0.ln(), ..l.traj.ctx };
                let snap = l.traj.final_snapshot();
                let exact = theta(snap.t, &ctx);
                snap.u.values().iter().map(|u| (u - exact).abs() / exact).fold(0.0, f64::max)
            })
            .collect();
    }
    let mut errs: Vec<f64> = levels
        .windows(2)
        .map(|w| {
            let (c, f) = (&w[0], &w[1]);
            richardson_error(&f.traj.final_snapshot().u, &f.grid, &c.traj.final_snapshot().u, &c.grid)
                .map(|e| 3.0 * e)
                .unwrap_or(f64::NAN)
        })
        .collect();
    errs.push(f64::NAN);
    errs
}

/// Runs every level (concurrently, each into `out_dir/n_theta_<N>`) and
/// writes `orders.csv`.
pub fn convergence_study(cfg: &Config, grids: &[usize], out_dir: &Path) -> Result<Vec<OrderRow>> {
    if grids.len() < 3 {
        return Err(Error::Config(format!("need >= 3 grids, got {}", grids.len())));
    }
    if grids.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("grids must be strictly increasing".into()));
    }
    let dirs: Vec<PathBuf> = grids.iter().map(|n| out_dir.join(format!("n_theta_{n}"))).collect();
    let levels: Vec<Level> = std::thread::scope(|s| {
        let handles: Vec<_> = grids.iter().zip(&dirs).map(|(n, d)| s.spawn(move || level(cfg, *n, d))).collect();
        handles.into_iter().map(|h| h.join().expect("study worker panicked")).collect::<Result<Vec<_>>>()
    })?;

    let u_err = final_u_errors(cfg, &levels);
    let area: Vec<f64> = levels.iter().map(|l| area_law_residual(&l.traj).map_or(f64::NAN, |r| r.max_relative)).collect();
    let mut rows = Vec::new();
    for w in levels.windows(2) {
        rows.push(pair("h_oracle_discrepancy", &w[0], &w[1], w[0].h_discrepancy, w[1].h_discrepancy));
    }
    // Self-convergence errors use one level more than the exact ones.
    let u_pairs = if cfg.initial.is_constant() { levels.len() - 1 } else { levels.len() - 2 };
    for k in 0..u_pairs {
        rows.push(pair("final_u", &levels[k], &levels[k + 1], u_err[k], u_err[k + 1]));
    }
    for k in 0..levels.len() - 1 {
        rows.push(pair("area_law_residual", &levels[k], &levels[k + 1], area[k], area[k + 1]));
    }
    write_orders(&out_dir.join(ORDERS), &rows)?;
    Ok(rows)
}

pub fn write_orders(path: &Path, rows: &[OrderRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ORDER_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.quantity.clone(),
            r.n_coarse.to_string(),
            r.n_fine.to_string(),
            fmt(r.h_coarse),
            fmt(r.h_fine),
            fmt(r.err_coarse),
            fmt(r.err_fine),
            fmt(r.order),
            r.status.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
