//! C ABI over the `coneflow` simulator.
//!
//! Objects are opaque handles created by `*_new`/`cf_run_flow` and released by
//! the matching `*_free`. Every fallible call returns a [`CfStatus`]; the text
//! of the last error on the calling thread is available through
//! [`cf_last_error_message`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use coneflow::flow::{run_flow, FlowParams, Horizon, Termination, Trajectory};
use coneflow::graph::graph_geometry;
use coneflow::sphere::{integrate, Boundary, CapGrid, Mode, Resolution, ScalarField};
use coneflow::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfStatus {
    CfOk = 0,
    CfNullPointer = 1,
    CfInvalidArgument = 2,
    CfConeNotConvex = 3,
    CfNotStarShaped = 4,
    CfNotMeanConvex = 5,
    CfNumericalFailure = 6,
    CfBufferTooSmall = 7,
    CfPanic = 8,
}

/// Grid layout selector for [`cf_grid_new`].
pub const CF_MODE_AXISYMMETRIC: u32 = 0;
pub const CF_MODE_FULL2D: u32 = 1;

/// Opaque discretized cap.
pub struct CfGrid {
    inner: CapGrid,
}

/// Opaque recorded flow run.
pub struct CfTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> CfStatus {
    match e {
        Error::ConeNotConvex { .. } => CfStatus::CfConeNotConvex,
        Error::NotStarShaped { .. } => CfStatus::CfNotStarShaped,
        Error::InitialNotMeanConvex { .. } | Error::MeanConvexityLost { .. } => CfStatus::CfNotMeanConvex,
        Error::BlowupDetected { .. } | Error::NonFinite { .. } => CfStatus::CfNumericalFailure,
        _ => CfStatus::CfInvalidArgument,
    }
}

struct Fail(CfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CfStatus::CfNullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CfStatus::CfOk
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CfStatus::CfPanic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

fn field(grid: &CapGrid, values: &[f64]) -> Result<ScalarField, Fail> {
    if values.len() != grid.len() {
        return Err(Fail(
            CfStatus::CfInvalidArgument,
            format!("{} values for a grid of {} nodes", values.len(), grid.len()),
        ));
    }
    Ok(ScalarField::new(grid, values.to_vec(), Boundary::Neumann)?)
}

/// Builds a cap grid. `n_psi` is ignored for axisymmetric grids.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cf_grid_new(
    n_dim: usize,
    theta_max: f64,
    n_theta: usize,
    n_psi: usize,
    mode: u32,
    out: *mut *mut CfGrid,
) -> CfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (mode, res) = match mode {
            CF_MODE_AXISYMMETRIC => (Mode::Axisymmetric, Resolution::axisymmetric(n_theta)),
            CF_MODE_FULL2D => (Mode::Full2d, Resolution::full2d(n_theta, n_psi)),
            m => return Err(Fail(CfStatus::CfInvalidArgument, format!("unknown mode {m}"))),
        };
        let grid = CapGrid::build(n_dim, theta_max, res, mode)?;
        *out = Box::into_raw(Box::new(CfGrid { inner: grid }));
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a handle from [`cf_grid_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cf_grid_free(grid: *mut CfGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cf_grid_node_count(grid: *const CfGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.inner.len())
}

/// Quadrature of `values` over the cap against the round measure.
///
/// # Safety
/// `grid` must be a live handle, `values` must point to `len` doubles and
/// `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn cf_grid_integrate(grid: *const CfGrid, values: *const f64, len: usize, out: *mut f64) -> CfStatus {
    guard(|| {
        let g = &grid.as_ref().ok_or_else(|| null("grid"))?.inner;
        let f = field(g, slice(values, len, "values")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = integrate(&f, g)?;
        Ok(())
    })
}

/// Mean curvature of the radial graph `u`, one value per node.
///
/// # Safety
/// `u` and `h_out` must point to `len` readable and writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_graph_mean_curvature(
    grid: *const CfGrid,
    u: *const f64,
    len: usize,
    h_out: *mut f64,
) -> CfStatus {
    guard(|| {
        let g = &grid.as_ref().ok_or_else(|| null("grid"))?.inner;
        let f = field(g, slice(u, len, "u")?)?;
        let out = slice_mut(h_out, len, "h_out")?;
        let geo = graph_geometry(&f, g, 0.0)?;
        out.copy_from_slice(&geo.mean_curv);
        Ok(())
    })
}

/// Integrates the flow from `u0` to `t_end` with default stepping and
/// records every `record_every` steps.
///
/// # Safety
/// `u0` must point to `len` doubles and `out` to writable storage for one
/// handle.
#[no_mangle]
pub unsafe extern "C" fn cf_run_flow(
    grid: *const CfGrid,
    u0: *const f64,
    len: usize,
    alpha: f64,
    t_end: f64,
    record_every: usize,
    out: *mut *mut CfTrajectory,
) -> CfStatus {
    guard(|| {
        let g = &grid.as_ref().ok_or_else(|| null("grid"))?.inner;
        let f = field(g, slice(u0, len, "u0")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut p = FlowParams::new(alpha, Horizon::Time(t_end));
        p.record_every = record_every;
        let traj = run_flow(&f, g, &p)?;
        *out = Box::into_raw(Box::new(CfTrajectory { inner: traj }));
        Ok(())
    })
}

/// Number of recorded samples, or 0 for a null handle.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cf_traj_sample_count(traj: *const CfTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.samples.len())
}

/// Number of values in one sample row.
#[no_mangle]
pub extern "C" fn cf_traj_sample_width() -> usize {
    coneflow::flow::Sample::COLUMNS.len()
}

/// Copies sample `index` into `row` in timeseries column order.
///
/// # Safety
/// `row` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_traj_sample(traj: *const CfTrajectory, index: usize, row: *mut f64, len: usize) -> CfStatus {
    guard(|| {
        let t = &traj.as_ref().ok_or_else(|| null("traj"))?.inner;
        let s = t
            .samples
            .get(index)
            .ok_or_else(|| Fail(CfStatus::CfInvalidArgument, format!("sample {index} out of range")))?;
        let vals = s.to_row();
        if len < vals.len() {
            return Err(Fail(CfStatus::CfBufferTooSmall, format!("need {} doubles", vals.len())));
        }
        slice_mut(row, len, "row")?[..vals.len()].copy_from_slice(&vals);
        Ok(())
    })
}

/// 1 if the run reached its end time, 0 if it stopped early or `traj` is null.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cf_traj_completed(traj: *const CfTrajectory) -> i32 {
    traj.as_ref().map_or(0, |t| (t.inner.termination == Termination::ReachedTEnd) as i32)
}

/// Copies the final radius field into `out` and its time into `t_out` when
/// non-null.
///
/// # Safety
/// `out` must point to `len` writable doubles; `t_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn cf_traj_final_u(traj: *const CfTrajectory, out: *mut f64, len: usize, t_out: *mut f64) -> CfStatus {
    guard(|| {
        let t = &traj.as_ref().ok_or_else(|| null("traj"))?.inner;
        let snap = t.final_snapshot();
        if len < snap.u.len() {
            return Err(Fail(CfStatus::CfBufferTooSmall, format!("need {} doubles", snap.u.len())));
        }
        slice_mut(out, len, "out")?[..snap.u.len()].copy_from_slice(snap.u.values());
        if let Some(tp) = t_out.as_mut() {
            *tp = snap.t;
        }
        Ok(())
    })
}

/// # Safety
/// `traj` must be null or a handle from [`cf_run_flow`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cf_traj_free(traj: *mut CfTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to fit, into `buf`. Returns the full message length without the
/// terminator; pass a null `buf` to query it.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cf_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}
