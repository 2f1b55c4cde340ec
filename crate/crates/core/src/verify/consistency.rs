//! Cross-run comparisons: post-hoc versus direct rescaling, and the 2-D grid
//! versus the axisymmetric one.

use super::{CheckResult, Tolerances};
use crate::error::{Error, Result};
use crate::rescale::RescaledTrajectory;
use crate::sphere::{CapGrid, Mode, ScalarField};

/// Differences below this are round-off from different step sequences.
const ROUNDOFF_FLOOR: f64 = 1e-12;

/// Fine-grid index of coarse node `i` when the fine grid halves `h_theta`.
fn fine_index(coarse: &CapGrid, fine: &CapGrid, i: usize) -> usize {
    match coarse.mode() {
        Mode::Axisymmetric => 2 * i,
        Mode::Full2d => {
            if i == 0 {
                0
            } else {
                let j = coarse.ring_of(i);
                let k = (i - 1) % coarse.n_psi();
                fine.index2(2 * j, k as isize)
            }
        }
    }
}

fn check_nested(coarse: &CapGrid, fine: &CapGrid) -> Result<()> {
    let nested = coarse.mode() == fine.mode()
        && coarse.n_dim() == fine.n_dim()
        && coarse.theta_max() == fine.theta_max()
        && coarse.n_psi() == fine.n_psi()
        && fine.n_theta() == 2 * coarse.n_theta() - 1;
    if !nested {
        return Err(Error::InvalidGrid("grids are not nested by halving h_theta".into()));
    }
    Ok(())
}

/// Richardson estimate `max |u_fine - u_coarse| / 3` of the fine-grid error
/// of a second-order scheme, over the shared nodes.
pub fn richardson_error(fine: &ScalarField, fine_grid: &CapGrid, coarse: &ScalarField, coarse_grid: &CapGrid) -> Result<f64> {
    fine.check_grid(fine_grid)?;
    coarse.check_grid(coarse_grid)?;
    check_nested(coarse_grid, fine_grid)?;
    let mut d = 0.0_f64;
    for i in 0..coarse_grid.len() {
        d = d.max((fine.values()[fine_index(coarse_grid, fine_grid, i)] - coarse.values()[i]).abs());
    }
    Ok(d / 3.0)
}

/// Post-hoc rescaled and directly integrated `u~` agree at each requested
/// `s` within twice the direct run's discretization error, estimated against
/// a run on the grid with twice the spacing.
pub fn check_two_path(
    post: &RescaledTrajectory,
    direct: &RescaledTrajectory,
    coarse: &RescaledTrajectory,
    s_values: &[f64],
) -> Result<CheckResult> {
    if s_values.is_empty() {
        return Err(Error::InvalidParam { name: "s_values", reason: "empty".into() });
    }
    let missing = |s: f64| Error::Trajectory(format!("no snapshot at s = {s}"));
    let mut worst = (f64::INFINITY, 0.0, None);
    let mut details = Vec::new();
    for &s in s_values {
        let a = post.snapshot_near(s).ok_or_else(|| missing(s))?;
        let b = direct.snapshot_near(s).ok_or_else(|| missing(s))?;
        let c = coarse.snapshot_near(s).ok_or_else(|| missing(s))?;
        a.utilde.check_grid(&direct.grid)?;
        let (mut diff, mut node) = (0.0_f64, 0);
        for (i, (x, y)) in a.utilde.values().iter().zip(b.utilde.values()).enumerate() {
            if (x - y).abs() > diff {
                diff = (x - y).abs();
                node = i;
            }
        }
        let err = richardson_error(&b.utilde, &direct.grid, &c.utilde, &coarse.grid)?;
        let bound = 2.0 * err + ROUNDOFF_FLOOR;
        let m = (bound - diff) / bound;
        if m < worst.0 {
            worst = (m, s, Some(node));
        }
        details.push(format!("s {s}: diff {diff:e}, discretization error {err:e}"));
    }
    Ok(CheckResult::new("two_path_rescaling", worst.0, 0.0).at(worst.1, worst.2).details(details.join("; ")))
}

/// Largest spread of values along a ring; zero for axisymmetric grids.
pub fn axisymmetry_deviation(u: &ScalarField, grid: &CapGrid) -> Result<f64> {
    u.check_grid(grid)?;
    if grid.mode() == Mode::Axisymmetric {
        return Ok(0.0);
    }
    let mut dev = 0.0_f64;
    for j in 1..grid.n_theta() {
        let ring = (0..grid.n_psi()).map(|k| u.values()[grid.index2(j, k as isize)]);
        let (lo, hi) = ring.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        dev = dev.max(hi - lo);
    }
    Ok(dev)
}

/// A 2-D run of axisymmetric data stays axisymmetric to `1e-12` and agrees
/// with the axisymmetric run within `discretization_error`.
pub fn check_full2d_matches_axisymmetric(
    u2d: &ScalarField,
    grid2d: &CapGrid,
    u1d: &ScalarField,
    grid1d: &CapGrid,
    discretization_error: f64,
    _tol: &Tolerances,
) -> Result<CheckResult> {
    u2d.check_grid(grid2d)?;
    u1d.check_grid(grid1d)?;
    if grid2d.mode() != Mode::Full2d
        || grid1d.mode() != Mode::Axisymmetric
        || grid2d.n_theta() != grid1d.n_theta()
        || grid2d.theta_max() != grid1d.theta_max()
    {
        return Err(Error::InvalidGrid("need a full2d and an axisymmetric grid with the same rings".into()));
    }
    let spread = axisymmetry_deviation(u2d, grid2d)?;
    let mut diff = (u2d.values()[0] - u1d.values()[0]).abs();
    let mut node = 0;
    for i in 1..grid2d.len() {
        let d = (u2d.values()[i] - u1d.values()[grid2d.ring_of(i)]).abs();
        if d > diff {
            diff = d;
            node = i;
        }
    }
    let bound = discretization_error + ROUNDOFF_FLOOR;
    Ok(CheckResult::new("full2d_matches_axisymmetric", (bound - diff) / bound, 0.0)
        .at(f64::NAN, Some(node))
        .details(format!("ring spread {spread:e}, max difference {diff:e}, allowed {bound:e}"))
        .fail_if(!(spread <= 1e-12), "2-D run lost axial symmetry"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{make_initial_data, run_flow, FlowParams, Horizon, InitialFamily};
    use crate::rescale::{rescale_trajectory, run_rescaled_flow, RescaleContext};
    use crate::sphere::Resolution;
    use std::f64::consts::FRAC_PI_3;

    fn axis(nt: usize) -> CapGrid {
        CapGrid::build(2, FRAC_PI_3, Resolution::axisymmetric(nt), Mode::Axisymmetric).unwrap()
    }

    #[test]
    fn two_paths_agree() {
        let s_values = [0.25, 0.5];
        let run = |nt: usize| {
            let g = axis(nt);
            let u0 = make_initial_data(&g, &InitialFamily::default(), 1e-8).unwrap();
            let ctx = RescaleContext::midpoint(1.0, 2, &u0).unwrap();
            let mut p = FlowParams::new(1.0, Horizon::Rescaled(0.5));
            p.snapshot_times = s_values.to_vec();
            p.record_every = 100;
            let direct = run_rescaled_flow(&u0.map(|u| u / ctx.c.exp()), &g, &p, &ctx).unwrap();
            (g, u0, ctx, direct)
        };
        let (g, u0, ctx, direct) = run(41);
        let (_, _, _, coarse) = run(21);
        let mut p = FlowParams::new(1.0, Horizon::Rescaled(0.5));
        p.snapshot_times =
            s_values.iter().map(|s| crate::rescale::time_map(*s, &ctx, crate::rescale::Direction::SToT).unwrap()).collect();
        p.record_every = 100;
        let phys = run_flow(&u0, &g, &p).unwrap();
        let post = rescale_trajectory(&phys, &ctx).unwrap();
        let r = check_two_path(&post, &direct, &coarse, &s_values).unwrap();
        assert!(r.passed, "{r:?}");

        // Corrupt the post-hoc path by a wrong Theta.
        let mut bad = post.clone();
        for s in bad.snapshots.iter_mut() {
            s.utilde = s.utilde.map(|x| x * 1.001);
        }
        assert!(!check_two_path(&bad, &direct, &coarse, &s_values).unwrap().passed);
    }

    #[test]
    fn full2d_comparison() {
        let g1 = axis(11);
        let g2 = CapGrid::build(2, FRAC_PI_3, Resolution::full2d(11, 8), Mode::Full2d).unwrap();
        let f1 = make_initial_data(&g1, &InitialFamily::default(), 1e-8).unwrap();
        let f2 = make_initial_data(&g2, &InitialFamily::default(), 1e-8).unwrap();
        let r = check_full2d_matches_axisymmetric(&f2, &g2, &f1, &g1, 0.0, &Tolerances::default()).unwrap();
        assert!(r.passed, "{r:?}");
        let bumped = f2.map(|x| x * 1.001);
        assert!(!check_full2d_matches_axisymmetric(&bumped, &g2, &f1, &g1, 1e-6, &Tolerances::default()).unwrap().passed);
        let mut v = f2.values().to_vec();
        v[3] += 1e-9;
        let skew = ScalarField::new(&g2, v, crate::sphere::Boundary::Neumann).unwrap();
        assert!(!check_full2d_matches_axisymmetric(&skew, &g2, &f1, &g1, 1e-6, &Tolerances::default()).unwrap().passed);
        assert!(axisymmetry_deviation(&skew, &g2).unwrap() > 0.0);
    }

    #[test]
    fn richardson_requires_nesting() {
        let (a, b) = (axis(11), axis(31));
        assert!(richardson_error(&ScalarField::constant(&b, 1.0), &b, &ScalarField::constant(&a, 1.0), &a).is_err());
        let c = axis(21);
        assert_eq!(richardson_error(&ScalarField::constant(&c, 1.0), &c, &ScalarField::constant(&a, 1.0), &a).unwrap(), 0.0);
    }
}
