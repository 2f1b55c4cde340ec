//! Second-order finite differences on a [`CapGrid`]: covariant gradient and
//! Hessian against the round metric, quadrature, and the discrete Neumann
//! residual.

use crate::error::{Error, Result};

use super::field::{Boundary, CovectorField, ScalarField, Sym2, SymTensorField};
use super::grid::{CapGrid, Mode};

/// First and second covariant derivatives of a field at one node, in the node
/// chart.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub grad: [f64; 2],
    pub hess: Sym2,
}

/// Orientation of the Cartesian chart used at the full2d pole.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PoleFrame {
    /// x-axis along psi = 0.
    Standard,
    /// x-axis along the ray of the lexicographically smallest rotation of the
    /// first ring. Invariants computed in this frame are bit-identical under
    /// cyclic shifts of the data in psi.
    Canonical,
}

fn check_input(f: &ScalarField, grid: &CapGrid) -> Result<()> {
    f.check_grid(grid)?;
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { node, value });
    }
    Ok(())
}

/// Covariant gradient. Raised components and `|Df|^2` are cached.
pub fn gradient(f: &ScalarField, grid: &CapGrid) -> Result<CovectorField> {
    check_input(f, grid)?;
    let jets = jets(f.values(), grid, f.boundary(), PoleFrame::Standard);
    Ok(CovectorField::from_lower(grid, jets.iter().map(|j| j.grad).collect()))
}

/// Covariant Hessian `D_j D_i f` with the round-metric Christoffel symbols.
pub fn hessian(f: &ScalarField, grid: &CapGrid) -> Result<SymTensorField> {
    check_input(f, grid)?;
    let jets = jets(f.values(), grid, f.boundary(), PoleFrame::Standard);
    Ok(SymTensorField::new(grid, jets.iter().map(|j| j.hess).collect()))
}

/// `sum_i w_i f_i` in node order.
pub fn integrate(f: &ScalarField, grid: &CapGrid) -> Result<f64> {
    f.check_grid(grid)?;
    Ok(integrate_values(f.values(), grid))
}

pub(crate) fn integrate_values(values: &[f64], grid: &CapGrid) -> f64 {
    values.iter().zip(grid.weights()).map(|(v, w)| v * w).sum()
}

/// Largest one-sided second-order estimate of `|d f / d theta|` over the
/// boundary nodes.
pub fn neumann_residual(f: &ScalarField, grid: &CapGrid) -> Result<f64> {
    f.check_grid(grid)?;
    let v = f.values();
    let h = grid.h_theta();
    let nt = grid.n_theta();
    let one_sided = |a: f64, b: f64, c: f64| ((3.0 * a - 4.0 * b + c) / (2.0 * h)).abs();
    let r = match grid.mode() {
        Mode::Axisymmetric => one_sided(v[nt - 1], v[nt - 2], v[nt - 3]),
        Mode::Full2d => (0..grid.n_psi() as isize)
            .map(|k| {
                one_sided(
                    v[grid.index2(nt - 1, k)],
                    v[grid.index2(nt - 2, k)],
                    v[grid.index2(nt - 3, k)],
                )
            })
            .fold(0.0, f64::max),
    };
    Ok(r)
}

pub(crate) fn jets(values: &[f64], grid: &CapGrid, bc: Boundary, frame: PoleFrame) -> Vec<Jet> {
    let mut out = vec![Jet::default(); grid.len()];
    jets_into(values, grid, bc, frame, &mut out);
    out
}

pub(crate) fn jets_into(
    values: &[f64],
    grid: &CapGrid,
    bc: Boundary,
    frame: PoleFrame,
    out: &mut [Jet],
) {
    match grid.mode() {
        Mode::Axisymmetric => axisymmetric_jets(values, grid, bc, out),
        Mode::Full2d => full2d_jets(values, grid, bc, frame, out),
    }
}

/// `(d_theta f, d_theta^2 f)` at ring `j` from the values along one meridian,
/// `line(i)` returning the value on ring `i`.
#[inline]
fn theta_derivs(j: usize, n: usize, h: f64, bc: Boundary, line: impl Fn(usize) -> f64) -> (f64, f64) {
    let h2 = h * h;
    if j + 1 < n {
        let (a, b, c) = (line(j - 1), line(j), line(j + 1));
        return ((c - a) / (2.0 * h), (c - 2.0 * b + a) / h2);
    }
    match bc {
        // Ghost value f(theta_max + h) := f(theta_max - h).
        Boundary::Neumann => (0.0, 2.0 * (line(j - 1) - line(j)) / h2),
        Boundary::Free => {
            let (f0, f1, f2) = (line(j), line(j - 1), line(j - 2));
            let d1 = (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * h);
            let d2 = if j >= 3 {
                (2.0 * f0 - 5.0 * f1 + 4.0 * f2 - line(j - 3)) / h2
            } else {
                (f0 - 2.0 * f1 + f2) / h2
            };
            (d1, d2)
        }
    }
}

fn axisymmetric_jets(f: &[f64], grid: &CapGrid, bc: Boundary, out: &mut [Jet]) {
    let n = grid.n_theta();
    let h = grid.h_theta();
    // Pole: even reflection f(-h) = f(h); every direction sees f_theta_theta.
    let d2 = 2.0 * (f[1] - f[0]) / (h * h);
    out[0] = Jet { grad: [0.0, 0.0], hess: Sym2::diag(d2, d2) };
    for j in 1..n {
        let (d1, d2) = theta_derivs(j, n, h, bc, |i| f[i]);
        let sc = grid.ring_sin(j) * grid.ring_cos(j);
        out[j] = Jet { grad: [d1, 0.0], hess: Sym2::diag(d2, sc * d1) };
    }
}

fn full2d_jets(f: &[f64], grid: &CapGrid, bc: Boundary, frame: PoleFrame, out: &mut [Jet]) {
    let n = grid.n_theta();
    let np = grid.n_psi() as isize;
    let h = grid.h_theta();
    let hp = grid.h_psi();
    let at = |j: usize, k: isize| f[grid.index2(j, k)];
    let d_psi = |j: usize, k: isize| {
        if j == 0 {
            0.0
        } else {
            (at(j, k + 1) - at(j, k - 1)) / (2.0 * hp)
        }
    };

    out[0] = pole_jet(f, grid, frame);

    for j in 1..n {
        let s = grid.ring_sin(j);
        let c = grid.ring_cos(j);
        for k in 0..np {
            let (ft, ftt) = theta_derivs(j, n, h, bc, |i| at(i, k));
            let fp = d_psi(j, k);
            let fpp = (at(j, k + 1) - 2.0 * at(j, k) + at(j, k - 1)) / (hp * hp);
            let ftp = if j + 1 < n {
                (d_psi(j + 1, k) - d_psi(j - 1, k)) / (2.0 * h)
            } else {
                match bc {
                    Boundary::Neumann => 0.0,
                    Boundary::Free => {
                        (3.0 * fp - 4.0 * d_psi(j - 1, k) + d_psi(j - 2, k)) / (2.0 * h)
                    }
                }
            };
            // Gamma^psi_{theta psi} = cot theta, Gamma^theta_{psi psi} = -sin cos.
            let hess = Sym2::new(ftt, ftp - (c / s) * fp, fpp + s * c * ft);
            out[grid.index2(j, k)] = Jet { grad: [ft, fp], hess };
        }
    }
}

/// Index of the first element of the lexicographically smallest rotation.
fn canonical_start(ring: &[f64]) -> usize {
    let n = ring.len();
    let mut best = 0;
    for cand in 1..n {
        for off in 0..n {
            let a = ring[(cand + off) % n];
            let b = ring[(best + off) % n];
            match a.total_cmp(&b) {
                std::cmp::Ordering::Less => {
                    best = cand;
                    break;
                }
                std::cmp::Ordering::Greater => break,
                std::cmp::Ordering::Equal => {}
            }
        }
    }
    best
}

/// Quadratic fit through the pole and the first ring, read off from the
/// ring's Fourier modes 0, 1 and 2, expressed in geodesic normal coordinates.
fn pole_jet(f: &[f64], grid: &CapGrid, frame: PoleFrame) -> Jet {
    let np = grid.n_psi();
    let h = grid.h_theta();
    let f0 = f[0];
    let ring = &f[1..1 + np];
    let start = match frame {
        PoleFrame::Standard => 0,
        PoleFrame::Canonical => canonical_start(ring),
    };
    let (cos_t, sin_t) = grid.trig_tables();
    let (mut mean, mut z1r, mut z1i, mut z2r, mut z2i) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for m in 0..np {
        let d = ring[(start + m) % np] - f0;
        let m2 = (2 * m) % np;
        mean += d;
        z1r += d * cos_t[m];
        z1i -= d * sin_t[m];
        z2r += d * cos_t[m2];
        z2i -= d * sin_t[m2];
    }
    let inv_n = 1.0 / np as f64;
    mean *= inv_n;
    let (z1r, z1i, z2r, z2i) = (2.0 * inv_n * z1r, 2.0 * inv_n * z1i, 2.0 * inv_n * z2r, 2.0 * inv_n * z2i);
    let h2 = h * h;
    let a = z1r / h;
    let b = -z1i / h;
    let trace = 4.0 * mean / h2;
    let dev = 2.0 * z2r / h2;
    let off = -2.0 * z2i / h2;
    Jet {
        grad: [a, b],
        hess: Sym2::new(0.5 * trace + dev, off, 0.5 * trace - dev),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::grid::Resolution;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn axis(n: usize, tmax: f64, nt: usize) -> CapGrid {
        CapGrid::build(n, tmax, Resolution::axisymmetric(nt), Mode::Axisymmetric).unwrap()
    }

    fn full(tmax: f64, nt: usize, np: usize) -> CapGrid {
        CapGrid::build(2, tmax, Resolution::full2d(nt, np), Mode::Full2d).unwrap()
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        for g in [axis(2, 1.0, 31), axis(3, FRAC_PI_2, 31), full(1.0, 21, 16)] {
            let f = ScalarField::constant(&g, 3.5);
            let d = gradient(&f, &g).unwrap();
            assert!(d.norm2().iter().all(|v| *v == 0.0));
            let hs = hessian(&f, &g).unwrap();
            assert!(hs.comps().iter().all(|t| t.max_abs() == 0.0));
        }
    }

    #[test]
    fn hemisphere_and_cap_areas() {
        let g = axis(2, FRAC_PI_2, 101);
        let one = ScalarField::constant(&g, 1.0);
        let a = integrate(&one, &g).unwrap();
        assert!((a / (2.0 * PI) - 1.0).abs() < 1e-3);

        let g = axis(2, FRAC_PI_3, 201);
        let one = ScalarField::constant(&g, 1.0);
        let a = integrate(&one, &g).unwrap();
        // Antiderivative of 2 pi sin: 2 pi (1 - cos theta_max) = pi.
        assert!((a / PI - 1.0).abs() < 1e-4);
    }

    #[test]
    fn integrates_cos_theta_on_hemisphere() {
        let g = axis(2, FRAC_PI_2, 201);
        let f = ScalarField::from_fn(&g, Boundary::Free, |t, _| t.cos()).unwrap();
        // int_0^{pi/2} 2 pi sin cos = pi.
        assert!((integrate(&f, &g).unwrap() - PI).abs() < 1e-4);
    }

    #[test]
    fn gradient_of_cos_theta() {
        let g = axis(2, FRAC_PI_2, 101);
        let f = ScalarField::from_fn(&g, Boundary::Free, |t, _| t.cos()).unwrap();
        let d = gradient(&f, &g).unwrap();
        let h = g.h_theta();
        for (i, node) in g.nodes().iter().enumerate() {
            let exact = -node.theta.sin();
            assert!((d.lower()[i][0] - exact).abs() < 2.0 * h * h, "node {i}");
            assert!((d.norm2()[i] - exact * exact).abs() < 4.0 * h * h);
        }
        assert_eq!(d.lower()[0][0], 0.0);
    }

    #[test]
    fn gradient_full2d_linear_function() {
        let g = full(1.2, 41, 32);
        let f = ScalarField::from_fn(&g, Boundary::Free, |t, p| t.sin() * p.cos()).unwrap();
        let d = gradient(&f, &g).unwrap();
        let mut err = 0.0_f64;
        for (i, node) in g.nodes().iter().enumerate().skip(1) {
            let (t, p) = (node.theta, node.psi);
            err = err.max((d.lower()[i][0] - t.cos() * p.cos()).abs());
            err = err.max((d.lower()[i][1] + t.sin() * p.sin()).abs());
        }
        assert!(err < 0.25 * g.h_psi().powi(2), "err {err}");
        // Pole, Cartesian frame: f = x + O(r^3).
        assert!((d.lower()[0][0] - 1.0).abs() < 1e-3);
        assert!(d.lower()[0][1].abs() < 1e-12);
    }

    #[test]
    fn hessian_of_cos_theta_is_minus_cos_sigma() {
        let g = axis(2, FRAC_PI_2, 201);
        let f = ScalarField::from_fn(&g, Boundary::Free, |t, _| t.cos()).unwrap();
        let hs = hessian(&f, &g).unwrap();
        let h = g.h_theta();
        for (i, node) in g.nodes().iter().enumerate() {
            let c = node.theta.cos();
            let s22 = g.angular_metric(i);
            let t = hs.comps()[i];
            assert!((t.a11 + c).abs() < 4.0 * h * h, "node {i}: {}", t.a11);
            assert!((t.a22 + c * s22).abs() < 4.0 * h * h);
        }
        let tr = hs.trace_round(&g);
        for (i, node) in g.nodes().iter().enumerate() {
            assert!((tr[i] + 2.0 * node.theta.cos()).abs() < 1e-4, "node {i}");
        }
    }

    #[test]
    fn laplacian_eigenfunction_in_higher_dimension() {
        // Delta cos theta = -n cos theta on S^n.
        let g = axis(4, 1.0, 201);
        let f = ScalarField::from_fn(&g, Boundary::Free, |t, _| t.cos()).unwrap();
        let tr = hessian(&f, &g).unwrap().trace_round(&g);
        for (i, node) in g.nodes().iter().enumerate() {
            assert!((tr[i] + 4.0 * node.theta.cos()).abs() < 1e-4, "node {i}");
        }
    }

    #[test]
    fn hessian_full2d_restricted_linear_function() {
        // z = cos theta and x = sin theta cos psi both satisfy D^2 f = -f sigma.
        let g = full(1.2, 41, 32);
        for which in 0..2 {
            let f = ScalarField::from_fn(&g, Boundary::Free, |t, p| {
                if which == 0 { t.cos() } else { t.sin() * p.cos() }
            })
            .unwrap();
            let hs = hessian(&f, &g).unwrap();
            let mut err = 0.0_f64;
            for (i, v) in f.values().iter().enumerate() {
                let sigma = crate::sphere::field::round_metric(&g, i);
                err = err.max((hs.comps()[i] + sigma * *v).max_abs());
            }
            assert!(err < 2e-2, "case {which}: err {err}");
        }
    }

    #[test]
    fn neumann_ghost_gives_zero_slope() {
        let g = axis(2, 1.0, 41);
        let f = ScalarField::from_fn(&g, Boundary::Neumann, |t, _| (PI * t).cos()).unwrap();
        let d = gradient(&f, &g).unwrap();
        assert_eq!(d.lower()[40][0], 0.0);
        let r = neumann_residual(&f, &g).unwrap();
        assert!(r < 10.0 * g.h_theta().powi(2));
    }

    #[test]
    fn mismatched_grid_rejected() {
        let g1 = axis(2, 1.0, 21);
        let g2 = axis(2, 1.0, 31);
        let f = ScalarField::constant(&g1, 1.0);
        assert!(matches!(gradient(&f, &g2), Err(Error::GridMismatch)));
        assert!(matches!(integrate(&f, &g2), Err(Error::GridMismatch)));
    }

    #[test]
    fn non_finite_rejected() {
        let g = axis(2, 1.0, 11);
        let mut v = vec![1.0; 11];
        v[3] = f64::NAN;
        assert!(matches!(
            ScalarField::new(&g, v, Boundary::Neumann),
            Err(Error::NonFinite { node: 3, .. })
        ));
    }

    #[test]
    fn canonical_pole_invariants_are_shift_invariant() {
        let g = full(1.0, 11, 16);
        let f = ScalarField::from_fn(&g, Boundary::Neumann, |t, p| {
            1.0 + 0.1 * t.sin().powi(2) * (2.0 * p).cos() + 0.05 * t.sin() * (p + 0.3).cos()
        })
        .unwrap();
        let mut shifted = f.values().to_vec();
        for j in 1..g.n_theta() {
            for k in 0..16isize {
                shifted[g.index2(j, k + 1)] = f.values()[g.index2(j, k)];
            }
        }
        let a = jets(f.values(), &g, Boundary::Neumann, PoleFrame::Canonical)[0];
        let b = jets(&shifted, &g, Boundary::Neumann, PoleFrame::Canonical)[0];
        let inv = |j: Jet| (j.grad[0] * j.grad[0] + j.grad[1] * j.grad[1], j.hess.quad(j.grad), j.hess.a11 + j.hess.a22);
        let (ia, ib) = (inv(a), inv(b));
        assert_eq!(ia.0.to_bits(), ib.0.to_bits());
        assert_eq!(ia.1.to_bits(), ib.1.to_bits());
        assert_eq!(ia.2.to_bits(), ib.2.to_bits());
    }
}
