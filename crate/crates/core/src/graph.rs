//! Geometry of the radial graph `M_t = { u(x) x : x in M }` over the cap.
//!
//! [`graph_geometry`] evaluates the closed forms in the sphere chart;
//! [`embedding_oracle`] recomputes metric, second fundamental form and mean
//! curvature from finite differences of the embedding in ambient Cartesian
//! coordinates. The two paths share no geometric algebra.

use crate::error::{Error, Result};
use crate::sphere::{
    integrate_values, jets, round_metric, Boundary, CapGrid, Mode, PoleFrame, ScalarField, Sym2,
    SymTensorField,
};

/// Default mean-convexity floor.
pub const DEFAULT_EPS_MC: f64 = 1e-8;

/// All pointwise quantities of the graph hypersurface at one instant.
#[derive(Debug, Clone)]
pub struct GraphGeometry {
    /// Tilt factor `sqrt(1 + |D log u|^2)`.
    pub v: Vec<f64>,
    pub metric: SymTensorField,
    pub inv_metric: SymTensorField,
    pub second_ff: SymTensorField,
    /// Shape operator `h^i_j = g^{ik} h_kj`, row index raised.
    pub shape: Vec<[[f64; 2]; 2]>,
    pub mean_curv: Vec<f64>,
    /// Unit normal in the frame `(d_r, d_theta, d_a)` of R^{n+1} at the point.
    pub normal: Vec<[f64; 3]>,
    /// Support function `w = <X, nu>`.
    pub support: Vec<f64>,
    /// Normal speed `Phi = 1 / (u^alpha H)`.
    pub speed: Vec<f64>,
    /// `Psi = Phi / w`.
    pub psi: Vec<f64>,
    /// Covariant gradient of `u`.
    pub du: Vec<[f64; 2]>,
    /// Covariant Hessian of `u`.
    pub d2u: Vec<Sym2>,
}

impl GraphGeometry {
    pub fn min_mean_curv(&self) -> f64 {
        self.mean_curv.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_support(&self) -> f64 {
        self.support.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `|D log u|` at node `idx`, computed without the cancellation in
    /// `sqrt(v^2 - 1)`.
    pub fn grad_log_norm(&self, grid: &CapGrid, u: &ScalarField, idx: usize) -> f64 {
        let du = self.du[idx];
        let mult = grid.angular_multiplicity() as f64;
        (du[0] * du[0] + mult * du[1] * du[1] / grid.angular_metric(idx)).sqrt() / u.values()[idx]
    }

    pub fn max_v(&self) -> f64 {
        self.v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn check_positive(u: &ScalarField) -> Result<()> {
    if let Some((node, &value)) = u.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NotStarShaped { node, value });
    }
    Ok(())
}

/// Closed-form geometry with the default mean-convexity floor.
pub fn graph_geometry(u: &ScalarField, grid: &CapGrid, alpha: f64) -> Result<GraphGeometry> {
    graph_geometry_with(u, grid, alpha, DEFAULT_EPS_MC)
}

pub fn graph_geometry_with(
    u: &ScalarField,
    grid: &CapGrid,
    alpha: f64,
    eps_mc: f64,
) -> Result<GraphGeometry> {
    u.check_grid(grid)?;
    check_positive(u)?;
    let geo = geometry_unchecked(u, grid, alpha);
    if let Some((node, &value)) = geo.mean_curv.iter().enumerate().find(|(_, h)| !(**h > eps_mc)) {
        return Err(Error::MeanConvexityLost { node, quantity: "H", value });
    }
    Ok(geo)
}

/// Closed forms without the mean-convexity gate; `speed` and `psi` may be
/// non-finite where `H <= 0`.
pub(crate) fn geometry_unchecked(u: &ScalarField, grid: &CapGrid, alpha: f64) -> GraphGeometry {
    let n_nodes = grid.len();
    let mult = grid.angular_multiplicity();
    let jets = jets(u.values(), grid, u.boundary(), PoleFrame::Standard);

    let mut out = GraphGeometry {
        v: Vec::with_capacity(n_nodes),
        metric: SymTensorField::new(grid, vec![Sym2::default(); n_nodes]),
        inv_metric: SymTensorField::new(grid, vec![Sym2::default(); n_nodes]),
        second_ff: SymTensorField::new(grid, vec![Sym2::default(); n_nodes]),
        shape: Vec::with_capacity(n_nodes),
        mean_curv: Vec::with_capacity(n_nodes),
        normal: Vec::with_capacity(n_nodes),
        support: Vec::with_capacity(n_nodes),
        speed: Vec::with_capacity(n_nodes),
        psi: Vec::with_capacity(n_nodes),
        du: Vec::with_capacity(n_nodes),
        d2u: Vec::with_capacity(n_nodes),
    };
    let mut metric = Vec::with_capacity(n_nodes);
    let mut inv_metric = Vec::with_capacity(n_nodes);
    let mut second_ff = Vec::with_capacity(n_nodes);

    for (idx, jet) in jets.iter().enumerate() {
        let uu = u.values()[idx];
        let sigma = round_metric(grid, idx);
        let sigma_inv = sigma.inverse();
        let du = jet.grad;
        let du_up = [du[0] * sigma_inv.a11, du[1] * sigma_inv.a22];
        let du2 = du[0] * du_up[0] + mult as f64 * du[1] * du_up[1];
        let v2 = 1.0 + du2 / (uu * uu);
        let v = v2.sqrt();

        let g = sigma * (uu * uu) + Sym2::outer(du);
        let g_inv = (sigma_inv - Sym2::outer(du_up) * (1.0 / (uu * uu * v2))) * (1.0 / (uu * uu));
        let h = (jet.hess * -1.0 + sigma * uu + Sym2::outer(du) * (2.0 / uu)) * (1.0 / v);

        let gi = g_inv.as_matrix();
        let hm = h.as_matrix();
        let mut shape = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                shape[i][j] = gi[i][0] * hm[0][j] + gi[i][1] * hm[1][j];
            }
        }
        let mean = shape[0][0] + mult as f64 * shape[1][1];
        let speed = 1.0 / (uu.powf(alpha) * mean);
        let w = uu / v;

        out.v.push(v);
        metric.push(g);
        inv_metric.push(g_inv);
        second_ff.push(h);
        out.shape.push(shape);
        out.mean_curv.push(mean);
        out.normal.push([1.0 / v, -du_up[0] / (uu * uu * v), -du_up[1] / (uu * uu * v)]);
        out.support.push(w);
        out.speed.push(speed);
        out.psi.push(speed / w);
        out.du.push(du);
        out.d2u.push(jet.hess);
    }
    out.metric = SymTensorField::new(grid, metric);
    out.inv_metric = SymTensorField::new(grid, inv_metric);
    out.second_ff = SymTensorField::new(grid, second_ff);
    out
}

/// Area `H^n(graph u) = int u^n v d sigma`.
pub fn graph_area(u: &ScalarField, grid: &CapGrid) -> Result<f64> {
    u.check_grid(grid)?;
    check_positive(u)?;
    Ok(integrate_values(&area_density(u, grid), grid))
}

/// `u^n v` per node.
pub(crate) fn area_density(u: &ScalarField, grid: &CapGrid) -> Vec<f64> {
    let n = grid.n_dim() as i32;
    let mult = grid.angular_multiplicity() as f64;
    jets(u.values(), grid, u.boundary(), PoleFrame::Standard)
        .iter()
        .enumerate()
        .map(|(idx, jet)| {
            let uu = u.values()[idx];
            let s22 = grid.angular_metric(idx);
            let du2 = jet.grad[0] * jet.grad[0] + mult * jet.grad[1] * jet.grad[1] / s22;
            uu.powi(n) * (1.0 + du2 / (uu * uu)).sqrt()
        })
        .collect()
}

/// Geometry recovered from finite differences of the embedding.
#[derive(Debug, Clone)]
pub struct OracleGeometry {
    pub metric: SymTensorField,
    pub second_ff: SymTensorField,
    pub mean_curv: Vec<f64>,
    /// `<nu, d_r>` per node; positive for an outward normal.
    pub normal_radial: Vec<f64>,
    /// Induced volume element relative to the round one, `sqrt(det g / det sigma)`.
    pub area_density: Vec<f64>,
}

impl OracleGeometry {
    /// Oracle surface area: the induced volume elements summed with the
    /// grid quadrature.
    pub fn area(&self, grid: &CapGrid) -> f64 {
        integrate_values(&self.area_density, grid)
    }
}

type Vector = Vec<f64>;

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lincomb(terms: &[(f64, &Vector)]) -> Vector {
    let mut out = vec![0.0; terms[0].1.len()];
    for (c, v) in terms {
        axpy(*c, v, &mut out);
    }
    out
}

/// Inverse of a small symmetric positive definite matrix by Gauss-Jordan.
fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                for j in 0..n {
                    a[row][j] -= f * a[col][j];
                    inv[row][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

struct EmbeddingJet {
    point: Vector,
    tangents: Vec<Vector>,
    /// Second derivatives `X_ij`, indexed `[i][j]`.
    second: Vec<Vec<Vector>>,
    /// Density of the round measure in the same chart.
    sigma_density: f64,
}

struct OracleNode {
    metric: Sym2,
    second_ff: Sym2,
    mean_curv: f64,
    normal_radial: f64,
    area_density: f64,
}

fn reduce(jet: &EmbeddingJet) -> OracleNode {
    let n = jet.tangents.len();
    let g: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dot(&jet.tangents[i], &jet.tangents[j])).collect())
        .collect();

    // Normal: radial direction minus its projection on the tangent space,
    // with the projection built from a Gram-Schmidt basis.
    let mut basis: Vec<Vector> = Vec::with_capacity(n);
    for t in &jet.tangents {
        let mut e = t.clone();
        for b in &basis {
            let c = dot(&e, b);
            axpy(-c, b, &mut e);
        }
        let norm = dot(&e, &e).sqrt();
        e.iter_mut().for_each(|x| *x /= norm);
        basis.push(e);
    }
    let r_norm = dot(&jet.point, &jet.point).sqrt();
    let radial: Vector = jet.point.iter().map(|x| x / r_norm).collect();
    let mut nu = radial.clone();
    for b in &basis {
        let c = dot(&nu, b);
        axpy(-c, b, &mut nu);
    }
    let norm = dot(&nu, &nu).sqrt();
    nu.iter_mut().for_each(|x| *x /= norm);

    let h: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| -dot(&jet.second[i][j], &nu)).collect())
        .collect();
    let g_inv = invert(&g);
    let mut mean = 0.0;
    for i in 0..n {
        for j in 0..n {
            mean += g_inv[i][j] * h[i][j];
        }
    }
    // Determinant through the Gram-Schmidt norms: det g = prod |e_k^perp|^2.
    let mut det = 1.0;
    {
        let mut ortho: Vec<Vector> = Vec::with_capacity(n);
        for t in &jet.tangents {
            let mut e = t.clone();
            for b in &ortho {
                let c = dot(&e, b) / dot(b, b);
                axpy(-c, b, &mut e);
            }
            det *= dot(&e, &e);
            ortho.push(e);
        }
    }
    let (m, hh) = if n == 1 {
        (Sym2::diag(g[0][0], 0.0), Sym2::diag(h[0][0], 0.0))
    } else {
        (Sym2::new(g[0][0], g[0][1], g[1][1]), Sym2::new(h[0][0], h[0][1], h[1][1]))
    };
    OracleNode {
        metric: m,
        second_ff: hh,
        mean_curv: mean,
        normal_radial: dot(&nu, &radial),
        area_density: det.sqrt() / jet.sigma_density,
    }
}

/// Point on the unit sphere at polar angle `theta` over the direction
/// `(1, y) / |(1, y)|` of the equatorial sphere, in R^{n+1} with the pole axis
/// last.
fn sphere_point(theta: f64, y: &[f64]) -> Vector {
    let norm = (1.0 + dot(y, y)).sqrt();
    let s = theta.sin();
    let mut p = Vec::with_capacity(y.len() + 2);
    p.push(s / norm);
    p.extend(y.iter().map(|yi| s * yi / norm));
    p.push(theta.cos());
    p
}

/// Point at geodesic normal coordinates `x` around the pole.
fn normal_coord_point(x: &[f64]) -> Vector {
    let r = dot(x, x).sqrt();
    let mut p: Vector = if r == 0.0 {
        vec![0.0; x.len()]
    } else {
        x.iter().map(|xi| r.sin() * xi / r).collect()
    };
    p.push(r.cos());
    p
}

/// First and second finite differences in theta of `line(i)` at ring `j`.
/// `line` must accept the ghost ring `n` when the boundary is Neumann.
fn fd_theta(
    j: usize,
    n: usize,
    h: f64,
    bc: Boundary,
    line: &dyn Fn(usize) -> Vector,
) -> (Vector, Vector) {
    let h2 = h * h;
    if j + 1 < n || bc == Boundary::Neumann {
        let (a, b, c) = (line(j - 1), line(j), line(j + 1));
        return (lincomb(&[(0.5 / h, &c), (-0.5 / h, &a)]), lincomb(&[(1.0 / h2, &c), (-2.0 / h2, &b), (1.0 / h2, &a)]));
    }
    let (f0, f1, f2) = (line(j), line(j - 1), line(j - 2));
    let d1 = lincomb(&[(1.5 / h, &f0), (-2.0 / h, &f1), (0.5 / h, &f2)]);
    let d2 = if j >= 3 {
        let f3 = line(j - 3);
        lincomb(&[(2.0 / h2, &f0), (-5.0 / h2, &f1), (4.0 / h2, &f2), (-1.0 / h2, &f3)])
    } else {
        lincomb(&[(1.0 / h2, &f0), (-2.0 / h2, &f1), (1.0 / h2, &f2)])
    };
    (d1, d2)
}

/// First finite difference in theta only.
fn fd_theta1(j: usize, n: usize, h: f64, bc: Boundary, line: &dyn Fn(usize) -> Vector) -> Vector {
    if j + 1 < n || bc == Boundary::Neumann {
        let (a, c) = (line(j - 1), line(j + 1));
        return lincomb(&[(0.5 / h, &c), (-0.5 / h, &a)]);
    }
    let (f0, f1, f2) = (line(j), line(j - 1), line(j - 2));
    lincomb(&[(1.5 / h, &f0), (-2.0 / h, &f1), (0.5 / h, &f2)])
}

/// Metric, second fundamental form and mean curvature from finite
/// differences of `X = u(x) x` in ambient Cartesian coordinates.
pub fn embedding_oracle(u: &ScalarField, grid: &CapGrid) -> Result<OracleGeometry> {
    u.check_grid(grid)?;
    check_positive(u)?;
    let nodes = match grid.mode() {
        Mode::Axisymmetric => oracle_axisymmetric(u, grid),
        Mode::Full2d => oracle_full2d(u, grid)?,
    };
    Ok(OracleGeometry {
        metric: SymTensorField::new(grid, nodes.iter().map(|n| n.metric).collect()),
        second_ff: SymTensorField::new(grid, nodes.iter().map(|n| n.second_ff).collect()),
        mean_curv: nodes.iter().map(|n| n.mean_curv).collect(),
        normal_radial: nodes.iter().map(|n| n.normal_radial).collect(),
        area_density: nodes.iter().map(|n| n.area_density).collect(),
    })
}

fn oracle_axisymmetric(u: &ScalarField, grid: &CapGrid) -> Vec<OracleNode> {
    let n = grid.n_dim();
    let nt = grid.n_theta();
    let h = grid.h_theta();
    let eta = h;
    let bc = u.boundary();
    let uv = u.values();
    let radius = |i: usize| if i < nt { uv[i] } else { uv[2 * (nt - 1) - i] };
    let theta = |i: usize| i as f64 * h;
    let ring_angle = |i: usize| if i < nt { grid.ring_theta(i) } else { theta(i) };
    let zero = vec![0.0; n - 1];
    let unit = |a: usize, s: f64| {
        let mut y = vec![0.0; n - 1];
        y[a] = s;
        y
    };
    let embed = |i: usize, y: &[f64]| -> Vector {
        sphere_point(ring_angle(i), y).into_iter().map(|p| radius(i) * p).collect()
    };

    let mut out = Vec::with_capacity(nt);

    // Pole: Cartesian normal coordinates, rotationally symmetric radius.
    {
        let x0 = vec![0.0; n];
        let p0: Vector = normal_coord_point(&x0).iter().map(|p| uv[0] * p).collect();
        let at = |x: Vector| -> Vector {
            let r = dot(&x, &x).sqrt();
            let rad = if r == 0.0 { uv[0] } else { uv[1] };
            normal_coord_point(&x).iter().map(|p| rad * p).collect()
        };
        let ax = |a: usize, s: f64| {
            let mut x = vec![0.0; n];
            x[a] = s;
            x
        };
        let d = h / std::f64::consts::SQRT_2;
        let mut tangents = Vec::with_capacity(n);
        let mut second = vec![vec![Vec::new(); n]; n];
        for a in 0..n {
            let (p, m) = (at(ax(a, h)), at(ax(a, -h)));
            tangents.push(lincomb(&[(0.5 / h, &p), (-0.5 / h, &m)]));
            second[a][a] = lincomb(&[(1.0 / (h * h), &p), (-2.0 / (h * h), &p0), (1.0 / (h * h), &m)]);
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let corner = |sa: f64, sb: f64| {
                    let mut x = vec![0.0; n];
                    x[a] = sa * d;
                    x[b] = sb * d;
                    at(x)
                };
                let (pp, pm, mp, mm) = (corner(1.0, 1.0), corner(1.0, -1.0), corner(-1.0, 1.0), corner(-1.0, -1.0));
                let c = 0.25 / (d * d);
                let v = lincomb(&[(c, &pp), (-c, &pm), (-c, &mp), (c, &mm)]);
                second[a][b] = v.clone();
                second[b][a] = v;
            }
        }
        out.push(reduce(&EmbeddingJet { point: p0, tangents, second, sigma_density: 1.0 }));
    }

    for j in 1..nt {
        let point = embed(j, &zero);
        let line0 = |i: usize| embed(i, &zero);
        let (x_t, x_tt) = fd_theta(j, nt, h, bc, &line0);
        let mut tangents = vec![x_t];
        let mut second = vec![vec![Vec::new(); n]; n];
        second[0][0] = x_tt;
        for a in 0..n - 1 {
            let (p, m) = (embed(j, &unit(a, eta)), embed(j, &unit(a, -eta)));
            tangents.push(lincomb(&[(0.5 / eta, &p), (-0.5 / eta, &m)]));
            let e2 = 1.0 / (eta * eta);
            second[a + 1][a + 1] = lincomb(&[(e2, &p), (-2.0 * e2, &point), (e2, &m)]);
            let dy = |i: usize| {
                let (p, m) = (embed(i, &unit(a, eta)), embed(i, &unit(a, -eta)));
                lincomb(&[(0.5 / eta, &p), (-0.5 / eta, &m)])
            };
            let mixed = fd_theta1(j, nt, h, bc, &dy);
            second[0][a + 1] = mixed.clone();
            second[a + 1][0] = mixed;
            for b in (a + 1)..n - 1 {
                let corner = |sa: f64, sb: f64| {
                    let mut y = vec![0.0; n - 1];
                    y[a] = sa * eta;
                    y[b] = sb * eta;
                    embed(j, &y)
                };
                let (pp, pm, mp, mm) = (corner(1.0, 1.0), corner(1.0, -1.0), corner(-1.0, 1.0), corner(-1.0, -1.0));
                let c = 0.25 * e2;
                let v = lincomb(&[(c, &pp), (-c, &pm), (-c, &mp), (c, &mm)]);
                second[a + 1][b + 1] = v.clone();
                second[b + 1][a + 1] = v;
            }
        }
        let sigma_density = grid.ring_sin(j).powi(n as i32 - 1);
        out.push(reduce(&EmbeddingJet { point, tangents, second, sigma_density }));
    }
    out
}

fn oracle_full2d(u: &ScalarField, grid: &CapGrid) -> Result<Vec<OracleNode>> {
    let np = grid.n_psi();
    if np % 8 != 0 {
        return Err(Error::InvalidGrid(format!(
            "embedding oracle needs n_psi divisible by 8 at the pole, got {np}"
        )));
    }
    let nt = grid.n_theta();
    let h = grid.h_theta();
    let hp = grid.h_psi();
    let bc = u.boundary();
    let uv = u.values();
    let sphere = |t: f64, p: f64| vec![t.sin() * p.cos(), t.sin() * p.sin(), t.cos()];
    let embed = |j: usize, k: isize| -> Vector {
        let (rad, t) = if j < nt {
            (uv[grid.index2(j, k)], grid.ring_theta(j))
        } else {
            (uv[grid.index2(2 * (nt - 1) - j, k)], j as f64 * h)
        };
        let p = if j == 0 { 0.0 } else { k as f64 * hp };
        sphere(t, p).into_iter().map(|x| rad * x).collect()
    };

    let mut out = vec![];
    {
        let p0 = embed(0, 0);
        let q = (np / 8) as isize;
        let ring = |k: isize| embed(1, k);
        let (xp, yp, xm, ym) = (ring(0), ring(2 * q), ring(4 * q), ring(6 * q));
        let (pp, mp, mm, pm) = (ring(q), ring(3 * q), ring(5 * q), ring(7 * q));
        let h2 = 1.0 / (h * h);
        let d = h / std::f64::consts::SQRT_2;
        let c = 0.25 / (d * d);
        let tangents = vec![lincomb(&[(0.5 / h, &xp), (-0.5 / h, &xm)]), lincomb(&[(0.5 / h, &yp), (-0.5 / h, &ym)])];
        let xx = lincomb(&[(h2, &xp), (-2.0 * h2, &p0), (h2, &xm)]);
        let yy = lincomb(&[(h2, &yp), (-2.0 * h2, &p0), (h2, &ym)]);
        let xy = lincomb(&[(c, &pp), (-c, &pm), (-c, &mp), (c, &mm)]);
        let second = vec![vec![xx, xy.clone()], vec![xy, yy]];
        out.push(reduce(&EmbeddingJet { point: p0, tangents, second, sigma_density: 1.0 }));
    }
    for j in 1..nt {
        for k in 0..np as isize {
            let point = embed(j, k);
            let line = |i: usize| embed(i, k);
            let (x_t, x_tt) = fd_theta(j, nt, h, bc, &line);
            let (p, m) = (embed(j, k + 1), embed(j, k - 1));
            let x_p = lincomb(&[(0.5 / hp, &p), (-0.5 / hp, &m)]);
            let hp2 = 1.0 / (hp * hp);
            let x_pp = lincomb(&[(hp2, &p), (-2.0 * hp2, &point), (hp2, &m)]);
            let dpsi = |i: usize| {
                let (p, m) = (embed(i, k + 1), embed(i, k - 1));
                lincomb(&[(0.5 / hp, &p), (-0.5 / hp, &m)])
            };
            let x_tp = fd_theta1(j, nt, h, bc, &dpsi);
            let second = vec![vec![x_tt, x_tp.clone()], vec![x_tp, x_pp]];
            out.push(reduce(&EmbeddingJet {
                point,
                tangents: vec![x_t, x_p],
                second,
                sigma_density: grid.ring_sin(j),
            }));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::Resolution;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn axis(n: usize, tmax: f64, nt: usize) -> CapGrid {
        CapGrid::build(n, tmax, Resolution::axisymmetric(nt), Mode::Axisymmetric).unwrap()
    }

    #[test]
    fn round_sphere_closed_forms() {
        for n in [2, 3, 5] {
            let g = axis(n, 1.0, 21);
            let r = 1.7;
            let u = ScalarField::constant(&g, r);
            let alpha = 0.5;
            let geo = graph_geometry(&u, &g, alpha).unwrap();
            for i in 0..g.len() {
                let sigma = round_metric(&g, i);
                assert_eq!(geo.v[i], 1.0);
                assert!((geo.metric.comps()[i] - sigma * (r * r)).max_abs() < 1e-14);
                assert!((geo.second_ff.comps()[i] - sigma * r).max_abs() < 1e-14);
                assert!((geo.shape[i][0][0] - 1.0 / r).abs() < 1e-14);
                assert!((geo.mean_curv[i] - n as f64 / r).abs() < 1e-13);
                assert!((geo.support[i] - r).abs() < 1e-15);
                let phi = r.powf(1.0 - alpha) / n as f64;
                assert!((geo.speed[i] - phi).abs() < 1e-14);
                assert_eq!(geo.normal[i], [1.0, -0.0, -0.0]);
            }
        }
    }

    #[test]
    fn radius_two_in_dimension_two() {
        let g = axis(2, 1.0, 11);
        let geo = graph_geometry(&ScalarField::constant(&g, 2.0), &g, 1.0).unwrap();
        assert!((geo.mean_curv[3] - 1.0).abs() < 1e-15);
        assert!((geo.speed[3] - 0.5).abs() < 1e-15);
        assert!((geo.support[3] - 2.0).abs() < 1e-15);
        assert!((geo.psi[3] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_radius() {
        let g = axis(2, 1.0, 11);
        let mut v = vec![1.0; 11];
        v[4] = -0.1;
        let u = ScalarField::new(&g, v, Boundary::Neumann).unwrap();
        assert!(matches!(graph_geometry(&u, &g, 1.0), Err(Error::NotStarShaped { node: 4, .. })));
    }

    #[test]
    fn rejects_mean_concave_surface() {
        let g = axis(2, FRAC_PI_2, 41);
        let u = ScalarField::from_fn(&g, Boundary::Neumann, |t, _| 1.0 + 0.9 * (6.0 * t).cos()).unwrap();
        assert!(matches!(graph_geometry(&u, &g, 1.0), Err(Error::MeanConvexityLost { .. })));
    }

    fn bumpy(g: &CapGrid) -> ScalarField {
        ScalarField::from_fn(g, Boundary::Free, |t, _| (0.05 * t.cos()).exp()).unwrap()
    }

    #[test]
    fn algebraic_identities() {
        let g = axis(3, FRAC_PI_2, 61);
        let u = ScalarField::from_fn(&g, Boundary::Free, |t, _| 1.0 + 0.2 * t.cos() + 0.1 * (2.0 * t).cos())
            .unwrap();
        let geo = graph_geometry(&u, &g, 0.7).unwrap();
        let mult = g.angular_multiplicity();
        let n = g.n_dim() as i32;
        for i in 0..g.len() {
            let uu = u.values()[i];
            let (gm, gi) = (geo.metric.comps()[i], geo.inv_metric.comps()[i]);
            // g g^{-1} = identity.
            let a = gm.as_matrix();
            let b = gi.as_matrix();
            for r in 0..2 {
                for c in 0..2 {
                    let e = a[r][0] * b[0][c] + a[r][1] * b[1][c];
                    assert!((e - f64::from(u8::from(r == c))).abs() < 1e-12);
                }
            }
            // det g = u^{2n} v^2 det sigma.
            let want = uu.powi(2 * n) * geo.v[i].powi(2) * g.metric_det(i);
            assert!((gm.det(mult) / want - 1.0).abs() < 1e-12, "node {i}");
            assert!((geo.support[i] * geo.v[i] - uu).abs() < 1e-14);
            assert!((geo.speed[i] * uu.powf(0.7) * geo.mean_curv[i] - 1.0).abs() < 1e-13);
            assert!((geo.psi[i] * geo.support[i] - geo.speed[i]).abs() < 1e-14);
            let nv = geo.normal[i];
            let s22 = g.angular_metric(i);
            let len2 = nv[0] * nv[0] + uu * uu * (nv[1] * nv[1] + mult as f64 * s22 * nv[2] * nv[2]);
            assert!((len2 - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn shape_operator_matches_sigma_tilde_form() {
        // h^i_j = (delta^i_j - sigma~^{ik} phi_kj) / (u v) with phi = log u.
        let g = CapGrid::build(2, 1.2, Resolution::full2d(31, 16), Mode::Full2d).unwrap();
        let u = ScalarField::from_fn(&g, Boundary::Free, |t, p| 1.0 + 0.1 * t.sin().powi(2) * (2.0 * p).cos() + 0.05 * t.cos())
            .unwrap();
        let geo = graph_geometry(&u, &g, 1.0).unwrap();
        let du = jets(u.values(), &g, Boundary::Free, PoleFrame::Standard);
        for i in 0..g.len() {
            let uu = u.values()[i];
            let v = geo.v[i];
            // Chain rule: phi_i = u_i / u, phi_ij = u_ij / u - u_i u_j / u^2.
            let grad = [du[i].grad[0] / uu, du[i].grad[1] / uu];
            let hess = du[i].hess * (1.0 / uu) - Sym2::outer(grad);
            let si = round_metric(&g, i).inverse();
            let up = [grad[0] * si.a11, grad[1] * si.a22];
            let st = (si - Sym2::outer(up) * (1.0 / (v * v))).as_matrix();
            let ph = hess.as_matrix();
            for r in 0..2 {
                for c in 0..2 {
                    let prod = st[r][0] * ph[0][c] + st[r][1] * ph[1][c];
                    let want = (f64::from(u8::from(r == c)) - prod) / (uu * v);
                    assert!((geo.shape[i][r][c] - want).abs() < 1e-10, "node {i} ({r},{c}) {} {}", geo.shape[i][r][c], want);
                }
            }
        }
    }

    #[test]
    fn flat_point_reduces_to_round_terms() {
        let g = axis(2, FRAC_PI_2, 41);
        let u = ScalarField::from_fn(&g, Boundary::Neumann, |t, _| 1.0 + 0.05 * (2.0 * t).cos()).unwrap();
        let geo = graph_geometry(&u, &g, 1.0).unwrap();
        // Pole and boundary have Du = 0.
        for i in [0, 40] {
            let want = geo.d2u[i] * -1.0 + round_metric(&g, i) * u.values()[i];
            assert!((geo.second_ff.comps()[i] - want).max_abs() < 1e-14);
            assert_eq!(geo.normal[i][0], 1.0);
        }
    }

    #[test]
    fn rigid_scaling() {
        let g = axis(2, 1.0, 41);
        let u = ScalarField::from_fn(&g, Boundary::Free, |t, _| 1.0 + 0.1 * t.cos()).unwrap();
        let u2 = u.map(|x| 2.0 * x);
        let a = graph_geometry(&u, &g, 1.0).unwrap();
        let b = graph_geometry(&u2, &g, 1.0).unwrap();
        for i in 0..g.len() {
            assert!((b.mean_curv[i] - a.mean_curv[i] / 2.0).abs() < 1e-13);
            assert!((b.metric.comps()[i] - a.metric.comps()[i] * 4.0).max_abs() < 1e-13);
        }
    }

    #[test]
    fn area_of_scaled_hemisphere() {
        let g = axis(2, FRAC_PI_2, 101);
        let a = graph_area(&ScalarField::constant(&g, 1.5), &g).unwrap();
        assert!((a - 2.25 * 2.0 * PI).abs() < 1e-12);
        let one = graph_area(&ScalarField::constant(&g, 1.0), &g).unwrap();
        assert!((one - crate::sphere::integrate(&ScalarField::constant(&g, 1.0), &g).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn oracle_on_spheres() {
        for g in [axis(2, 1.0, 41), axis(3, 1.0, 41), CapGrid::build(2, 1.0, Resolution::full2d(21, 16), Mode::Full2d).unwrap()] {
            let r = 1.3;
            let o = embedding_oracle(&ScalarField::constant(&g, r), &g).unwrap();
            let n = g.n_dim() as f64;
            for i in 0..g.len() {
                // Chord effects of the psi stencil are O(h_psi^2).
                let tol = 1e-3 + if g.mode() == Mode::Full2d { g.h_psi().powi(2) } else { 0.0 };
                assert!((o.mean_curv[i] - n / r).abs() < tol, "node {i}: {}", o.mean_curv[i]);
                assert!(o.normal_radial[i] > 0.999);
            }
        }
    }

    #[test]
    fn oracle_orientation_for_star_shaped_graph() {
        let g = axis(2, FRAC_PI_2, 51);
        let o = embedding_oracle(&bumpy(&g), &g).unwrap();
        assert!(o.normal_radial.iter().all(|c| *c > 0.0));
    }

    #[test]
    fn oracle_matches_closed_forms() {
        let g = axis(2, FRAC_PI_2, 101);
        let u = bumpy(&g);
        let geo = graph_geometry(&u, &g, 1.0).unwrap();
        let o = embedding_oracle(&u, &g).unwrap();
        let h2 = g.h_theta().powi(2);
        for i in 1..g.len() {
            assert!((geo.mean_curv[i] - o.mean_curv[i]).abs() < 5.0 * h2, "node {i}");
            assert!((geo.metric.comps()[i] - o.metric.comps()[i]).max_abs() < 5.0 * h2);
            assert!((geo.second_ff.comps()[i] - o.second_ff.comps()[i]).max_abs() < 5.0 * h2);
        }
        assert!((geo.mean_curv[0] - o.mean_curv[0]).abs() < 5.0 * h2);
        let area = graph_area(&u, &g).unwrap();
        assert!((area - o.area(&g)).abs() / area < 5.0 * h2);
    }

    #[test]
    fn oracle_full2d_needs_pole_stencil() {
        let g = CapGrid::build(2, 1.0, Resolution::full2d(11, 12), Mode::Full2d).unwrap();
        assert!(embedding_oracle(&ScalarField::constant(&g, 1.0), &g).is_err());
    }

    #[test]
    fn oracle_full2d_matches_closed_forms() {
        let g = CapGrid::build(2, 1.2, Resolution::full2d(41, 32), Mode::Full2d).unwrap();
        let u = ScalarField::from_fn(&g, Boundary::Free, |t, p| 1.0 + 0.05 * t.sin().powi(2) * (2.0 * p).cos()).unwrap();
        let geo = graph_geometry(&u, &g, 1.0).unwrap();
        let o = embedding_oracle(&u, &g).unwrap();
        let err = (0..g.len()).map(|i| (geo.mean_curv[i] - o.mean_curv[i]).abs()).fold(0.0, f64::max);
        assert!(err < g.h_psi().powi(2) + 5.0 * g.h_theta().powi(2), "max H discrepancy {err}");
    }
}
