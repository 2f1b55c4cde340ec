use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layout of the discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// 1-D grid in the polar angle, any dimension, rotationally symmetric data.
    Axisymmetric,
    /// 2-D polar grid (pole node plus rings), n = 2 only.
    Full2d,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Axisymmetric => "axisymmetric",
            Mode::Full2d => "full2d",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axisymmetric" => Ok(Mode::Axisymmetric),
            "full2d" => Ok(Mode::Full2d),
            other => Err(Error::InvalidGrid(format!("unknown mode `{other}`"))),
        }
    }
}

/// Node counts per coordinate direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resolution {
    pub n_theta: usize,
    /// Ignored in axisymmetric mode.
    pub n_psi: usize,
}

impl Resolution {
    pub fn axisymmetric(n_theta: usize) -> Self {
        Self { n_theta, n_psi: 0 }
    }

    pub fn full2d(n_theta: usize, n_psi: usize) -> Self {
        Self { n_theta, n_psi }
    }
}

/// Structural identity of a grid; fields carry it so operations can reject
/// values that were built for another discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridKey {
    n_dim: usize,
    theta_max_bits: u64,
    mode: Mode,
    n_theta: usize,
    n_psi: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub theta: f64,
    /// Azimuth; 0 for axisymmetric nodes and for the full2d pole.
    pub psi: f64,
}

/// Geodesic cap of the round unit sphere around the north pole, discretized
/// in geodesic polar coordinates.
///
/// Node ordering: axisymmetric grids store ring `j` at index `j`. Full2d grids
/// store the pole at index 0 and node `(j, k)` for `j >= 1` at
/// `1 + (j - 1) * n_psi + k`.
///
/// Tensor components at a node are taken in the chart `(theta, a)` where `a` is
/// a unit-speed angle on the latitude sphere, so the round metric is
/// `diag(1, sin^2 theta)`. In axisymmetric mode the angular slot stands for
/// each of the `n - 1` equivalent angular directions. The pole node uses
/// geodesic normal (Cartesian) coordinates instead, where the metric is the
/// identity and the Christoffel symbols vanish.
#[derive(Debug, Clone)]
pub struct CapGrid {
    n_dim: usize,
    theta_max: f64,
    mode: Mode,
    n_theta: usize,
    n_psi: usize,
    h_theta: f64,
    h_psi: f64,
    ring_theta: Vec<f64>,
    ring_sin: Vec<f64>,
    ring_cos: Vec<f64>,
    nodes: Vec<Node>,
    weights: Vec<f64>,
    boundary: Vec<usize>,
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
}

/// Area of the unit sphere S^k embedded in R^{k+1}.
pub fn unit_sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * unit_sphere_area(k - 2),
    }
}

// 5-point Gauss-Legendre rule on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
    0.236_926_885_056_189_08,
];

/// Exact integrals of the two hat functions on `[a, b]` against `sin^p theta`,
/// returned as (weight for the left node, weight for the right node).
fn hat_moments(a: f64, b: f64, p: usize) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let (mut left, mut right) = (0.0, 0.0);
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        let theta = mid + half * x;
        let density = theta.sin().powi(p as i32) * w * half;
        let t = (theta - a) / (b - a);
        left += (1.0 - t) * density;
        right += t * density;
    }
    (left, right)
}

impl CapGrid {
    pub fn build(n_dim: usize, theta_max: f64, resolution: Resolution, mode: Mode) -> Result<Self> {
        if n_dim < 2 {
            return Err(Error::InvalidGrid(format!("n_dim = {n_dim} must be >= 2")));
        }
        if !theta_max.is_finite() || theta_max <= 0.0 {
            return Err(Error::InvalidGrid(format!("theta_max = {theta_max} must be positive")));
        }
        // Allow one ulp of slack so that FRAC_PI_2 computed elsewhere passes.
        if theta_max > FRAC_PI_2 * (1.0 + f64::EPSILON) {
            return Err(Error::ConeNotConvex { theta_max });
        }
        let n_theta = resolution.n_theta;
        if n_theta < 3 {
            return Err(Error::InvalidGrid(format!("n_theta = {n_theta} must be >= 3")));
        }
        let n_psi = match mode {
            Mode::Axisymmetric => 0,
            Mode::Full2d => {
                if n_dim != 2 {
                    return Err(Error::InvalidGrid(format!(
                        "full2d mode requires n_dim = 2, got {n_dim}"
                    )));
                }
                if resolution.n_psi < 8 {
                    return Err(Error::InvalidGrid(format!(
                        "n_psi = {} must be >= 8",
                        resolution.n_psi
                    )));
                }
                resolution.n_psi
            }
        };

        let h_theta = theta_max / (n_theta - 1) as f64;
        let h_psi = if n_psi > 0 { 2.0 * PI / n_psi as f64 } else { 0.0 };
        let ring_theta: Vec<f64> = (0..n_theta)
            .map(|j| if j == n_theta - 1 { theta_max } else { j as f64 * h_theta })
            .collect();
        let ring_sin: Vec<f64> = ring_theta.iter().map(|t| t.sin()).collect();
        let ring_cos: Vec<f64> = ring_theta.iter().map(|t| t.cos()).collect();

        // Radial weights: hat functions integrated exactly against sin^{n-1}.
        let p = n_dim - 1;
        let mut radial = vec![0.0; n_theta];
        for j in 0..n_theta - 1 {
            let (l, r) = hat_moments(ring_theta[j], ring_theta[j + 1], p);
            radial[j] += l;
            radial[j + 1] += r;
        }

        let (cos_table, sin_table): (Vec<f64>, Vec<f64>) = (0..n_psi)
            .map(|m| {
                let a = m as f64 * h_psi;
                (a.cos(), a.sin())
            })
            .unzip();

        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut boundary = Vec::new();
        match mode {
            Mode::Axisymmetric => {
                let sphere = unit_sphere_area(n_dim - 1);
                for j in 0..n_theta {
                    nodes.push(Node { theta: ring_theta[j], psi: 0.0 });
                    weights.push(sphere * radial[j]);
                }
                boundary.push(n_theta - 1);
            }
            Mode::Full2d => {
                nodes.push(Node { theta: 0.0, psi: 0.0 });
                weights.push(2.0 * PI * radial[0]);
                for j in 1..n_theta {
                    for k in 0..n_psi {
                        if j == n_theta - 1 {
                            boundary.push(nodes.len());
                        }
                        nodes.push(Node { theta: ring_theta[j], psi: k as f64 * h_psi });
                        weights.push(h_psi * radial[j]);
                    }
                }
            }
        }

        Ok(Self {
            n_dim,
            theta_max,
            mode,
            n_theta,
            n_psi,
            h_theta,
            h_psi,
            ring_theta,
            ring_sin,
            ring_cos,
            nodes,
            weights,
            boundary,
            cos_table,
            sin_table,
        })
    }

    pub fn key(&self) -> GridKey {
        GridKey {
            n_dim: self.n_dim,
            theta_max_bits: self.theta_max.to_bits(),
            mode: self.mode,
            n_theta: self.n_theta,
            n_psi: self.n_psi,
        }
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn resolution(&self) -> Resolution {
        Resolution { n_theta: self.n_theta, n_psi: self.n_psi }
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_psi(&self) -> usize {
        self.n_psi
    }

    pub fn h_theta(&self) -> f64 {
        self.h_theta
    }

    pub fn h_psi(&self) -> f64 {
        self.h_psi
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary_index(&self) -> &[usize] {
        &self.boundary
    }

    /// Number of angular directions the angular tensor slot represents.
    pub fn angular_multiplicity(&self) -> usize {
        match self.mode {
            Mode::Axisymmetric => self.n_dim - 1,
            Mode::Full2d => 1,
        }
    }

    pub fn ring_theta(&self, j: usize) -> f64 {
        self.ring_theta[j]
    }

    pub(crate) fn ring_sin(&self, j: usize) -> f64 {
        self.ring_sin[j]
    }

    pub(crate) fn ring_cos(&self, j: usize) -> f64 {
        self.ring_cos[j]
    }

    pub(crate) fn trig_tables(&self) -> (&[f64], &[f64]) {
        (&self.cos_table, &self.sin_table)
    }

    /// Ring index of a node.
    pub fn ring_of(&self, idx: usize) -> usize {
        match self.mode {
            Mode::Axisymmetric => idx,
            Mode::Full2d => {
                if idx == 0 {
                    0
                } else {
                    1 + (idx - 1) / self.n_psi
                }
            }
        }
    }

    /// Flat index of full2d node `(j, k)`, `k` taken modulo `n_psi`.
    pub(crate) fn index2(&self, j: usize, k: isize) -> usize {
        debug_assert!(self.mode == Mode::Full2d);
        if j == 0 {
            return 0;
        }
        let n = self.n_psi as isize;
        1 + (j - 1) * self.n_psi + k.rem_euclid(n) as usize
    }

    pub fn is_pole(&self, idx: usize) -> bool {
        idx == 0
    }

    /// `sigma_{aa}` of the angular slot at a node (1 at the pole, whose chart
    /// is Cartesian).
    pub fn angular_metric(&self, idx: usize) -> f64 {
        if self.is_pole(idx) {
            1.0
        } else {
            let s = self.ring_sin[self.ring_of(idx)];
            s * s
        }
    }

    /// `det sigma` of the full n-dimensional chart at a node.
    pub fn metric_det(&self, idx: usize) -> f64 {
        self.angular_metric(idx).powi(self.angular_multiplicity() as i32)
    }

    /// Smallest node spacing around a node, used by the explicit time step.
    pub fn local_spacing(&self, idx: usize) -> f64 {
        match self.mode {
            Mode::Axisymmetric => self.h_theta,
            Mode::Full2d => {
                if idx == 0 {
                    self.h_theta
                } else {
                    let s = self.ring_sin[self.ring_of(idx)];
                    self.h_theta.min(s * self.h_psi)
                }
            }
        }
    }

    /// Analytic area of the cap against the round metric.
    pub fn analytic_area(&self) -> f64 {
        let p = self.n_dim - 1;
        // Composite 5-point Gauss-Legendre over 64 panels.
        let panels = 64;
        let h = self.theta_max / panels as f64;
        let mut acc = 0.0;
        for i in 0..panels {
            let a = i as f64 * h;
            let mid = a + 0.5 * h;
            for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
                acc += w * 0.5 * h * (mid + 0.5 * h * x).sin().powi(p as i32);
            }
        }
        acc * unit_sphere_area(p)
    }
}
