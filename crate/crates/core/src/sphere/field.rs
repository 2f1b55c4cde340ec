use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

use super::grid::{CapGrid, GridKey};

/// Boundary behaviour assumed when differencing a field at theta_max.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// The field satisfies the Neumann condition; ghost values are mirrored.
    Neumann,
    /// No condition assumed; one-sided second-order stencils are used.
    Free,
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    key: GridKey,
    values: Vec<f64>,
    boundary: Boundary,
}

impl ScalarField {
    pub fn new(grid: &CapGrid, values: Vec<f64>, boundary: Boundary) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { node, value });
        }
        Ok(Self { key: grid.key(), values, boundary })
    }

    pub fn constant(grid: &CapGrid, value: f64) -> Self {
        Self { key: grid.key(), values: vec![value; grid.len()], boundary: Boundary::Neumann }
    }

    /// Samples `f(theta, psi)` at every node.
    pub fn from_fn(grid: &CapGrid, boundary: Boundary, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|n| f(n.theta, n.psi)).collect();
        Self::new(grid, values, boundary)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn key(&self) -> GridKey {
        self.key
    }

    pub fn check_grid(&self, grid: &CapGrid) -> Result<()> {
        if self.key != grid.key() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Node-wise map; the boundary flag is kept.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            key: self.key,
            values: self.values.iter().map(|&v| f(v)).collect(),
            boundary: self.boundary,
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub(crate) fn from_parts(key: GridKey, values: Vec<f64>, boundary: Boundary) -> Self {
        Self { key, values, boundary }
    }
}

/// Symmetric 2x2 block of tensor components `(a11, a12, a22)` in the node
/// chart. The second slot is the angular slot; see [`CapGrid`] for how it
/// stands for `n - 1` directions in axisymmetric mode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub const fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub const fn diag(a11: f64, a22: f64) -> Self {
        Self { a11, a12: 0.0, a22 }
    }

    pub fn outer(v: [f64; 2]) -> Self {
        Self { a11: v[0] * v[0], a12: v[0] * v[1], a22: v[1] * v[1] }
    }

    pub fn scale(self, s: f64) -> Self {
        Self { a11: s * self.a11, a12: s * self.a12, a22: s * self.a22 }
    }

    pub fn as_matrix(self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a12, self.a22]]
    }

    /// Determinant of the full n x n tensor when the angular slot has the
    /// given multiplicity (the off-diagonal entry vanishes whenever
    /// `mult > 1`).
    pub fn det(self, mult: usize) -> f64 {
        (self.a11 * self.a22 - self.a12 * self.a12) * self.a22.powi(mult as i32 - 1)
    }

    pub fn inverse(self) -> Self {
        let d = self.a11 * self.a22 - self.a12 * self.a12;
        Self { a11: self.a22 / d, a12: -self.a12 / d, a22: self.a11 / d }
    }

    /// `self^{ij} other_{ij}` counted over all n directions.
    pub fn contract(self, other: Sym2, mult: usize) -> f64 {
        self.a11 * other.a11 + 2.0 * self.a12 * other.a12 + mult as f64 * self.a22 * other.a22
    }

    /// `v^i v^j T_{ij}`.
    pub fn quad(self, v: [f64; 2]) -> f64 {
        v[0] * v[0] * self.a11 + 2.0 * v[0] * v[1] * self.a12 + v[1] * v[1] * self.a22
    }

    pub fn max_abs(self) -> f64 {
        self.a11.abs().max(self.a12.abs()).max(self.a22.abs())
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.a11 + o.a11, self.a12 + o.a12, self.a22 + o.a22)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.a11 - o.a11, self.a12 - o.a12, self.a22 - o.a22)
    }
}

impl Mul<f64> for Sym2 {
    type Output = Sym2;
    fn mul(self, s: f64) -> Sym2 {
        self.scale(s)
    }
}

/// Round metric `sigma_ij` at a node.
pub fn round_metric(grid: &CapGrid, idx: usize) -> Sym2 {
    Sym2::diag(1.0, grid.angular_metric(idx))
}

/// Coordinate components `f_i` of a one-form, with cached raised components
/// `f^i = sigma^{ij} f_j` and squared norm.
#[derive(Debug, Clone)]
pub struct CovectorField {
    key: GridKey,
    lower: Vec<[f64; 2]>,
    upper: Vec<[f64; 2]>,
    norm2: Vec<f64>,
}

impl CovectorField {
    pub(crate) fn from_lower(grid: &CapGrid, lower: Vec<[f64; 2]>) -> Self {
        let mult = grid.angular_multiplicity() as f64;
        let mut upper = Vec::with_capacity(lower.len());
        let mut norm2 = Vec::with_capacity(lower.len());
        for (idx, c) in lower.iter().enumerate() {
            let s22 = grid.angular_metric(idx);
            let up = [c[0], c[1] / s22];
            norm2.push(c[0] * up[0] + mult * c[1] * up[1]);
            upper.push(up);
        }
        Self { key: grid.key(), lower, upper, norm2 }
    }

    pub fn key(&self) -> GridKey {
        self.key
    }

    pub fn lower(&self) -> &[[f64; 2]] {
        &self.lower
    }

    pub fn upper(&self) -> &[[f64; 2]] {
        &self.upper
    }

    /// `|Df|^2_sigma` per node.
    pub fn norm2(&self) -> &[f64] {
        &self.norm2
    }

    pub fn sup_norm(&self) -> f64 {
        self.norm2.iter().fold(0.0_f64, |m, v| m.max(v.sqrt()))
    }
}

/// Per-node symmetric tensor components `T_ij`.
#[derive(Debug, Clone)]
pub struct SymTensorField {
    key: GridKey,
    comps: Vec<Sym2>,
}

impl SymTensorField {
    pub(crate) fn new(grid: &CapGrid, comps: Vec<Sym2>) -> Self {
        debug_assert_eq!(comps.len(), grid.len());
        Self { key: grid.key(), comps }
    }

    pub fn key(&self) -> GridKey {
        self.key
    }

    pub fn comps(&self) -> &[Sym2] {
        &self.comps
    }

    /// `sigma^{ij} T_ij` per node.
    pub fn trace_round(&self, grid: &CapGrid) -> Vec<f64> {
        let mult = grid.angular_multiplicity();
        self.comps
            .iter()
            .enumerate()
            .map(|(i, t)| round_metric(grid, i).inverse().contract(*t, mult))
            .collect()
    }
}
