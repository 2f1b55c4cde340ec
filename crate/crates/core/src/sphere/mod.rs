//! Discrete differential geometry of a geodesic cap of the unit sphere.

mod diff;
mod field;
mod grid;

pub use diff::{gradient, hessian, integrate, neumann_residual, Jet};
pub(crate) use diff::{integrate_values, jets, jets_into, PoleFrame};
pub use field::{round_metric, Boundary, CovectorField, ScalarField, Sym2, SymTensorField};
pub use grid::{unit_sphere_area, CapGrid, GridKey, Mode, Node, Resolution};
