//! Simulation and verification of the inverse curvature flow
//! `dX/dt = nu / (|X|^alpha H)` for star-shaped graphs over a geodesic cap,
//! meeting the boundary cone perpendicularly.
//!
//! The flow is integrated through the scalar log-radius `phi = log u`, which
//! satisfies a quasilinear parabolic equation with a homogeneous Neumann
//! condition. Recorded trajectories are then checked against the a-priori
//! estimates the flow is known to satisfy.

pub mod cli;
pub mod error;
pub mod flow;
pub mod graph;
pub mod rescale;
pub mod sphere;
pub mod verify;

pub use error::{Error, Result};
