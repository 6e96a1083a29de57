//! ON/OFF sensitivities dJ/dν_k and the topological derivative field.
//!
//! With the adjoint `p` solving (K+N)p = −∂J/∂u, perturbing ν by a constant on
//! element T_k changes J at the rate pᵀ(∂K/∂ν_k)u = |T_k| ∇u·∇p. The
//! topological derivative for a small inclusion of shape D at x0 is
//! G(x0) = ν1 ∇u0ᵀ P ∇p0.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::fem::{NodalField, SolveError};
use crate::materials::{DesignState, Mode};
use crate::mesh::{Mesh, Region};
use crate::polarization::{disk_factor, PolarizationMatrix};
use crate::problem::Problem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensitivityError {
    #[error("{what} has {got} entries, mesh has {expected} nodes")]
    Length { what: &'static str, got: usize, expected: usize },
    #[error("the topological derivative is only available in linear mode")]
    UnsupportedMode,
}

/// Per-design-element sensitivities, aligned with `elements`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityField {
    pub elements: Vec<usize>,
    pub onoff: Vec<f64>,
    /// G at element centroids; absent in nonlinear mode.
    pub topo: Option<Vec<f64>>,
    /// No vertex shared with a non-design element or the Dirichlet boundary.
    pub interior: Vec<bool>,
    pub mode: Mode,
    pub iteration: usize,
}

impl SensitivityField {
    pub fn get(&self, elem: usize) -> Option<f64> {
        self.elements.binary_search(&elem).ok().map(|k| self.onoff[k])
    }
}

/// Which polarization matrix enters G.
#[derive(Debug, Clone, PartialEq)]
pub enum Polarization {
    Disk,
    Matrix(Matrix2<f64>),
}

impl Polarization {
    pub fn matrix(&self, nu0: f64, nu1: f64) -> Matrix2<f64> {
        match self {
            Polarization::Disk => Matrix2::identity() * disk_factor(nu0, nu1),
            Polarization::Matrix(m) => *m,
        }
    }
}

impl From<&PolarizationMatrix> for Polarization {
    fn from(p: &PolarizationMatrix) -> Self {
        Polarization::Matrix(p.matrix)
    }
}

/// |T| ∇u·∇p.
pub fn element_sensitivity(area: f64, grad_u: [f64; 2], grad_p: [f64; 2]) -> f64 {
    area * (grad_u[0] * grad_p[0] + grad_u[1] * grad_p[1])
}

/// ν1 ∇u0ᵀ P ∇p0.
pub fn topological_derivative(nu1: f64, p: &Matrix2<f64>, grad_u: [f64; 2], grad_p: [f64; 2]) -> f64 {
    nu1 * Vector2::from(grad_u).dot(&(p * Vector2::from(grad_p)))
}

fn check_len(mesh: &Mesh, what: &'static str, f: &NodalField) -> Result<(), SensitivityError> {
    if f.values.len() != mesh.node_count() {
        return Err(SensitivityError::Length { what, got: f.values.len(), expected: mesh.node_count() });
    }
    Ok(())
}

/// Design elements whose vertices all lie strictly inside the design region.
pub fn interior_flags(mesh: &Mesh, elements: &[usize]) -> Vec<bool> {
    let mut touches_other = vec![false; mesh.node_count()];
    for t in mesh.triangles() {
        if t.region != Region::Design {
            t.nodes.iter().for_each(|&n| touches_other[n] = true);
        }
    }
    elements
        .iter()
        .map(|&e| mesh.triangles()[e].nodes.iter().all(|&n| !touches_other[n] && !mesh.is_dirichlet(n)))
        .collect()
}

/// dJ/dν_k for every design element.
pub fn onoff_sensitivities(
    mesh: &Mesh,
    state: &DesignState,
    u: &NodalField,
    p: &NodalField,
) -> Result<SensitivityField, SensitivityError> {
    check_len(mesh, "state", u)?;
    check_len(mesh, "adjoint", p)?;
    let elements = state.elements().to_vec();
    let onoff = elements
        .iter()
        .map(|&e| element_sensitivity(mesh.geom(e).area, u.gradient(mesh, e), p.gradient(mesh, e)))
        .collect();
    let interior = interior_flags(mesh, &elements);
    Ok(SensitivityField { elements, onoff, topo: None, interior, mode: state.mode, iteration: 0 })
}

/// G at the centroid of every design element (P1 gradients are constant per element).
pub fn topological_derivative_field(
    mesh: &Mesh,
    state: &DesignState,
    u0: &NodalField,
    p0: &NodalField,
    nu0: f64,
    nu1: f64,
    polarization: &Polarization,
) -> Result<Vec<f64>, SensitivityError> {
    if state.mode != Mode::Linear {
        return Err(SensitivityError::UnsupportedMode);
    }
    check_len(mesh, "state", u0)?;
    check_len(mesh, "adjoint", p0)?;
    let p = polarization.matrix(nu0, nu1);
    Ok(state
        .elements()
        .iter()
        .map(|&e| topological_derivative(nu1, &p, u0.gradient(mesh, e), p0.gradient(mesh, e)))
        .collect())
}

/// Central difference (J(ν_k+h) − J(ν_k−h)) / 2h with two full state solves.
///
/// Both perturbed solves start from the unperturbed state, and the difference
/// of objectives is formed trace-wise so that small sensitivities survive.
pub fn sensitivity_fd_oracle(problem: &Problem, state: &DesignState, elem: usize, h: f64) -> Result<f64, SolveError> {
    let base = problem.solve(state, None)?.u;
    let plus = problem.solve(&state.with_shift(elem, h), Some(&base))?.u;
    let minus = problem.solve(&state.with_shift(elem, -h), Some(&base))?.u;
    Ok(problem.objective_difference(&plus, &minus) / (2.0 * h))
}
