//! Air-gap objective J(u) = ‖B_rad(u) − B_rad^d‖²_{L²(Γ0)} and its adjoint.
//!
//! On the circle Γ0 the radial induction is the tangential derivative of the
//! potential, B_rad = ∇u·τ with τ = (−sin θ, cos θ). For P1 fields this is
//! piecewise constant along Γ0, so the integral uses a composite midpoint rule.

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::fem::{assemble_newton_matrix, norm, DofMap, LinearSolver, NodalField, SolveError, SolverOptions};
use crate::materials::{BHModel, DesignState, Mode};
use crate::mesh::{Mesh, Region};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GapError {
    #[error("need at least 8 quadrature points on the gap circle, got {0}")]
    TooFewPoints(usize),
    #[error("gap circle point at theta = {theta} lies outside the mesh")]
    Outside { theta: f64 },
    #[error("gap circle point at theta = {theta} lies in {region} element {elem}, not in air")]
    NotInAir { theta: f64, elem: usize, region: Region },
    #[error("gap circle radius must be positive, got {0}")]
    Radius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapPoint {
    pub theta: f64,
    /// Arc-length weight.
    pub weight: f64,
    pub elem: usize,
    pub tangent: [f64; 2],
}

/// Quadrature on the quarter circle of radius `radius` centred at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct GapCircle {
    pub radius: f64,
    pub points: Vec<GapPoint>,
}

/// Desired radial induction `amplitude · sin(harmonic · θ)` in tesla.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetCurve {
    pub amplitude: f64,
    pub harmonic: f64,
}

impl Default for TargetCurve {
    fn default() -> Self {
        Self { amplitude: 0.5, harmonic: 4.0 }
    }
}

impl TargetCurve {
    pub fn eval(&self, theta: f64) -> f64 {
        self.amplitude * (self.harmonic * theta).sin()
    }
}

/// Places `n_q` midpoint-rule nodes on Γ0 and locates each in the mesh.
///
/// `tangent_sign = 1` orients τ counterclockwise.
pub fn build_gap_circle(mesh: &Mesh, radius: f64, n_q: usize, tangent_sign: f64) -> Result<GapCircle, GapError> {
    if n_q < 8 {
        return Err(GapError::TooFewPoints(n_q));
    }
    if !(radius > 0.0) {
        return Err(GapError::Radius(radius));
    }
    let dtheta = FRAC_PI_2 / n_q as f64;
    let mut points = Vec::with_capacity(n_q);
    let mut hint = 0;
    for q in 0..n_q {
        let theta = (q as f64 + 0.5) * dtheta;
        let (s, c) = theta.sin_cos();
        let x = [radius * c, radius * s];
        let elem = mesh.locate(x, hint).ok_or(GapError::Outside { theta })?;
        let region = mesh.region(elem);
        if region != Region::Air {
            return Err(GapError::NotInAir { theta, elem, region });
        }
        hint = elem;
        points.push(GapPoint {
            theta,
            weight: radius * dtheta,
            elem,
            tangent: [-tangent_sign * s, tangent_sign * c],
        });
    }
    Ok(GapCircle { radius, points })
}

/// B_rad at every quadrature point.
pub fn radial_flux_trace(gap: &GapCircle, mesh: &Mesh, u: &NodalField) -> Vec<f64> {
    gap.points
        .iter()
        .map(|p| {
            let g = u.gradient(mesh, p.elem);
            g[0] * p.tangent[0] + g[1] * p.tangent[1]
        })
        .collect()
}

/// J(u) = Σ_q w_q (b_q − B_rad^d(θ_q))².
pub fn objective(gap: &GapCircle, mesh: &Mesh, target: &TargetCurve, u: &NodalField) -> f64 {
    radial_flux_trace(gap, mesh, u)
        .iter()
        .zip(&gap.points)
        .map(|(b, p)| p.weight * (b - target.eval(p.theta)).powi(2))
        .sum()
}

/// J(a) − J(b) as Σ w (b_a − b_b)(b_a + b_b − 2 B_rad^d), without cancelling two J values.
pub fn objective_difference(gap: &GapCircle, mesh: &Mesh, target: &TargetCurve, a: &NodalField, b: &NodalField) -> f64 {
    let diff = NodalField { values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect() };
    let ta = radial_flux_trace(gap, mesh, a);
    let tb = radial_flux_trace(gap, mesh, b);
    let td = radial_flux_trace(gap, mesh, &diff);
    gap.points
        .iter()
        .zip(ta.iter().zip(&tb).zip(&td))
        .map(|(p, ((x, y), d))| p.weight * d * (x + y - 2.0 * target.eval(p.theta)))
        .sum()
}

/// ∂J/∂u as a nodal dual vector (entries on Dirichlet nodes included).
pub fn objective_gradient(gap: &GapCircle, mesh: &Mesh, target: &TargetCurve, u: &NodalField) -> Vec<f64> {
    let mut out = vec![0.0; mesh.node_count()];
    let trace = radial_flux_trace(gap, mesh, u);
    for (p, b) in gap.points.iter().zip(trace) {
        let coeff = 2.0 * p.weight * (b - target.eval(p.theta));
        if coeff == 0.0 {
            continue;
        }
        let geom = mesh.element_geometry(p.elem).expect("located element");
        for (i, &n) in mesh.triangles()[p.elem].nodes.iter().enumerate() {
            let gi = geom.grad_basis[i];
            out[n] += coeff * (gi[0] * p.tangent[0] + gi[1] * p.tangent[1]);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct AdjointSolveReport {
    pub p: NodalField,
    /// ‖(K+N)p + ∂J/∂u‖ / ‖∂J/∂u‖ over free dofs.
    pub residual: f64,
    pub mode: Mode,
}

/// Solves (K + N)ᵀ p = −∂J/∂u at the converged state `u`.
///
/// K + N is symmetric, so the transpose is the matrix itself. In linear mode
/// N vanishes and this is the plain stiffness solve.
pub fn solve_adjoint(
    mesh: &Mesh,
    model: &BHModel,
    state: &DesignState,
    u: &NodalField,
    djdu: &[f64],
    opts: &SolverOptions,
) -> Result<AdjointSolveReport, SolveError> {
    if djdu.len() != mesh.node_count() {
        return Err(SolveError::Length { got: djdu.len(), expected: mesh.node_count() });
    }
    let dofs = DofMap::new(mesh);
    let rhs: Vec<f64> = dofs.restrict(djdu).into_iter().map(|v| -v).collect();
    let matrix = assemble_newton_matrix(mesh, &dofs, model, state, u);
    debug_assert!(matrix.max_asymmetry() <= 1e-12 * matrix.max_abs());
    let solver = LinearSolver::new(matrix)?;
    let x = solver.solve(&rhs, opts.linear_tol)?;
    let rnorm = norm(&rhs);
    let residual = if rnorm == 0.0 {
        0.0
    } else {
        let kx = solver.matrix().mul_vec(&x);
        norm(&kx.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>()) / rnorm
    };
    Ok(AdjointSolveReport { p: NodalField { values: dofs.extend(&x) }, residual, mode: state.mode })
}
