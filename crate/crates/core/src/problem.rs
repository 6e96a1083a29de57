//! A magnetostatic design problem: mesh, material law, gap objective and
//! solver settings, with the solve → objective → adjoint chain.

use crate::fem::{solve_state_from, NodalField, SolveError, SolverOptions, StateSolution};
use crate::materials::{BHModel, DesignState};
use crate::mesh::{generate_motor_mesh, Mesh, MotorGeometry};
use crate::objective::{build_gap_circle, objective, objective_difference, objective_gradient, solve_adjoint, AdjointSolveReport, GapCircle, TargetCurve};

#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh,
    pub model: BHModel,
    pub gap: GapCircle,
    pub target: TargetCurve,
    pub opts: SolverOptions,
}

/// State, objective and adjoint at one design.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub state: StateSolution,
    pub j: f64,
    pub adjoint: AdjointSolveReport,
}

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Gap(#[from] crate::objective::GapError),
}

impl Problem {
    /// Quarter-motor benchmark at mesh size `h` with the gap circle at `geom.gap_circle`.
    pub fn motor(geom: &MotorGeometry, h: f64, model: BHModel, n_q: usize) -> Result<Self, ProblemError> {
        let mesh = generate_motor_mesh(geom, h)?;
        let gap = build_gap_circle(&mesh, geom.gap_circle, n_q, 1.0)?;
        Ok(Self { mesh, model, gap, target: TargetCurve::default(), opts: SolverOptions::default() })
    }

    pub fn solve(&self, design: &DesignState, warm: Option<&NodalField>) -> Result<StateSolution, SolveError> {
        solve_state_from(&self.mesh, &self.model, design, &self.opts, warm)
    }

    pub fn objective(&self, u: &NodalField) -> f64 {
        objective(&self.gap, &self.mesh, &self.target, u)
    }

    /// J(a) − J(b) evaluated without cancellation.
    pub fn objective_difference(&self, a: &NodalField, b: &NodalField) -> f64 {
        objective_difference(&self.gap, &self.mesh, &self.target, a, b)
    }

    pub fn adjoint(&self, design: &DesignState, u: &NodalField) -> Result<AdjointSolveReport, SolveError> {
        let djdu = objective_gradient(&self.gap, &self.mesh, &self.target, u);
        solve_adjoint(&self.mesh, &self.model, design, u, &djdu, &self.opts)
    }

    pub fn evaluate(&self, design: &DesignState, warm: Option<&NodalField>) -> Result<Evaluation, SolveError> {
        let state = self.solve(design, warm)?;
        let j = self.objective(&state.u);
        let adjoint = self.adjoint(design, &state.u)?;
        Ok(Evaluation { state, j, adjoint })
    }
}
