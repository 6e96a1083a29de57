//! P1 finite elements for −div(ν(|∇u|)∇u) = F with u = 0 on the Dirichlet boundary.
//!
//! The load is ⟨F, v⟩ = ∫ M⊥·∇v over magnet triangles, M⊥ = (−M_y, M_x).
//! Nonlinear problems are solved by damped Newton with Jacobian K(u) + N(u),
//! where N carries the ν̂'(s)/s (∇u·∇φ_i)(∇u·∇φ_j) term.

mod sparse;

pub use sparse::{Cholesky, DofMap, SparseOperator};
pub(crate) use sparse::norm;

use log::debug;
use thiserror::Error;

use crate::materials::{reluctivity, reluctivity_derivative_over_s, BHModel, DesignState, Mode};
use crate::mesh::{Mesh, Region};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix is not positive definite (pivot at dof {pivot}: {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("linear solve did not reach tolerance {tol:e} after {iterations} refinement steps (residual {residual:e})")]
    NonConvergence { tol: f64, iterations: usize, residual: f64 },
    #[error("Newton stagnated at iteration {iteration}: line search failed after {backtracks} backtracks; residual history {trace:?}")]
    NewtonStagnation { iteration: usize, backtracks: usize, trace: Vec<f64> },
    #[error("Newton did not converge in {iterations} iterations; residual history {trace:?}")]
    NewtonMaxIterations { iterations: usize, trace: Vec<f64> },
    #[error("vector length {got} does not match {expected}")]
    Length { got: usize, expected: usize },
}

/// P1 coefficient vector, one value per mesh node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self { values: vec![0.0; mesh.node_count()] }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self { values: mesh.nodes().iter().map(|&p| f(p)).collect() }
    }

    /// Constant gradient on element `elem`.
    pub fn gradient(&self, mesh: &Mesh, elem: usize) -> [f64; 2] {
        let t = mesh.triangles()[elem].nodes;
        mesh.geom(elem).gradient(t.map(|n| self.values[n]))
    }

    /// |∇u| per element.
    pub fn gradient_norms(&self, mesh: &Mesh) -> Vec<f64> {
        (0..mesh.element_count())
            .map(|e| {
                let g = self.gradient(mesh, e);
                g[0].hypot(g[1])
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual for linear solves.
    pub linear_tol: f64,
    /// ‖r‖/‖F‖ at which Newton stops.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_backtracks: usize,
    /// Sufficient decrease constant of the residual-norm line search.
    pub armijo: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { linear_tol: 1e-10, newton_tol: 1e-8, max_newton: 50, max_backtracks: 30, armijo: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct StateSolution {
    pub u: NodalField,
    pub newton_iterations: usize,
    /// ‖r‖/‖F‖ after each accepted step, starting with the initial guess.
    pub residual_history: Vec<f64>,
}

/// Load vector over free dofs from the magnet regions.
pub fn assemble_rhs(mesh: &Mesh, dofs: &DofMap) -> Vec<f64> {
    let mut f = vec![0.0; dofs.len()];
    for (e, t) in mesh.triangles().iter().enumerate() {
        let Region::Magnet(id) = t.region else { continue };
        let m = mesh.magnet(id).expect("validated magnet").magnetization;
        let perp = [-m[1], m[0]];
        let g = mesh.geom(e);
        for (i, &n) in t.nodes.iter().enumerate() {
            if let Some(d) = dofs.dof(n) {
                f[d] += g.area * (perp[0] * g.grad_basis[i][0] + perp[1] * g.grad_basis[i][1]);
            }
        }
    }
    f
}

/// ∫ f φ_i over free dofs, edge-midpoint rule (exact for quadratics).
pub fn assemble_source(mesh: &Mesh, dofs: &DofMap, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; dofs.len()];
    for (e, t) in mesh.triangles().iter().enumerate() {
        let p = mesh.vertices(e);
        let mid = |a: usize, b: usize| f([(p[a][0] + p[b][0]) / 2.0, (p[a][1] + p[b][1]) / 2.0]);
        let (m01, m12, m20) = (mid(0, 1), mid(1, 2), mid(2, 0));
        let w = mesh.geom(e).area / 6.0;
        let local = [w * (m01 + m20), w * (m01 + m12), w * (m12 + m20)];
        for (i, &n) in t.nodes.iter().enumerate() {
            if let Some(d) = dofs.dof(n) {
                out[d] += local[i];
            }
        }
    }
    out
}

fn assemble(
    mesh: &Mesh,
    dofs: &DofMap,
    u: &NodalField,
    mut local: impl FnMut(usize, &[f64; 2]) -> (f64, f64),
) -> SparseOperator {
    let mut triplets = Vec::with_capacity(9 * mesh.element_count());
    for (e, t) in mesh.triangles().iter().enumerate() {
        let g = mesh.geom(e);
        let grad_u = u.gradient(mesh, e);
        let (nu, dnu_over_s) = local(e, &grad_u);
        let gu: [f64; 3] = std::array::from_fn(|i| grad_u[0] * g.grad_basis[i][0] + grad_u[1] * g.grad_basis[i][1]);
        for i in 0..3 {
            let Some(di) = dofs.dof(t.nodes[i]) else { continue };
            for j in 0..3 {
                let Some(dj) = dofs.dof(t.nodes[j]) else { continue };
                let gij = g.grad_basis[i][0] * g.grad_basis[j][0] + g.grad_basis[i][1] * g.grad_basis[j][1];
                let mut v = nu * g.area * gij;
                if dnu_over_s != 0.0 {
                    v += dnu_over_s * g.area * gu[i] * gu[j];
                }
                triplets.push((di, dj, v));
            }
        }
    }
    SparseOperator::from_triplets(dofs.len(), triplets)
}

/// K(u): entries ν(T, |∇u|_T)·|T|·∇φ_i·∇φ_j over free dofs.
pub fn assemble_stiffness(
    mesh: &Mesh,
    dofs: &DofMap,
    model: &BHModel,
    state: &DesignState,
    u: &NodalField,
) -> SparseOperator {
    assemble(mesh, dofs, u, |e, g| (reluctivity(model, state, mesh, e, g[0].hypot(g[1])), 0.0))
}

/// Newton matrix K(u) + N(u).
pub fn assemble_newton_matrix(
    mesh: &Mesh,
    dofs: &DofMap,
    model: &BHModel,
    state: &DesignState,
    u: &NodalField,
) -> SparseOperator {
    assemble(mesh, dofs, u, |e, g| {
        let s = g[0].hypot(g[1]);
        (
            reluctivity(model, state, mesh, e, s),
            reluctivity_derivative_over_s(model, state, mesh, e, s),
        )
    })
}

/// Nonlinear residual K(u)u − F over free dofs.
pub fn residual(
    mesh: &Mesh,
    dofs: &DofMap,
    model: &BHModel,
    state: &DesignState,
    u: &NodalField,
    load: &[f64],
) -> Vec<f64> {
    let mut r: Vec<f64> = load.iter().map(|f| -f).collect();
    for (e, t) in mesh.triangles().iter().enumerate() {
        let g = mesh.geom(e);
        let grad_u = u.gradient(mesh, e);
        let nu = reluctivity(model, state, mesh, e, grad_u[0].hypot(grad_u[1]));
        for (i, &n) in t.nodes.iter().enumerate() {
            if let Some(d) = dofs.dof(n) {
                r[d] += nu * g.area * (grad_u[0] * g.grad_basis[i][0] + grad_u[1] * g.grad_basis[i][1]);
            }
        }
    }
    r
}

/// A factorized SPD operator that solves to a relative residual tolerance.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    matrix: SparseOperator,
    factor: Cholesky,
}

impl LinearSolver {
    /// Steps of iterative refinement before giving up.
    pub const MAX_REFINEMENT: usize = 5;

    pub fn new(matrix: SparseOperator) -> Result<Self, SolveError> {
        let factor = Cholesky::new(&matrix)?;
        Ok(Self { matrix, factor })
    }

    pub fn matrix(&self) -> &SparseOperator {
        &self.matrix
    }

    /// Solves `K x = f` with ‖Kx − f‖ ≤ tol·‖f‖.
    pub fn solve(&self, f: &[f64], tol: f64) -> Result<Vec<f64>, SolveError> {
        if f.len() != self.matrix.dim() {
            return Err(SolveError::Length { got: f.len(), expected: self.matrix.dim() });
        }
        let fnorm = norm(f);
        if fnorm == 0.0 {
            return Ok(vec![0.0; f.len()]);
        }
        let mut x = self.factor.solve(f);
        let mut rel = f64::INFINITY;
        for it in 0..=Self::MAX_REFINEMENT {
            let kx = self.matrix.mul_vec(&x);
            let r: Vec<f64> = f.iter().zip(&kx).map(|(a, b)| a - b).collect();
            rel = norm(&r) / fnorm;
            if rel <= tol {
                return Ok(x);
            }
            if it < Self::MAX_REFINEMENT {
                let dx = self.factor.solve(&r);
                x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            }
        }
        Err(SolveError::NonConvergence { tol, iterations: Self::MAX_REFINEMENT, residual: rel })
    }
}

/// Solves `K u = F` for an SPD `K`.
pub fn solve_linear(k: &SparseOperator, f: &[f64], tol: f64) -> Result<Vec<f64>, SolveError> {
    LinearSolver::new(k.clone())?.solve(f, tol)
}

/// Solves the state equation from a zero initial guess.
pub fn solve_state(
    mesh: &Mesh,
    model: &BHModel,
    state: &DesignState,
    opts: &SolverOptions,
) -> Result<StateSolution, SolveError> {
    solve_state_from(mesh, model, state, opts, None)
}

/// Solves the state equation; `initial` warm-starts the Newton iteration.
pub fn solve_state_from(
    mesh: &Mesh,
    model: &BHModel,
    state: &DesignState,
    opts: &SolverOptions,
    initial: Option<&NodalField>,
) -> Result<StateSolution, SolveError> {
    let dofs = DofMap::new(mesh);
    let load = assemble_rhs(mesh, &dofs);
    let fnorm = norm(&load);
    if fnorm == 0.0 {
        return Ok(StateSolution { u: NodalField::zeros(mesh), newton_iterations: 0, residual_history: vec![0.0] });
    }

    let warm = initial.filter(|u0| u0.values.len() == mesh.node_count()).map(|u0| {
        let mut u0 = u0.clone();
        for (n, v) in u0.values.iter_mut().enumerate() {
            if mesh.is_dirichlet(n) {
                *v = 0.0;
            }
        }
        u0
    });

    if state.mode == Mode::Linear {
        let k = assemble_stiffness(mesh, &dofs, model, state, &NodalField::zeros(mesh));
        let solver = LinearSolver::new(k)?;
        // a warm start turns the solve into a correction u0 + K⁻¹(F − K u0)
        let x = match &warm {
            Some(u0) => {
                let x0 = dofs.restrict(&u0.values);
                let kx0 = solver.matrix().mul_vec(&x0);
                let r: Vec<f64> = load.iter().zip(&kx0).map(|(f, k)| f - k).collect();
                let dx = solver.solve(&r, opts.linear_tol * fnorm / norm(&r).max(f64::MIN_POSITIVE))?;
                x0.iter().zip(&dx).map(|(a, b)| a + b).collect()
            }
            None => solver.solve(&load, opts.linear_tol)?,
        };
        let u = NodalField { values: dofs.extend(&x) };
        let r = norm(&residual(mesh, &dofs, model, state, &u, &load)) / fnorm;
        return Ok(StateSolution { u, newton_iterations: 0, residual_history: vec![r] });
    }

    let warm_started = warm.is_some();
    let mut u = match warm {
        Some(u0) => u0,
        None => NodalField::zeros(mesh),
    };
    let mut r = residual(mesh, &dofs, model, state, &u, &load);
    let mut rnorm = norm(&r);
    let mut trace = vec![rnorm / fnorm];

    // a warm start already within tolerance still takes one step, so that
    // small coefficient changes are not swallowed by the stopping test
    let min_steps = usize::from(warm_started);
    for iteration in 0..opts.max_newton {
        if iteration >= min_steps && rnorm / fnorm <= opts.newton_tol {
            debug!("newton converged in {iteration} iterations, residual {:e}", rnorm / fnorm);
            return Ok(StateSolution { u, newton_iterations: iteration, residual_history: trace });
        }
        let jac = assemble_newton_matrix(mesh, &dofs, model, state, &u);
        let step = LinearSolver::new(jac)?.solve(&r, opts.linear_tol.min(1e-2 * opts.newton_tol))?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let mut trial = u.clone();
            for (d, s) in step.iter().enumerate() {
                trial.values[dofs.node(d)] -= t * s;
            }
            let r_trial = residual(mesh, &dofs, model, state, &trial, &load);
            let n_trial = norm(&r_trial);
            if n_trial <= (1.0 - opts.armijo * t) * rnorm {
                accepted = Some((trial, r_trial, n_trial));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, r_trial, n_trial)) = accepted else {
            if rnorm / fnorm <= opts.newton_tol {
                return Ok(StateSolution { u, newton_iterations: iteration, residual_history: trace });
            }
            return Err(SolveError::NewtonStagnation {
                iteration,
                backtracks: opts.max_backtracks,
                trace,
            });
        };
        u = trial;
        r = r_trial;
        rnorm = n_trial;
        trace.push(rnorm / fnorm);
    }
    if rnorm / fnorm <= opts.newton_tol {
        return Ok(StateSolution { u, newton_iterations: opts.max_newton, residual_history: trace });
    }
    Err(SolveError::NewtonMaxIterations { iterations: opts.max_newton, trace })
}

// Strang-Fix 6-point rule, degree 4, barycentric points and weights summing to 1.
const QUAD6: [([f64; 3], f64); 6] = {
    const A: f64 = 0.445_948_490_915_965;
    const B: f64 = 0.091_576_213_509_771;
    const WA: f64 = 0.223_381_589_678_011;
    const WB: f64 = 0.109_951_743_655_322;
    [
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
};

/// ‖u_h − u*‖_{L²(Ω)}.
pub fn l2_error(mesh: &Mesh, u: &NodalField, exact: impl Fn([f64; 2]) -> f64) -> f64 {
    let mut sum = 0.0;
    for (e, t) in mesh.triangles().iter().enumerate() {
        let p = mesh.vertices(e);
        let v = t.nodes.map(|n| u.values[n]);
        let area = mesh.geom(e).area;
        for (l, w) in QUAD6 {
            let x = [
                l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
            ];
            let uh = l[0] * v[0] + l[1] * v[1] + l[2] * v[2];
            sum += w * area * (uh - exact(x)).powi(2);
        }
    }
    sum.sqrt()
}
