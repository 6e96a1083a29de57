//! The ON/OFF method: solve, compute sensitivities, carve holes at negative
//! minima, repeat.
//!
//! A carve that raises J is reverted and its elements become tabu for the
//! rest of the run, so the best objective seen never increases.

use std::cmp::Ordering;

use log::{debug, info};
use thiserror::Error;

use crate::fem::{NodalField, SolveError, StateSolution};
use crate::materials::{DesignState, Mode};
use crate::mesh::{Mesh, Region};
use crate::problem::Problem;
use crate::sensitivity::{onoff_sensitivities, SensitivityError, SensitivityField};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Initial hole radius in metres; `None` uses twice the mean design-element diameter.
    pub initial_radius: Option<f64>,
    /// r_it = r_0 · radius_factor^it.
    pub radius_factor: f64,
    pub minima_per_iter: usize,
    /// Only minima at or below this fraction of the most negative value qualify.
    pub negative_threshold: f64,
    pub allow_switch_on: bool,
    /// Stop after this many iterations without a new best J.
    pub stop_stagnation: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 29,
            initial_radius: None,
            radius_factor: 0.9,
            minima_per_iter: 1,
            negative_threshold: 0.5,
            allow_switch_on: false,
            stop_stagnation: 5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: &str| Err(OptimizeError::Config(m.to_string()));
        if self.minima_per_iter == 0 {
            return bad("minima_per_iter must be at least 1");
        }
        if !(self.radius_factor > 0.0 && self.radius_factor <= 1.0) {
            return bad("radius_factor must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.negative_threshold) {
            return bad("negative_threshold must lie in [0, 1]");
        }
        if let Some(r) = self.initial_radius {
            if !(r >= 0.0 && r.is_finite()) {
                return bad("initial_radius must be nonnegative");
            }
        }
        Ok(())
    }

    pub fn radius(&self, r0: f64, it: usize) -> f64 {
        r0 * self.radius_factor.powi(it as i32)
    }
}

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error("hole center ({0}, {1}) is not inside the design region")]
    CenterOutside(f64, f64),
    #[error("solver failed at iteration {iteration}: {source}")]
    Solve {
        iteration: usize,
        #[source]
        source: SolveError,
        history: Box<OptimizationHistory>,
    },
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub elem: usize,
    pub center: [f64; 2],
    pub value: f64,
}

/// Negative local minima (`sign = 1`) or positive local maxima (`sign = −1`) of
/// the sensitivity over the adjacency graph of eligible elements.
fn select_extrema(
    sens: &SensitivityField,
    mesh: &Mesh,
    eligible: &dyn Fn(usize) -> bool,
    sign: f64,
    threshold: f64,
    count: usize,
) -> Vec<Extremum> {
    let key = |e: usize| sens.get(e).map(|v| sign * v);
    let candidates: Vec<(usize, f64)> = sens
        .elements
        .iter()
        .zip(&sens.onoff)
        .filter(|(&e, _)| eligible(e))
        .map(|(&e, &v)| (e, sign * v))
        .collect();
    let Some(extreme) = candidates.iter().map(|c| c.1).min_by(f64::total_cmp) else {
        return Vec::new();
    };
    let lower = |a: (f64, usize), b: (f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) == Ordering::Less;
    let mut found: Vec<(usize, f64)> = candidates
        .into_iter()
        .filter(|&(e, v)| {
            v < 0.0
                && v <= threshold * extreme
                && mesh
                    .neighbors(e)
                    .filter(|&n| eligible(n))
                    .all(|n| key(n).is_none_or(|w| lower((v, e), (w, n))))
        })
        .collect();
    found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    found
        .into_iter()
        .take(count)
        .map(|(elem, v)| Extremum { elem, center: mesh.centroid(elem), value: sign * v })
        .collect()
}

/// Up to `minima_per_iter` negative local minima among the eligible (ON, non-tabu) elements.
pub fn select_minima(
    sens: &SensitivityField,
    mesh: &Mesh,
    eligible: &dyn Fn(usize) -> bool,
    cfg: &OptimizerConfig,
) -> Vec<Extremum> {
    select_extrema(sens, mesh, eligible, 1.0, cfg.negative_threshold, cfg.minima_per_iter)
}

/// Positive local maxima among eligible OFF elements, for the switch-ON pass.
pub fn select_maxima(
    sens: &SensitivityField,
    mesh: &Mesh,
    eligible: &dyn Fn(usize) -> bool,
    cfg: &OptimizerConfig,
) -> Vec<Extremum> {
    select_extrema(sens, mesh, eligible, -1.0, cfg.negative_threshold, cfg.minima_per_iter)
}

fn set_disk(
    state: &mut DesignState,
    mesh: &Mesh,
    center: [f64; 2],
    radius: f64,
    on: bool,
    skip: &dyn Fn(usize) -> bool,
) -> Result<Vec<usize>, OptimizeError> {
    let home = mesh
        .locate(center, 0)
        .filter(|&e| mesh.region(e) == Region::Design)
        .ok_or(OptimizeError::CenterOutside(center[0], center[1]))?;
    let mut switched = Vec::new();
    for e in state.elements().to_vec() {
        let c = mesh.centroid(e);
        let inside = e == home || (c[0] - center[0]).hypot(c[1] - center[1]) <= radius;
        if inside && !skip(e) && state.set(e, on) {
            switched.push(e);
        }
    }
    Ok(switched)
}

/// Switches OFF every design element with centroid within `radius` of
/// `center`, plus the element containing `center`. Returns the elements that changed.
pub fn carve_hole(state: &mut DesignState, mesh: &Mesh, center: [f64; 2], radius: f64) -> Result<Vec<usize>, OptimizeError> {
    set_disk(state, mesh, center, radius, false, &|_| false)
}

/// As [`carve_hole`], leaving elements for which `skip` holds untouched.
pub fn carve_hole_avoiding(
    state: &mut DesignState,
    mesh: &Mesh,
    center: [f64; 2],
    radius: f64,
    skip: &dyn Fn(usize) -> bool,
) -> Result<Vec<usize>, OptimizeError> {
    set_disk(state, mesh, center, radius, false, skip)
}

/// Twice the mean diameter of the design elements.
pub fn default_initial_radius(mesh: &Mesh) -> f64 {
    let design = mesh.design_elements();
    if design.is_empty() {
        return 0.0;
    }
    2.0 * design.iter().map(|&e| mesh.diameter(e)).sum::<f64>() / design.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Objective of the design tried at this iteration (reverted or not).
    pub j: f64,
    pub switched: usize,
    pub reverted: bool,
    pub best_j: f64,
    pub radius: f64,
    pub newton_iterations: usize,
    /// Final ‖r‖/‖F‖ of the state solve at this iteration.
    pub newton_residual: f64,
    /// ON/OFF flags after this iteration, aligned with the design element list.
    pub flags: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    Stagnation,
    NoMinima,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationHistory {
    pub design_elements: Vec<usize>,
    pub records: Vec<IterationRecord>,
    pub stop: Option<StopReason>,
    pub tabu: Vec<usize>,
}

impl OptimizationHistory {
    pub fn initial_j(&self) -> f64 {
        self.records[0].j
    }

    pub fn best_j(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.best_j)
    }
}

/// Final design, its state and sensitivities next to the history.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub history: OptimizationHistory,
    pub best: DesignState,
    pub best_u: NodalField,
    pub sensitivities: SensitivityField,
}

fn flags_of(state: &DesignState) -> Vec<bool> {
    state.flags().map(|(_, f)| f).collect()
}

fn final_residual(sol: &StateSolution) -> f64 {
    sol.residual_history.last().copied().unwrap_or(0.0)
}

/// Runs the ON/OFF loop from the all-ON design.
pub fn run_onoff(problem: &Problem, mode: Mode, cfg: &OptimizerConfig) -> Result<OptimizationResult, OptimizeError> {
    cfg.validate()?;
    let mesh = &problem.mesh;
    let mut state = DesignState::all_on(mesh, mode);
    let mut history = OptimizationHistory {
        design_elements: state.elements().to_vec(),
        records: Vec::new(),
        stop: None,
        tabu: Vec::new(),
    };
    let fail = |iteration: usize, source: SolveError, history: &OptimizationHistory| OptimizeError::Solve {
        iteration,
        source,
        history: Box::new(history.clone()),
    };

    let mut current = problem.evaluate(&state, None).map_err(|e| fail(0, e, &history))?;
    let r0 = cfg.initial_radius.unwrap_or_else(|| default_initial_radius(mesh));
    history.records.push(IterationRecord {
        iter: 0,
        j: current.j,
        switched: 0,
        reverted: false,
        best_j: current.j,
        radius: r0,
        newton_iterations: current.state.newton_iterations,
        newton_residual: final_residual(&current.state),
        flags: flags_of(&state),
    });
    info!("iteration 0: J = {:.6e}", current.j);

    let mut tabu = vec![false; mesh.element_count()];
    let mut stale = 0;
    for it in 1..=cfg.max_iters {
        let sens = onoff_sensitivities(mesh, &state, &current.state.u, &current.adjoint.p)?;
        let radius = cfg.radius(r0, it - 1);
        let on_ok = |e: usize| !tabu[e] && state.is_on(e) == Some(true);
        let minima = select_minima(&sens, mesh, &on_ok, cfg);
        let maxima = if cfg.allow_switch_on {
            let off_ok = |e: usize| !tabu[e] && state.is_on(e) == Some(false);
            select_maxima(&sens, mesh, &off_ok, cfg)
        } else {
            Vec::new()
        };
        if minima.is_empty() && maxima.is_empty() {
            history.stop = Some(StopReason::NoMinima);
            break;
        }

        let mut trial = state.clone();
        let mut switched = Vec::new();
        let skip = |e: usize| tabu[e];
        for m in &minima {
            switched.extend(set_disk(&mut trial, mesh, m.center, radius, false, &skip)?);
        }
        for m in &maxima {
            switched.extend(set_disk(&mut trial, mesh, m.center, radius, true, &skip)?);
        }
        debug!("iteration {it}: minima {minima:?}, maxima {maxima:?}, switched {switched:?}");

        let next = problem
            .evaluate(&trial, Some(&current.state.u))
            .map_err(|e| fail(it, e, &history))?;
        let reverted = next.j > current.j;
        let record_j = next.j;
        let newton_iterations = next.state.newton_iterations;
        let newton_residual = final_residual(&next.state);
        if reverted {
            for &e in &switched {
                tabu[e] = true;
            }
        } else {
            state = trial;
            current = next;
        }
        let best_before = history.best_j();
        let best_j = best_before.min(current.j);
        stale = if best_j < best_before { 0 } else { stale + 1 };
        info!(
            "iteration {it}: J = {record_j:.6e}{} ({} switched, r = {radius:.3e})",
            if reverted { " reverted" } else { "" },
            switched.len()
        );
        history.records.push(IterationRecord {
            iter: it,
            j: record_j,
            switched: switched.len(),
            reverted,
            best_j,
            radius,
            newton_iterations,
            newton_residual,
            flags: flags_of(&state),
        });
        if stale >= cfg.stop_stagnation && cfg.stop_stagnation > 0 {
            history.stop = Some(StopReason::Stagnation);
            break;
        }
    }
    if history.stop.is_none() {
        history.stop = Some(StopReason::MaxIterations);
    }
    history.tabu = (0..tabu.len()).filter(|&e| tabu[e]).collect();
    let sensitivities = onoff_sensitivities(mesh, &state, &current.state.u, &current.adjoint.p)?;
    Ok(OptimizationResult { history, best: state, best_u: current.state.u, sensitivities })
}
