use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use log::{info, warn};

use magtopo_core::fem::NodalField;
use magtopo_core::materials::{reluctivity, DesignState, Mode};
use magtopo_core::mesh::{Mesh, Region};
use magtopo_core::objective::radial_flux_trace;
use magtopo_core::optimizer::{run_onoff, OptimizeError};
use magtopo_core::polarization::{disk_factor, panelize, polarization_matrix, PolarizationError, ShapeSpec};
use magtopo_core::problem::Problem;
use magtopo_core::sensitivity::{onoff_sensitivities, sensitivity_fd_oracle, topological_derivative_field, Polarization};

use crate::config::RunConfig;
use crate::export::{write_design, write_history, write_sensitivities, write_trace, Vtk};

/// Command failure, split by exit status.
#[derive(Debug)]
pub enum Failure {
    /// Invalid configuration or arguments (exit 2).
    Config(anyhow::Error),
    /// Solver or I/O failure (exit 1).
    Run(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Run(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

trait ConfigContext<T> {
    fn config(self) -> Result<T, Failure>;
}

impl<T> ConfigContext<T> for Result<T> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(Failure::Config)
    }
}

struct Setup {
    problem: Problem,
    mode: Mode,
    out: std::path::PathBuf,
}

fn setup(cfg: &RunConfig) -> Result<Setup, Failure> {
    cfg.validate().config()?;
    let problem = cfg.problem().config()?;
    let out = cfg.output.dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(Setup { problem, mode: cfg.mode().config()?, out })
}

fn region_code(r: Region) -> f64 {
    match r {
        Region::Air => 0.0,
        Region::Iron => 1.0,
        Region::Design => 2.0,
        Region::Magnet(id) => 10.0 + id as f64,
    }
}

/// Cell fields shared by every VTK export: region, flag, |B| and ν.
fn base_vtk<'a>(problem: &'a Problem, state: &DesignState, u: &NodalField, title: &str) -> Vtk<'a> {
    let mesh = &problem.mesh;
    let b = u.gradient_norms(mesh);
    let nu = (0..mesh.element_count()).map(|e| reluctivity(&problem.model, state, mesh, e, b[e])).collect();
    let flag = (0..mesh.element_count())
        .map(|e| state.is_on(e).map_or(-1.0, |f| f64::from(u8::from(f))))
        .collect();
    Vtk::new(mesh, title)
        .point("u", u.values.clone())
        .cell("region", mesh.triangles().iter().map(|t| region_code(t.region)).collect())
        .cell("flag", flag)
        .cell("B", b)
        .cell("nu", nu)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn export_trace(problem: &Problem, u: &NodalField, out: &Path) -> Result<()> {
    let trace = radial_flux_trace(&problem.gap, &problem.mesh, u);
    let path = out.join("trace.csv");
    write_trace(&path, &problem.gap, &trace, |t| problem.target.eval(t)).with_context(|| format!("writing {}", path.display()))
}

fn mesh_summary(s: &mut String, mesh: &Mesh, mode: Mode) {
    writeln!(s, "mode = {mode}").unwrap();
    writeln!(s, "nodes = {}", mesh.node_count()).unwrap();
    writeln!(s, "elements = {}", mesh.element_count()).unwrap();
    writeln!(s, "design_elements = {}", mesh.design_elements().len()).unwrap();
}

pub fn solve(cfg: &RunConfig) -> Result<(), Failure> {
    let Setup { problem, mode, out } = setup(cfg)?;
    let state = DesignState::all_on(&problem.mesh, mode);
    let sol = problem.solve(&state, None).context("state solve")?;
    let j = problem.objective(&sol.u);

    export_trace(&problem, &sol.u, &out)?;
    if cfg.output.vtk {
        let path = out.join("u.vtk");
        base_vtk(&problem, &state, &sol.u, "magtopo solve").save(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut s = String::from("command = solve\n");
    mesh_summary(&mut s, &problem.mesh, mode);
    writeln!(s, "newton_iterations = {}", sol.newton_iterations).unwrap();
    writeln!(s, "residual = {:e}", sol.residual_history.last().copied().unwrap_or(0.0)).unwrap();
    writeln!(s, "J = {j:e}").unwrap();
    write_file(&out.join("summary.txt"), &s)?;
    print!("{s}");
    Ok(())
}

/// Evenly spread sample of `count` entries out of `n`.
fn spread(n: usize, count: usize) -> Vec<usize> {
    let count = count.min(n);
    (0..count).map(|k| (2 * k + 1) * n / (2 * count)).collect()
}

pub fn sensitivity(cfg: &RunConfig) -> Result<(), Failure> {
    let Setup { problem, mode, out } = setup(cfg)?;
    let mesh = &problem.mesh;
    let state = DesignState::all_on(mesh, mode);
    let eval = problem.evaluate(&state, None).context("state/adjoint solve")?;
    let mut sens = onoff_sensitivities(mesh, &state, &eval.state.u, &eval.adjoint.p).map_err(|e| Failure::Run(e.into()))?;

    let (nu0, nu1) = (problem.model.nu0, problem.model.nu1);
    if mode == Mode::Linear {
        let shape: ShapeSpec = cfg.sensitivity.shape.parse().context("sensitivity.shape").config()?;
        let pol = match shape {
            ShapeSpec::Disk => Polarization::Disk,
            other => {
                let panels = panelize(&other, cfg.sensitivity.panels).context("sensitivity.shape").config()?;
                Polarization::from(&polarization_matrix(&panels, nu0, nu1).context("polarization matrix")?)
            }
        };
        let topo = topological_derivative_field(mesh, &state, &eval.state.u, &eval.adjoint.p, nu0, nu1, &pol)
            .map_err(|e| Failure::Run(e.into()))?;
        sens.topo = Some(topo);
    } else {
        info!("nonlinear mode: topological derivative not available");
    }

    write_sensitivities(&out.join("sens.csv"), mesh, &sens).context("writing sens.csv")?;
    if cfg.output.vtk {
        let mut onoff = vec![0.0; mesh.element_count()];
        let mut vtk = base_vtk(&problem, &state, &eval.state.u, "magtopo sensitivity");
        for (e, v) in sens.elements.iter().zip(&sens.onoff) {
            onoff[*e] = *v;
        }
        vtk = vtk.cell("onoff", onoff);
        if let Some(topo) = &sens.topo {
            let mut full = vec![0.0; mesh.element_count()];
            for (e, v) in sens.elements.iter().zip(topo) {
                full[*e] = *v;
            }
            vtk = vtk.cell("topo", full);
        }
        vtk.save(&out.join("sens.vtk")).context("writing sens.vtk")?;
    }

    let step = cfg.sensitivity.fd_step * nu1;
    let tolerance = if mode == Mode::Linear { 1e-3 } else { 5e-3 };
    let mut fd_csv = String::from("elem_id,onoff,fd,rel_err\n");
    let mut worst: f64 = 0.0;
    for k in spread(sens.elements.len(), cfg.sensitivity.fd_check) {
        let e = sens.elements[k];
        let fd = sensitivity_fd_oracle(&problem, &state, e, step).context("finite-difference check")?;
        let rel = (fd - sens.onoff[k]).abs() / sens.onoff[k].abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        writeln!(fd_csv, "{e},{:e},{fd:e},{rel:e}", sens.onoff[k]).unwrap();
    }
    write_file(&out.join("fd_check.csv"), &fd_csv)?;

    let mut s = String::from("command = sensitivity\n");
    mesh_summary(&mut s, mesh, mode);
    writeln!(s, "J = {:e}", eval.j).unwrap();
    writeln!(s, "adjoint_residual = {:e}", eval.adjoint.residual).unwrap();
    writeln!(s, "negative_sensitivities = {}", sens.onoff.iter().filter(|&&v| v < 0.0).count()).unwrap();
    writeln!(s, "fd_check_elements = {}", cfg.sensitivity.fd_check.min(sens.elements.len())).unwrap();
    writeln!(s, "fd_check_max_rel_err = {worst:e}").unwrap();
    writeln!(s, "fd_check = {}", if worst <= tolerance { "pass" } else { "fail" }).unwrap();
    if worst > tolerance {
        warn!("finite-difference check exceeds {tolerance:e}: {worst:e}");
    }
    write_file(&out.join("summary.txt"), &s)?;
    print!("{s}");
    Ok(())
}

pub fn optimize(cfg: &RunConfig) -> Result<(), Failure> {
    let Setup { problem, mode, out } = setup(cfg)?;
    let mesh = &problem.mesh;
    let result = match run_onoff(&problem, mode, &cfg.optimizer_config()) {
        Ok(r) => r,
        Err(OptimizeError::Solve { iteration, source, history }) => {
            write_history(&out.join("history.csv"), &history).context("writing history.csv")?;
            return Err(Failure::Run(anyhow!("solver failed at iteration {iteration}: {source}")));
        }
        Err(e @ OptimizeError::Config(_)) => return Err(Failure::Config(e.into())),
        Err(e) => return Err(Failure::Run(e.into())),
    };
    let history = &result.history;

    write_history(&out.join("history.csv"), history).context("writing history.csv")?;
    if cfg.output.snapshots {
        let dir = out.join("snapshots");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for r in &history.records {
            let path = dir.join(format!("design_{:03}.csv", r.iter));
            write_design(&path, &history.design_elements, &r.flags).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    export_trace(&problem, &result.best_u, &out)?;
    if cfg.output.vtk {
        let mut onoff = vec![0.0; mesh.element_count()];
        for (e, v) in result.sensitivities.elements.iter().zip(&result.sensitivities.onoff) {
            onoff[*e] = *v;
        }
        base_vtk(&problem, &result.best, &result.best_u, "magtopo optimize")
            .cell("onoff", onoff)
            .save(&out.join("design.vtk"))
            .context("writing design.vtk")?;
    }

    let (j0, jb) = (history.initial_j(), history.best_j());
    let mut s = String::from("command = optimize\n");
    mesh_summary(&mut s, mesh, mode);
    writeln!(s, "iterations = {}", history.records.len() - 1).unwrap();
    writeln!(s, "stop = {:?}", history.stop.expect("set by run_onoff")).unwrap();
    writeln!(s, "J_initial = {j0:e}").unwrap();
    writeln!(s, "J_best = {jb:e}").unwrap();
    writeln!(s, "decrease_percent = {:.2}", 100.0 * (1.0 - jb / j0)).unwrap();
    writeln!(s, "elements_off = {}", result.best.count_off()).unwrap();
    writeln!(s, "reverted = {}", history.records.iter().filter(|r| r.reverted).count()).unwrap();
    writeln!(s, "max_newton_iterations = {}", history.records.iter().map(|r| r.newton_iterations).max().unwrap_or(0)).unwrap();
    write_file(&out.join("summary.txt"), &s)?;
    print!("{s}");
    Ok(())
}

fn polarization_failure(e: PolarizationError) -> Failure {
    match e {
        PolarizationError::Singular => Failure::Run(e.into()),
        _ => Failure::Config(e.into()),
    }
}

pub fn polarization(shape: &str, nu0: f64, nu1: f64, panels: usize, refine: bool) -> Result<(), Failure> {
    let spec: ShapeSpec = shape.parse().map_err(polarization_failure)?;
    let compute = |n: usize| -> Result<_, Failure> {
        let p = panelize(&spec, n).map_err(polarization_failure)?;
        polarization_matrix(&p, nu0, nu1).map_err(polarization_failure)
    };
    let p = compute(panels)?;
    let m = p.matrix;
    println!("shape = {shape}");
    println!("panels = {panels}");
    println!("P = [[{:e}, {:e}], [{:e}, {:e}]]", m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    println!("moment_identity_error = {:e}", p.moment_error);
    if spec == ShapeSpec::Disk {
        let exact = disk_factor(nu0, nu1);
        let err = [m[(0, 0)] - exact, m[(0, 1)], m[(1, 0)], m[(1, 1)] - exact]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
            / exact.abs();
        println!("reference = {exact:e}");
        println!("rel_err = {err:e}");
    }
    if refine {
        println!("n,P00,P01,P10,P11,rel_change,ratio");
        let mut prev: Option<(nalgebra::Matrix2<f64>, f64)> = None;
        for k in 0..4 {
            let n = panels << k;
            let q = compute(n)?.matrix;
            let (change, ratio) = match prev {
                Some((pm, pc)) => {
                    let c = (q - pm).norm() / q.norm();
                    (format!("{c:e}"), if pc.is_finite() { format!("{:.3}", pc / c) } else { String::new() })
                }
                None => (String::new(), String::new()),
            };
            println!("{n},{:e},{:e},{:e},{:e},{change},{ratio}", q[(0, 0)], q[(0, 1)], q[(1, 0)], q[(1, 1)]);
            let c = prev.map_or(f64::INFINITY, |(pm, _)| (q - pm).norm() / q.norm());
            prev = Some((q, c));
        }
    }
    Ok(())
}
