//! Run configuration, read from TOML. Every key is optional; SI units throughout.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use magtopo_core::fem::SolverOptions;
use magtopo_core::materials::{BHModel, Mode, DEFAULT_NU_R, NU_AIR};
use magtopo_core::mesh::{load_mesh, MagnetSpec, Mesh, MotorGeometry};
use magtopo_core::objective::{build_gap_circle, TargetCurve};
use magtopo_core::optimizer::OptimizerConfig;
use magtopo_core::problem::Problem;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    pub objective: ObjectiveConfig,
    pub solver: SolverConfig,
    pub optimizer: OptimizerSection,
    pub sensitivity: SensitivityConfig,
    pub output: OutputConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetConfig {
    pub center_deg: f64,
    pub span_deg: f64,
    pub polarity: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub shaft: f64,
    pub rotor_iron: f64,
    pub magnet_band: f64,
    pub rotor_surface: f64,
    pub gap_circle: f64,
    pub stator_bore: f64,
    pub stator_yoke: f64,
    pub magnetization: f64,
    pub magnets: Vec<MagnetConfig>,
    pub mesh_size: f64,
    /// Mesh file in `mesh2d` format; replaces the generator.
    pub mesh: Option<PathBuf>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let g = MotorGeometry::default();
        Self {
            shaft: g.shaft,
            rotor_iron: g.rotor_iron,
            magnet_band: g.magnet_band,
            rotor_surface: g.rotor_surface,
            gap_circle: g.gap_circle,
            stator_bore: g.stator_bore,
            stator_yoke: g.stator_yoke,
            magnetization: g.magnetization,
            magnets: g
                .magnets
                .iter()
                .map(|m| MagnetConfig { center_deg: m.center_deg, span_deg: m.span_deg, polarity: m.polarity })
                .collect(),
            mesh_size: 0.002,
            mesh: None,
        }
    }
}

impl GeometryConfig {
    pub fn motor(&self) -> MotorGeometry {
        MotorGeometry {
            shaft: self.shaft,
            rotor_iron: self.rotor_iron,
            magnet_band: self.magnet_band,
            rotor_surface: self.rotor_surface,
            gap_circle: self.gap_circle,
            stator_bore: self.stator_bore,
            stator_yoke: self.stator_yoke,
            magnets: self
                .magnets
                .iter()
                .map(|m| MagnetSpec { center_deg: m.center_deg, span_deg: m.span_deg, polarity: m.polarity })
                .collect(),
            magnetization: self.magnetization,
            ..MotorGeometry::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConfig {
    pub mode: String,
    /// `analytic` or the path of an `s,nu` CSV table.
    pub curve: String,
    pub nu_r: f64,
    pub s0: f64,
    pub exponent: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self { mode: "linear".into(), curve: "analytic".into(), nu_r: DEFAULT_NU_R, s0: 1.5, exponent: 4.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// Defaults to `geometry.gap_circle`.
    pub radius: Option<f64>,
    pub quadrature_points: usize,
    pub amplitude: f64,
    pub harmonic: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        let t = TargetCurve::default();
        Self { radius: None, quadrature_points: 720, amplitude: t.amplitude, harmonic: t.harmonic }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub linear_tol: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self { linear_tol: o.linear_tol, newton_tol: o.newton_tol, max_newton: o.max_newton, max_backtracks: o.max_backtracks }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub max_iters: usize,
    pub initial_radius: Option<f64>,
    pub radius_factor: f64,
    pub minima_per_iter: usize,
    pub negative_threshold: f64,
    pub allow_switch_on: bool,
    pub stop_stagnation: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let c = OptimizerConfig::default();
        Self {
            max_iters: c.max_iters,
            initial_radius: c.initial_radius,
            radius_factor: c.radius_factor,
            minima_per_iter: c.minima_per_iter,
            negative_threshold: c.negative_threshold,
            allow_switch_on: c.allow_switch_on,
            stop_stagnation: c.stop_stagnation,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    /// Inclusion shape for the topological derivative (`disk`, `ellipse:a,b`, `polygon:...`).
    pub shape: String,
    pub panels: usize,
    /// Number of design elements spot-checked against finite differences.
    pub fd_check: usize,
    /// FD step as a fraction of the iron reluctivity.
    pub fd_step: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self { shape: "disk".into(), panels: 256, fd_check: 5, fd_step: 1e-4 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub vtk: bool,
    pub snapshots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), vtk: true, snapshots: true }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn mode(&self) -> Result<Mode> {
        self.material.mode.parse().context("material.mode")
    }

    pub fn validate(&self) -> Result<()> {
        self.mode()?;
        if self.geometry.mesh.is_none() {
            self.geometry.motor().validate().context("geometry")?;
            if !(self.geometry.mesh_size > 0.0) {
                bail!("geometry.mesh_size must be positive");
            }
        }
        let s = &self.solver;
        for (name, v) in [("solver.linear_tol", s.linear_tol), ("solver.newton_tol", s.newton_tol)] {
            if !(v > 0.0) {
                bail!("{name} must be positive");
            }
        }
        if s.max_newton == 0 {
            bail!("solver.max_newton must be positive");
        }
        if let Some(r) = self.objective.radius {
            if !(r > 0.0) {
                bail!("objective.radius must be positive");
            }
        }
        if !(self.sensitivity.fd_step > 0.0) {
            bail!("sensitivity.fd_step must be positive");
        }
        self.optimizer_config().validate().context("optimizer")?;
        Ok(())
    }

    pub fn model(&self) -> Result<BHModel> {
        let m = &self.material;
        let model = if m.curve == "analytic" {
            BHModel::analytic(NU_AIR, m.nu_r, m.s0, m.exponent)?
        } else {
            let path = self.resolve(Path::new(&m.curve));
            let file = File::open(&path).with_context(|| format!("material.curve: cannot open {}", path.display()))?;
            BHModel::from_csv(NU_AIR, m.nu_r, file).context("material.curve")?
        };
        Ok(model)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            linear_tol: s.linear_tol,
            newton_tol: s.newton_tol,
            max_newton: s.max_newton,
            max_backtracks: s.max_backtracks,
            ..SolverOptions::default()
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            max_iters: o.max_iters,
            initial_radius: o.initial_radius,
            radius_factor: o.radius_factor,
            minima_per_iter: o.minima_per_iter,
            negative_threshold: o.negative_threshold,
            allow_switch_on: o.allow_switch_on,
            stop_stagnation: o.stop_stagnation,
        }
    }

    pub fn mesh(&self) -> Result<Mesh> {
        match &self.geometry.mesh {
            Some(p) => {
                let path = self.resolve(p);
                let file = File::open(&path).with_context(|| format!("geometry.mesh: cannot open {}", path.display()))?;
                Ok(load_mesh(BufReader::new(file)).with_context(|| format!("geometry.mesh: {}", path.display()))?)
            }
            None => Ok(magtopo_core::mesh::generate_motor_mesh(&self.geometry.motor(), self.geometry.mesh_size)
                .context("geometry")?),
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let mesh = self.mesh()?;
        let radius = self.objective.radius.unwrap_or(self.geometry.gap_circle);
        let gap = build_gap_circle(&mesh, radius, self.objective.quadrature_points, 1.0).context("objective")?;
        Ok(Problem {
            mesh,
            model: self.model()?,
            gap,
            target: TargetCurve { amplitude: self.objective.amplitude, harmonic: self.objective.harmonic },
            opts: self.solver_options(),
        })
    }
}
