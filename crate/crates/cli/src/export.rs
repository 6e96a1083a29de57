//! Legacy ASCII VTK and CSV writers. Output carries no timestamps, so
//! identical inputs give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Result, Write};
use std::path::Path;

use magtopo_core::mesh::Mesh;
use magtopo_core::objective::GapCircle;
use magtopo_core::optimizer::OptimizationHistory;
use magtopo_core::sensitivity::SensitivityField;

/// Unstructured triangle grid with named scalar fields.
pub struct Vtk<'a> {
    mesh: &'a Mesh,
    title: String,
    point: Vec<(String, Vec<f64>)>,
    cell: Vec<(String, Vec<f64>)>,
}

impl<'a> Vtk<'a> {
    pub fn new(mesh: &'a Mesh, title: &str) -> Self {
        Self { mesh, title: title.to_string(), point: Vec::new(), cell: Vec::new() }
    }

    pub fn point(mut self, name: &str, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.mesh.node_count());
        self.point.push((name.to_string(), values));
        self
    }

    pub fn cell(mut self, name: &str, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.mesh.element_count());
        self.cell.push((name.to_string(), values));
        self
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        let (n, m) = (self.mesh.node_count(), self.mesh.element_count());
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "{}", self.title)?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {n} double")?;
        for p in self.mesh.nodes() {
            writeln!(w, "{:e} {:e} 0", p[0], p[1])?;
        }
        writeln!(w, "CELLS {m} {}", 4 * m)?;
        for t in self.mesh.triangles() {
            writeln!(w, "3 {} {} {}", t.nodes[0], t.nodes[1], t.nodes[2])?;
        }
        writeln!(w, "CELL_TYPES {m}")?;
        for _ in 0..m {
            writeln!(w, "5")?;
        }
        let section = |w: &mut dyn Write, head: &str, count: usize, fields: &[(String, Vec<f64>)]| -> Result<()> {
            if fields.is_empty() {
                return Ok(());
            }
            writeln!(w, "{head} {count}")?;
            for (name, values) in fields {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for v in values {
                    writeln!(w, "{v:e}")?;
                }
            }
            Ok(())
        };
        section(&mut w, "POINT_DATA", n, &self.point)?;
        section(&mut w, "CELL_DATA", m, &self.cell)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// `theta,b_rad,b_target`.
pub fn write_trace(path: &Path, gap: &GapCircle, trace: &[f64], target: impl Fn(f64) -> f64) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "theta,b_rad,b_target")?;
    for (p, b) in gap.points.iter().zip(trace) {
        writeln!(w, "{:e},{:e},{:e}", p.theta, b, target(p.theta))?;
    }
    w.flush()
}

/// `elem_id,centroid_x,centroid_y,onoff,topo`; the topo column is empty when absent.
pub fn write_sensitivities(path: &Path, mesh: &Mesh, sens: &SensitivityField) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "elem_id,centroid_x,centroid_y,onoff,topo")?;
    for (k, &e) in sens.elements.iter().enumerate() {
        let c = mesh.centroid(e);
        let topo = sens.topo.as_ref().map(|t| format!("{:e}", t[k])).unwrap_or_default();
        writeln!(w, "{e},{:e},{:e},{:e},{topo}", c[0], c[1], sens.onoff[k])?;
    }
    w.flush()
}

/// `iter,J,switched,reverted`.
pub fn write_history(path: &Path, history: &OptimizationHistory) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "iter,J,switched,reverted")?;
    for r in &history.records {
        writeln!(w, "{},{:e},{},{}", r.iter, r.j, r.switched, u8::from(r.reverted))?;
    }
    w.flush()
}

/// `elem_id,flag` with 1 for ON (iron) and 0 for OFF (air).
pub fn write_design(path: &Path, elements: &[usize], flags: &[bool]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "elem_id,flag")?;
    for (e, f) in elements.iter().zip(flags) {
        writeln!(w, "{e},{}", u8::from(*f))?;
    }
    w.flush()
}
