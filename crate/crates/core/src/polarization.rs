//! Polarization matrices of small inclusions from a second-kind boundary
//! integral equation.
//!
//! For an inclusion `D` of reluctivity ν1 in a background ν0 the single-layer
//! density `q` on ∂D solves
//!
//! ```text
//! (ν0+ν1)/(ν0−ν1) · q(x)/2 + ∫ q(y) ∇E(x−y)·n(x) ds(y) = g·n(x),   ∫ q ds = 0,
//! ```
//!
//! with `E(z) = −ln|z| / 2π`, and the polarization matrix maps `g` to the first
//! moment `∫ q x ds`. Discretization: flat panels, piecewise-constant `q`,
//! midpoint collocation, curvature-corrected self term `−κ/4π`.

use std::f64::consts::PI;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarizationError {
    #[error("need at least 16 panels, got {0}")]
    TooFewPanels(usize),
    #[error("zero contrast: nu0 = nu1 = {0}")]
    Contrast(f64),
    #[error("reluctivities must be positive and finite (nu0 = {nu0}, nu1 = {nu1})")]
    Reluctivity { nu0: f64, nu1: f64 },
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("shape does not contain the origin")]
    OriginOutside,
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("boundary integral system is singular")]
    Singular,
}

/// Inclusion shape before panelization.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSpec {
    Disk,
    Ellipse { a: f64, b: f64 },
    Polygon(Vec<[f64; 2]>),
}

impl FromStr for ShapeSpec {
    type Err = PolarizationError;

    /// `disk`, `ellipse:a,b` or `polygon:x1,y1;x2,y2;...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |m: &str| PolarizationError::Shape(format!("{m} in `{s}`"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad("invalid number"));
        if s == "disk" {
            return Ok(ShapeSpec::Disk);
        }
        if let Some(rest) = s.strip_prefix("ellipse:") {
            let v: Vec<&str> = rest.split(',').collect();
            let [a, b] = v.as_slice() else { return Err(bad("ellipse needs `a,b`")) };
            let (a, b) = (num(a)?, num(b)?);
            if !(a > 0.0 && b > 0.0) {
                return Err(bad("ellipse semi-axes must be positive"));
            }
            return Ok(ShapeSpec::Ellipse { a, b });
        }
        if let Some(rest) = s.strip_prefix("polygon:") {
            let pts = rest
                .split(';')
                .map(|p| {
                    let c: Vec<&str> = p.split(',').collect();
                    match c.as_slice() {
                        [x, y] => Ok([num(x)?, num(y)?]),
                        _ => Err(bad("polygon vertex needs `x,y`")),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            if pts.len() < 3 {
                return Err(bad("polygon needs at least 3 vertices"));
            }
            return Ok(ShapeSpec::Polygon(pts));
        }
        Err(bad("unknown shape"))
    }
}

/// Flat-panel discretization of ∂D, counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionShape {
    pub midpoints: Vec<[f64; 2]>,
    pub lengths: Vec<f64>,
    /// Outward unit normals.
    pub normals: Vec<[f64; 2]>,
    /// Signed curvature of the underlying curve at each panel (0 on polygon edges).
    pub curvature: Vec<f64>,
    /// Area enclosed by the panels.
    pub area: f64,
}

fn shoelace(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let (d1, d2) = (orient(q1, q2, p1), orient(q1, q2, p2));
    let (d3, d4) = (orient(p1, p2, q1), orient(p1, p2, q2));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn contains_origin(v: &[[f64; 2]]) -> bool {
    let n = v.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if (a[1] > 0.0) != (b[1] > 0.0) {
            let x = a[0] + (0.0 - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if x > 0.0 {
                inside = !inside;
            }
        }
    }
    inside
}

impl InclusionShape {
    /// Panels from a closed counterclockwise vertex loop.
    fn from_loop(vertices: &[[f64; 2]], curvature: Vec<f64>) -> Self {
        let n = vertices.len();
        let mut midpoints = Vec::with_capacity(n);
        let mut lengths = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            midpoints.push([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]);
            lengths.push(len);
            normals.push([dy / len, -dx / len]);
        }
        Self { midpoints, lengths, normals, curvature, area: shoelace(vertices) }
    }

    /// The same panels rotated by `angle` about the origin.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let rot = |p: &[f64; 2]| [c * p[0] - s * p[1], s * p[0] + c * p[1]];
        Self {
            midpoints: self.midpoints.iter().map(rot).collect(),
            normals: self.normals.iter().map(rot).collect(),
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Area from the divergence theorem, ½ Σ len (x·n).
    pub fn divergence_area(&self) -> f64 {
        0.5 * self
            .midpoints
            .iter()
            .zip(&self.normals)
            .zip(&self.lengths)
            .map(|((x, n), l)| l * (x[0] * n[0] + x[1] * n[1]))
            .sum::<f64>()
    }

    /// Σ len x nᵀ, which should equal |D| I.
    pub fn moment_matrix(&self) -> Matrix2<f64> {
        let mut m = Matrix2::zeros();
        for ((x, n), l) in self.midpoints.iter().zip(&self.normals).zip(&self.lengths) {
            for r in 0..2 {
                for c in 0..2 {
                    m[(r, c)] += l * x[r] * n[c];
                }
            }
        }
        m
    }

    /// max |Σ len x nᵀ − |D| I| / |D|.
    pub fn moment_identity_error(&self) -> f64 {
        (self.moment_matrix() - Matrix2::identity() * self.area).abs().max() / self.area
    }
}

/// Panelizes a shape with `n` panels (uniform in the curve parameter).
///
/// Clockwise polygons are reoriented with a warning.
pub fn panelize(spec: &ShapeSpec, n: usize) -> Result<InclusionShape, PolarizationError> {
    if n < 16 {
        return Err(PolarizationError::TooFewPanels(n));
    }
    match spec {
        ShapeSpec::Disk => panelize(&ShapeSpec::Ellipse { a: 1.0, b: 1.0 }, n),
        &ShapeSpec::Ellipse { a, b } => {
            if !(a > 0.0 && b > 0.0) {
                return Err(PolarizationError::Shape(format!("ellipse semi-axes {a}, {b}")));
            }
            let t = |k: f64| 2.0 * PI * k / n as f64;
            let vertices: Vec<[f64; 2]> = (0..n).map(|k| [a * t(k as f64).cos(), b * t(k as f64).sin()]).collect();
            let curvature = (0..n)
                .map(|k| {
                    let (s, c) = t(k as f64 + 0.5).sin_cos();
                    a * b / (a * a * s * s + b * b * c * c).powf(1.5)
                })
                .collect();
            Ok(InclusionShape::from_loop(&vertices, curvature))
        }
        ShapeSpec::Polygon(vertices) => {
            let m = vertices.len();
            if m < 3 {
                return Err(PolarizationError::Shape("polygon needs at least 3 vertices".into()));
            }
            if n < m {
                return Err(PolarizationError::Shape(format!("{n} panels cannot cover {m} edges")));
            }
            for i in 0..m {
                for j in i + 1..m {
                    let adjacent = j == i + 1 || (i == 0 && j == m - 1);
                    if !adjacent
                        && segments_cross(vertices[i], vertices[(i + 1) % m], vertices[j], vertices[(j + 1) % m])
                    {
                        return Err(PolarizationError::SelfIntersecting(i, j));
                    }
                }
            }
            let mut v = vertices.clone();
            let area = shoelace(&v);
            if area == 0.0 {
                return Err(PolarizationError::Shape("polygon has zero area".into()));
            }
            if area < 0.0 {
                warn!("polygon given clockwise; reorienting");
                v.reverse();
            }
            if !contains_origin(&v) {
                return Err(PolarizationError::OriginOutside);
            }
            // split n panels over the edges by length, at least one per edge
            let edge_len: Vec<f64> = (0..m)
                .map(|i| {
                    let (a, b) = (v[i], v[(i + 1) % m]);
                    (b[0] - a[0]).hypot(b[1] - a[1])
                })
                .collect();
            let perimeter: f64 = edge_len.iter().sum();
            let extra = (n - m) as f64;
            let ideal: Vec<f64> = edge_len.iter().map(|l| extra * l / perimeter).collect();
            let mut counts: Vec<usize> = ideal.iter().map(|x| 1 + x.floor() as usize).collect();
            let mut rest: Vec<usize> = (0..m).collect();
            rest.sort_by(|&i, &j| (ideal[j] - ideal[j].floor()).total_cmp(&(ideal[i] - ideal[i].floor())).then(i.cmp(&j)));
            let missing = n - counts.iter().sum::<usize>();
            for &i in rest.iter().take(missing) {
                counts[i] += 1;
            }
            let mut pts = Vec::with_capacity(n);
            for i in 0..m {
                let (a, b) = (v[i], v[(i + 1) % m]);
                for k in 0..counts[i] {
                    let s = k as f64 / counts[i] as f64;
                    pts.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
                }
            }
            Ok(InclusionShape::from_loop(&pts, vec![0.0; n]))
        }
    }
}

/// Piecewise-constant single-layer density on the panels.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDensity {
    pub q: Vec<f64>,
    /// Residual of the discrete system, relative to the right-hand side.
    pub residual: f64,
}

impl PanelDensity {
    /// Σ q_i len_i.
    pub fn total(&self, shape: &InclusionShape) -> f64 {
        self.q.iter().zip(&shape.lengths).map(|(q, l)| q * l).sum()
    }
}

fn check_contrast(nu0: f64, nu1: f64) -> Result<(), PolarizationError> {
    if !(nu0 > 0.0 && nu1 > 0.0 && nu0.is_finite() && nu1.is_finite()) {
        return Err(PolarizationError::Reluctivity { nu0, nu1 });
    }
    if nu0 == nu1 {
        return Err(PolarizationError::Contrast(nu0));
    }
    Ok(())
}

/// Collocation system bordered by the zero-mean constraint and its multiplier.
fn system_matrix(shape: &InclusionShape, nu0: f64, nu1: f64) -> DMatrix<f64> {
    let n = shape.len();
    let jump = 0.5 * (nu0 + nu1) / (nu0 - nu1);
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        let (x, nx) = (shape.midpoints[i], shape.normals[i]);
        for j in 0..n {
            a[(i, j)] = if i == j {
                jump - shape.curvature[i] * shape.lengths[i] / (4.0 * PI)
            } else {
                let y = shape.midpoints[j];
                let (dx, dy) = (x[0] - y[0], x[1] - y[1]);
                // ∇E(z) = −z / (2π|z|²)
                -shape.lengths[j] * (dx * nx[0] + dy * nx[1]) / (2.0 * PI * (dx * dx + dy * dy))
            };
        }
        a[(i, n)] = shape.lengths[i];
        a[(n, i)] = shape.lengths[i];
    }
    a
}

fn solve_columns(
    shape: &InclusionShape,
    nu0: f64,
    nu1: f64,
    rhs: &[[f64; 2]],
) -> Result<Vec<PanelDensity>, PolarizationError> {
    check_contrast(nu0, nu1)?;
    let n = shape.len();
    let a = system_matrix(shape, nu0, nu1);
    let lu = a.clone().lu();
    rhs.iter()
        .map(|g| {
            let mut b = DVector::zeros(n + 1);
            for i in 0..n {
                b[i] = g[0] * shape.normals[i][0] + g[1] * shape.normals[i][1];
            }
            let x = lu.solve(&b).ok_or(PolarizationError::Singular)?;
            let bnorm = b.norm();
            let residual = if bnorm == 0.0 { 0.0 } else { (&a * &x - &b).norm() / bnorm };
            Ok(PanelDensity { q: x.as_slice()[..n].to_vec(), residual })
        })
        .collect()
}

/// Density `q` for the right-hand side `g·n` (g stands for ∇p0(x0)).
pub fn solve_density(shape: &InclusionShape, nu0: f64, nu1: f64, g: [f64; 2]) -> Result<PanelDensity, PolarizationError> {
    Ok(solve_columns(shape, nu0, nu1, &[g])?.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationMatrix {
    pub matrix: Matrix2<f64>,
    pub nu0: f64,
    pub nu1: f64,
    /// Moment identity defect of the panelization, relative to |D|.
    pub moment_error: f64,
}

impl PolarizationMatrix {
    /// 2(ν0−ν1)/(ν0+ν1) · π · I, the unit-disk value.
    pub fn disk(nu0: f64, nu1: f64) -> Self {
        Self {
            matrix: Matrix2::identity() * disk_factor(nu0, nu1),
            nu0,
            nu1,
            moment_error: 0.0,
        }
    }

    pub fn asymmetry(&self) -> f64 {
        (self.matrix[(0, 1)] - self.matrix[(1, 0)]).abs()
    }
}

pub fn disk_factor(nu0: f64, nu1: f64) -> f64 {
    2.0 * PI * (nu0 - nu1) / (nu0 + nu1)
}

/// P with `∫ q x ds = P g`, from the solutions for g = e₁ and g = e₂.
pub fn polarization_matrix(shape: &InclusionShape, nu0: f64, nu1: f64) -> Result<PolarizationMatrix, PolarizationError> {
    let columns = solve_columns(shape, nu0, nu1, &[[1.0, 0.0], [0.0, 1.0]])?;
    let mut matrix = Matrix2::zeros();
    for (c, dens) in columns.iter().enumerate() {
        for ((q, x), l) in dens.q.iter().zip(&shape.midpoints).zip(&shape.lengths) {
            matrix[(0, c)] += q * x[0] * l;
            matrix[(1, c)] += q * x[1] * l;
        }
    }
    Ok(PolarizationMatrix { matrix, nu0, nu1, moment_error: shape.moment_identity_error() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_area_of_inscribed_polygon() {
        let s = panelize(&ShapeSpec::Disk, 64).unwrap();
        let inscribed = 0.5 * 64.0 * (2.0 * PI / 64.0).sin();
        assert!((s.area - inscribed).abs() < 1e-12);
        assert!((s.area - PI).abs() / PI < 0.002);
        assert!((s.divergence_area() - s.area).abs() < 1e-6 * s.area);
    }

    #[test]
    fn unit_ellipse_is_the_disk() {
        assert_eq!(
            panelize(&ShapeSpec::Ellipse { a: 1.0, b: 1.0 }, 32).unwrap(),
            panelize(&ShapeSpec::Disk, 32).unwrap()
        );
    }

    #[test]
    fn clockwise_polygon_is_reoriented() {
        let ccw = vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
        let cw: Vec<_> = ccw.iter().rev().copied().collect();
        let a = panelize(&ShapeSpec::Polygon(cw), 16).unwrap();
        assert!((a.area - 4.0).abs() < 1e-14);
        assert!(a.divergence_area() > 0.0);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn bad_polygons_rejected() {
        let bowtie = vec![[-1.0, -1.0], [1.0, 1.0], [1.0, -1.0], [-1.0, 1.0]];
        assert!(matches!(panelize(&ShapeSpec::Polygon(bowtie), 16), Err(PolarizationError::SelfIntersecting(..))));
        let off = vec![[1.0, 1.0], [2.0, 1.0], [2.0, 2.0]];
        assert_eq!(panelize(&ShapeSpec::Polygon(off), 16), Err(PolarizationError::OriginOutside));
        assert_eq!(panelize(&ShapeSpec::Disk, 8), Err(PolarizationError::TooFewPanels(8)));
    }

    #[test]
    fn shape_strings() {
        assert_eq!("disk".parse::<ShapeSpec>().unwrap(), ShapeSpec::Disk);
        assert_eq!("ellipse:2,1".parse::<ShapeSpec>().unwrap(), ShapeSpec::Ellipse { a: 2.0, b: 1.0 });
        assert_eq!(
            "polygon:0,-1;1,1;-1,1".parse::<ShapeSpec>().unwrap(),
            ShapeSpec::Polygon(vec![[0.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
        );
        assert!("ellipse:2".parse::<ShapeSpec>().is_err());
        assert!("square".parse::<ShapeSpec>().is_err());
    }

    #[test]
    fn disk_density_matches_constant_kernel_solution() {
        let s = panelize(&ShapeSpec::Disk, 256).unwrap();
        let (nu0, nu1) = (2.0, 1.0);
        let g = [0.3, -0.7];
        let d = solve_density(&s, nu0, nu1, g).unwrap();
        let factor = 2.0 * (nu0 - nu1) / (nu0 + nu1);
        let exact: Vec<f64> = s.normals.iter().map(|n| factor * (g[0] * n[0] + g[1] * n[1])).collect();
        let sup = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = d.q.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err / sup < 1e-3, "{}", err / sup);
        assert!(d.residual <= 1e-10);
        let qnorm = d.q.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(d.total(&s).abs() <= 1e-10 * qnorm);
    }

    #[test]
    fn zero_data_gives_zero_density() {
        let s = panelize(&ShapeSpec::Ellipse { a: 2.0, b: 1.0 }, 64).unwrap();
        let d = solve_density(&s, 3.0, 1.0, [0.0, 0.0]).unwrap();
        assert!(d.q.iter().all(|&v| v == 0.0));
        assert_eq!(solve_density(&s, 1.0, 1.0, [1.0, 0.0]), Err(PolarizationError::Contrast(1.0)));
    }

    #[test]
    fn disk_polarization_closed_form() {
        let s = panelize(&ShapeSpec::Disk, 256).unwrap();
        let p = polarization_matrix(&s, 2.0, 1.0).unwrap();
        let exact = 2.0 * PI / 3.0;
        for (r, c) in [(0, 0), (1, 1)] {
            assert!((p.matrix[(r, c)] - exact).abs() / exact < 1e-3);
        }
        assert!(p.matrix[(0, 1)].abs() <= 1e-6 * p.matrix.norm());
        assert_eq!(PolarizationMatrix::disk(2.0, 1.0).matrix[(0, 0)], exact);
    }
}
