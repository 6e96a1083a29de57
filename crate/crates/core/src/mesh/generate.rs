use std::f64::consts::FRAC_PI_2;

use super::{BoundaryEdge, Magnet, Mesh, MeshError, Region, Triangle, DIRICHLET};

/// One magnet pocket in the magnet band, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetSpec {
    pub center_deg: f64,
    pub span_deg: f64,
    /// +1 for outward radial magnetization, -1 for inward.
    pub polarity: f64,
}

/// Radii (m) and magnet layout of the quarter motor.
///
/// Bands from the inside out: rotor iron `[shaft, rotor_iron]`, magnet band
/// `[rotor_iron, magnet_band]`, design band `[magnet_band, rotor_surface]`,
/// air gap `[rotor_surface, stator_bore]` containing the evaluation circle at
/// `gap_circle`, and stator iron `[stator_bore, stator_yoke]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotorGeometry {
    pub shaft: f64,
    pub rotor_iron: f64,
    pub magnet_band: f64,
    pub rotor_surface: f64,
    pub gap_circle: f64,
    pub stator_bore: f64,
    pub stator_yoke: f64,
    pub magnets: Vec<MagnetSpec>,
    /// |M| in A/m.
    pub magnetization: f64,
    /// Angular sector count is rounded up to a multiple of this so that
    /// sector lines fall on magnet edges (18 gives a 5 degree grid).
    pub sector_multiple: usize,
}

impl Default for MotorGeometry {
    fn default() -> Self {
        Self {
            shaft: 0.015,
            rotor_iron: 0.040,
            magnet_band: 0.046,
            rotor_surface: 0.050,
            gap_circle: 0.0525,
            stator_bore: 0.055,
            stator_yoke: 0.080,
            magnets: vec![
                MagnetSpec { center_deg: 22.5, span_deg: 35.0, polarity: 1.0 },
                MagnetSpec { center_deg: 67.5, span_deg: 35.0, polarity: -1.0 },
            ],
            magnetization: 9.0e5,
            sector_multiple: 18,
        }
    }
}

impl MotorGeometry {
    pub fn radii(&self) -> [(&'static str, f64); 7] {
        [
            ("shaft", self.shaft),
            ("rotor_iron", self.rotor_iron),
            ("magnet_band", self.magnet_band),
            ("rotor_surface", self.rotor_surface),
            ("gap_circle", self.gap_circle),
            ("stator_bore", self.stator_bore),
            ("stator_yoke", self.stator_yoke),
        ]
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let radii = self.radii();
        if !(radii[0].1 > 0.0) {
            return Err(MeshError::Geometry(format!("{} must be positive", radii[0].0)));
        }
        for w in radii.windows(2) {
            if !(w[1].1 > w[0].1) {
                return Err(MeshError::Geometry(format!(
                    "radii must be strictly increasing: {} ({}) <= {} ({})",
                    w[1].0, w[1].1, w[0].0, w[0].1
                )));
            }
        }
        for (i, m) in self.magnets.iter().enumerate() {
            let lo = m.center_deg - 0.5 * m.span_deg;
            let hi = m.center_deg + 0.5 * m.span_deg;
            if !(m.span_deg > 0.0 && lo >= 0.0 && hi <= 90.0) {
                return Err(MeshError::Geometry(format!(
                    "magnet {} spans [{lo}, {hi}] degrees, outside the quarter",
                    i + 1
                )));
            }
        }
        if self.sector_multiple == 0 {
            return Err(MeshError::Geometry("sector_multiple must be at least 1".into()));
        }
        Ok(())
    }

    /// Analytic area of the quarter annulus.
    pub fn domain_area(&self) -> f64 {
        0.25 * std::f64::consts::PI * (self.stator_yoke.powi(2) - self.shaft.powi(2))
    }
}

fn rows_for(name: &str, width: f64, h: f64) -> Result<usize, MeshError> {
    let rows = (width / h).round() as usize;
    if rows == 0 {
        return Err(MeshError::Geometry(format!(
            "h = {h} leaves the {name} band (width {width}) without an element row"
        )));
    }
    Ok(rows)
}

/// Structured mesh of the quarter motor, θ ∈ [0, π/2].
///
/// Each band is split into rings of roughly `h` thickness, all rings share the
/// same angular sectors, and every ring-sector quad is cut along the same
/// diagonal. All four sides of the quarter carry the Dirichlet marker.
pub fn generate_motor_mesh(geom: &MotorGeometry, h: f64) -> Result<Mesh, MeshError> {
    geom.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(MeshError::Geometry(format!("target edge length must be positive, got {h}")));
    }

    let bands = [
        ("rotor iron", geom.shaft, geom.rotor_iron),
        ("magnet", geom.rotor_iron, geom.magnet_band),
        ("design", geom.magnet_band, geom.rotor_surface),
        ("air gap", geom.rotor_surface, geom.stator_bore),
        ("stator", geom.stator_bore, geom.stator_yoke),
    ];
    let mut rings = vec![geom.shaft];
    let mut band_of_row = Vec::new();
    for (band, &(name, r0, r1)) in bands.iter().enumerate() {
        let mut rows = rows_for(name, r1 - r0, h)?;
        // keep the evaluation circle off ring lines
        if band == 3 {
            let on_ring = |n: usize| {
                (1..n).any(|k| (r0 + (r1 - r0) * k as f64 / n as f64 - geom.gap_circle).abs() < 1e-9 * r1)
            };
            while on_ring(rows) {
                rows += 1;
            }
        }
        for k in 1..=rows {
            rings.push(r0 + (r1 - r0) * k as f64 / rows as f64);
            band_of_row.push(band);
        }
    }

    let arc = FRAC_PI_2 * geom.stator_yoke;
    let mult = geom.sector_multiple;
    let sectors = ((arc / h).ceil() as usize).div_ceil(mult).max(1) * mult;

    let stride = sectors + 1;
    let mut nodes = Vec::with_capacity(rings.len() * stride);
    for &r in &rings {
        for i in 0..=sectors {
            let theta = FRAC_PI_2 * i as f64 / sectors as f64;
            nodes.push([r * theta.cos(), r * theta.sin()]);
        }
    }

    let magnet_at = |theta_deg: f64| {
        geom.magnets.iter().position(|m| {
            (theta_deg - m.center_deg).abs() < 0.5 * m.span_deg
        })
    };

    let mut triangles = Vec::with_capacity(2 * sectors * band_of_row.len());
    for (row, &band) in band_of_row.iter().enumerate() {
        for i in 0..sectors {
            let mid_deg = 90.0 * (i as f64 + 0.5) / sectors as f64;
            let region = match band {
                0 | 4 => Region::Iron,
                1 => magnet_at(mid_deg)
                    .map(|k| Region::Magnet(k as u32 + 1))
                    .unwrap_or(Region::Iron),
                2 => Region::Design,
                _ => Region::Air,
            };
            let a = row * stride + i;
            let b = a + 1;
            let c = a + stride + 1;
            let d = a + stride;
            // (θ, r) → (x, y) reverses orientation
            triangles.push(Triangle { nodes: [a, c, b], region });
            triangles.push(Triangle { nodes: [a, d, c], region });
        }
    }

    let last = rings.len() - 1;
    let mut boundary = Vec::new();
    let mut edge = |a: usize, b: usize| boundary.push(BoundaryEdge { nodes: [a, b], marker: DIRICHLET });
    for i in 0..sectors {
        edge(i, i + 1);
        edge(last * stride + i, last * stride + i + 1);
    }
    for j in 0..last {
        edge(j * stride, (j + 1) * stride);
        edge(j * stride + sectors, (j + 1) * stride + sectors);
    }

    let magnets = geom
        .magnets
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let t = m.center_deg.to_radians();
            let s = m.polarity * geom.magnetization;
            Magnet { id: k as u32 + 1, magnetization: [s * t.cos(), s * t.sin()] }
        })
        .collect();

    Mesh::new(nodes, triangles, boundary, magnets)
}

/// Structured triangulation of `[x0, x1] × [y0, y1]` with `nx × ny` quads.
///
/// All triangles carry `region`; the whole boundary is Dirichlet.
pub fn rectangle_mesh(
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    nx: usize,
    ny: usize,
    region: Region,
) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 || !(x1 > x0) || !(y1 > y0) {
        return Err(MeshError::Geometry("empty rectangle".into()));
    }
    let stride = nx + 1;
    let mut nodes = Vec::with_capacity(stride * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([
                x0 + (x1 - x0) * i as f64 / nx as f64,
                y0 + (y1 - y0) * j as f64 / ny as f64,
            ]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = j * stride + i;
            triangles.push(Triangle { nodes: [a, a + 1, a + stride + 1], region });
            triangles.push(Triangle { nodes: [a, a + stride + 1, a + stride], region });
        }
    }
    let mut boundary = Vec::new();
    for i in 0..nx {
        boundary.push(BoundaryEdge { nodes: [i, i + 1], marker: DIRICHLET });
        boundary.push(BoundaryEdge { nodes: [ny * stride + i, ny * stride + i + 1], marker: DIRICHLET });
    }
    for j in 0..ny {
        boundary.push(BoundaryEdge { nodes: [j * stride, (j + 1) * stride], marker: DIRICHLET });
        boundary.push(BoundaryEdge { nodes: [j * stride + nx, (j + 1) * stride + nx], marker: DIRICHLET });
    }
    Mesh::new(nodes, triangles, boundary, vec![])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annulus_area_within_one_percent() {
        let geom = MotorGeometry {
            shaft: 0.01,
            rotor_iron: 0.02,
            magnet_band: 0.03,
            rotor_surface: 0.04,
            gap_circle: 0.05,
            stator_bore: 0.06,
            stator_yoke: 0.07,
            magnets: vec![MagnetSpec { center_deg: 45.0, span_deg: 30.0, polarity: 1.0 }],
            ..MotorGeometry::default()
        };
        let mesh = generate_motor_mesh(&geom, 0.002).unwrap();
        let exact = std::f64::consts::PI * (0.07f64.powi(2) - 0.01f64.powi(2)) / 4.0;
        assert!(((mesh.total_area() - exact) / exact).abs() < 0.01);
        assert!((0..mesh.element_count()).all(|e| mesh.diameter(e) <= 2.0 * 0.002));
    }

    #[test]
    fn band_width_h_gives_one_row_per_band() {
        let geom = MotorGeometry {
            shaft: 1.0,
            rotor_iron: 2.0,
            magnet_band: 3.0,
            rotor_surface: 4.0,
            gap_circle: 4.5,
            stator_bore: 5.0,
            stator_yoke: 6.0,
            magnets: vec![],
            ..MotorGeometry::default()
        };
        let mesh = generate_motor_mesh(&geom, 1.0).unwrap();
        let sectors = mesh.element_count() / 2 / 5;
        assert_eq!(mesh.element_count(), 2 * sectors * 5);
        assert_eq!(mesh.design_elements().len(), 2 * sectors);
        assert_eq!(mesh.elements_in(|r| r == Region::Air).len(), 2 * sectors);
        // two rows would put a ring exactly on Γ0, so the air band gets three
        let mesh = generate_motor_mesh(&geom, 0.5).unwrap();
        assert_eq!(mesh.elements_in(|r| r == Region::Air).len(), 2 * 3 * mesh.elements_in(|r| r == Region::Design).len() / 4);
    }

    #[test]
    fn non_monotone_radii_rejected() {
        let geom = MotorGeometry { magnet_band: 0.039, ..MotorGeometry::default() };
        let err = generate_motor_mesh(&geom, 0.002).unwrap_err();
        assert!(err.to_string().contains("magnet_band"), "{err}");
    }

    #[test]
    fn too_coarse_h_rejected() {
        let err = generate_motor_mesh(&MotorGeometry::default(), 0.02).unwrap_err();
        assert!(err.to_string().contains("without an element row"), "{err}");
    }

    #[test]
    fn default_motor_layout() {
        let geom = MotorGeometry::default();
        let mesh = generate_motor_mesh(&geom, 0.0025).unwrap();
        let again = generate_motor_mesh(&geom, 0.0025).unwrap();
        assert_eq!(mesh.design_elements(), again.design_elements());
        assert_eq!(mesh.magnets().len(), 2);
        let m1 = mesh.magnet(1).unwrap().magnetization;
        let m2 = mesh.magnet(2).unwrap().magnetization;
        assert!(m1[0] > 0.0 && m1[1] > 0.0);
        assert!(m2[0] < 0.0 && m2[1] < 0.0);
        // magnet area equals two 35 degree sectors of the magnet band
        let magnet_area: f64 = mesh
            .elements_in(|r| matches!(r, Region::Magnet(_)))
            .into_iter()
            .map(|e| mesh.element_geometry(e).unwrap().area)
            .sum();
        let exact = 2.0 * 35f64.to_radians() * 0.5 * (0.046f64.powi(2) - 0.040f64.powi(2));
        assert!(((magnet_area - exact) / exact).abs() < 0.01);
        let rel = (mesh.total_area() - geom.domain_area()) / geom.domain_area();
        assert!(rel.abs() < 0.01);
    }

    #[test]
    fn rectangle_mesh_counts() {
        let m = rectangle_mesh((0.0, 1.0), (0.0, 1.0), 4, 3, Region::Air).unwrap();
        assert_eq!(m.node_count(), 20);
        assert_eq!(m.element_count(), 24);
        assert!((m.total_area() - 1.0).abs() < 1e-14);
        assert_eq!((0..20).filter(|&n| !m.is_dirichlet(n)).count(), 6);
    }
}
