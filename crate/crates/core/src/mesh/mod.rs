//! Tagged triangular meshes.
//!
//! A [`Mesh`] is immutable once built. All constructors go through
//! [`Mesh::new`], which checks orientation, index validity, magnet records and
//! that the boundary edge list matches the topological boundary exactly.

mod generate;
mod io;

pub use generate::{generate_motor_mesh, rectangle_mesh, MagnetSpec, MotorGeometry};
pub use io::{load_mesh, save_mesh};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Boundary marker for homogeneous Dirichlet edges.
pub const DIRICHLET: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("triangle {elem} references node {node}, but the mesh has {count} nodes")]
    NodeIndex { elem: usize, node: usize, count: usize },
    #[error("boundary edge {edge} references node {node}, but the mesh has {count} nodes")]
    BoundaryNodeIndex { edge: usize, node: usize, count: usize },
    #[error("triangle {elem} is degenerate (signed area {area:e})")]
    Degenerate { elem: usize, area: f64 },
    #[error("triangle {elem} is clockwise (signed area {area:e})")]
    Clockwise { elem: usize, area: f64 },
    #[error("triangle {elem} is tagged MAGNET:{id} but no magnet record {id} exists")]
    MissingMagnet { elem: usize, id: u32 },
    #[error("magnet record {id} is defined more than once")]
    DuplicateMagnet { id: u32 },
    #[error("boundary edge ({a}, {b}) is not on the topological boundary")]
    SpuriousBoundaryEdge { a: usize, b: usize },
    #[error("topological boundary edge ({a}, {b}) has no boundary record")]
    MissingBoundaryEdge { a: usize, b: usize },
    #[error("edge ({a}, {b}) is shared by more than two triangles")]
    NonManifoldEdge { a: usize, b: usize },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("element id {0} out of range")]
    ElementId(usize),
}

/// Material region of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Iron,
    Air,
    Magnet(u32),
    /// Iron that the optimizer may switch to air.
    Design,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Iron => f.write_str("IRON"),
            Region::Air => f.write_str("AIR"),
            Region::Design => f.write_str("DESIGN"),
            Region::Magnet(id) => write!(f, "MAGNET:{id}"),
        }
    }
}

impl std::str::FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "IRON" => Ok(Region::Iron),
            "AIR" => Ok(Region::Air),
            "DESIGN" => Ok(Region::Design),
            _ => s
                .strip_prefix("MAGNET:")
                .and_then(|id| id.parse().ok())
                .map(Region::Magnet)
                .ok_or_else(|| format!("unknown region tag `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub nodes: [usize; 3],
    pub region: Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub marker: u32,
}

/// Piecewise-constant magnetization of one magnet region, in A/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Magnet {
    pub id: u32,
    pub magnetization: [f64; 2],
}

/// Area and constant P1 basis gradients of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub grad_basis: [[f64; 2]; 3],
}

impl ElementGeometry {
    /// Gradient of the P1 interpolant with vertex values `v`.
    pub fn gradient(&self, v: [f64; 3]) -> [f64; 2] {
        let g = &self.grad_basis;
        [
            v[0] * g[0][0] + v[1] * g[1][0] + v[2] * g[2][0],
            v[0] * g[0][1] + v[1] * g[1][1] + v[2] * g[2][1],
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<Triangle>,
    boundary: Vec<BoundaryEdge>,
    magnets: Vec<Magnet>,
    geometry: Vec<ElementGeometry>,
    /// Edge neighbours; slot `i` is the triangle across the edge opposite vertex `i`.
    neighbors: Vec<[Option<usize>; 3]>,
    dirichlet: Vec<bool>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn signed_area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// Area and basis gradients from vertex coordinates (counterclockwise).
pub fn triangle_geometry(p: [[f64; 2]; 3]) -> Option<ElementGeometry> {
    let area = signed_area(p);
    let scale = (0..3)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % 3]);
            (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
        })
        .fold(0.0, f64::max);
    if !(area.abs() > 1e-14 * scale) {
        return None;
    }
    let two_a = 2.0 * area;
    let grad = |j: usize, k: usize| [(p[j][1] - p[k][1]) / two_a, (p[k][0] - p[j][0]) / two_a];
    Some(ElementGeometry {
        area,
        grad_basis: [grad(1, 2), grad(2, 0), grad(0, 1)],
    })
}

impl Mesh {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<Triangle>,
        boundary: Vec<BoundaryEdge>,
        magnets: Vec<Magnet>,
    ) -> Result<Self, MeshError> {
        let count = nodes.len();
        let mut magnet_ids = BTreeSet::new();
        for m in &magnets {
            if !magnet_ids.insert(m.id) {
                return Err(MeshError::DuplicateMagnet { id: m.id });
            }
        }

        let mut geometry = Vec::with_capacity(triangles.len());
        for (elem, t) in triangles.iter().enumerate() {
            if let Some(&node) = t.nodes.iter().find(|&&n| n >= count) {
                return Err(MeshError::NodeIndex { elem, node, count });
            }
            if let Region::Magnet(id) = t.region {
                if !magnet_ids.contains(&id) {
                    return Err(MeshError::MissingMagnet { elem, id });
                }
            }
            let p = t.nodes.map(|n| nodes[n]);
            let area = signed_area(p);
            match triangle_geometry(p) {
                None => return Err(MeshError::Degenerate { elem, area }),
                Some(_) if area < 0.0 => return Err(MeshError::Clockwise { elem, area }),
                Some(g) => geometry.push(g),
            }
        }

        // edge -> (triangle, local slot opposite the edge)
        let mut edges: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (elem, t) in triangles.iter().enumerate() {
            for slot in 0..3 {
                let a = t.nodes[(slot + 1) % 3];
                let b = t.nodes[(slot + 2) % 3];
                edges.entry(edge_key(a, b)).or_default().push((elem, slot));
            }
        }
        let mut neighbors = vec![[None; 3]; triangles.len()];
        let mut topo_boundary = BTreeSet::new();
        for (&(a, b), owners) in &edges {
            match owners.as_slice() {
                [_] => {
                    topo_boundary.insert((a, b));
                }
                [(t0, s0), (t1, s1)] => {
                    neighbors[*t0][*s0] = Some(*t1);
                    neighbors[*t1][*s1] = Some(*t0);
                }
                _ => return Err(MeshError::NonManifoldEdge { a, b }),
            }
        }

        let mut seen = BTreeSet::new();
        for (edge, e) in boundary.iter().enumerate() {
            if let Some(&node) = e.nodes.iter().find(|&&n| n >= count) {
                return Err(MeshError::BoundaryNodeIndex { edge, node, count });
            }
            let key = edge_key(e.nodes[0], e.nodes[1]);
            if !topo_boundary.contains(&key) || !seen.insert(key) {
                return Err(MeshError::SpuriousBoundaryEdge { a: key.0, b: key.1 });
            }
        }
        if let Some(&(a, b)) = topo_boundary.difference(&seen).next() {
            return Err(MeshError::MissingBoundaryEdge { a, b });
        }

        let mut dirichlet = vec![false; count];
        for e in boundary.iter().filter(|e| e.marker == DIRICHLET) {
            dirichlet[e.nodes[0]] = true;
            dirichlet[e.nodes[1]] = true;
        }

        Ok(Self {
            nodes,
            triangles,
            boundary,
            magnets,
            geometry,
            neighbors,
            dirichlet,
        })
    }

    /// Same mesh with triangles reordered: new element `i` is old element `order[i]`.
    pub fn permute_elements(&self, order: &[usize]) -> Result<Self, MeshError> {
        let triangles = order.iter().map(|&i| self.triangles[i]).collect();
        Mesh::new(
            self.nodes.clone(),
            triangles,
            self.boundary.clone(),
            self.magnets.clone(),
        )
    }

    /// Same nodes and boundary with regions reassigned by centroid and a new magnet table.
    pub fn with_regions(
        &self,
        region: impl Fn(usize, [f64; 2]) -> Region,
        magnets: Vec<Magnet>,
    ) -> Result<Self, MeshError> {
        let triangles = (0..self.triangles.len())
            .map(|e| Triangle { region: region(e, self.centroid(e)), ..self.triangles[e] })
            .collect();
        Mesh::new(self.nodes.clone(), triangles, self.boundary.clone(), magnets)
    }

    /// Same mesh with every magnetization multiplied by `factor`.
    pub fn with_scaled_magnetization(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.magnets {
            m.magnetization = m.magnetization.map(|c| c * factor);
        }
        out
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn magnets(&self) -> &[Magnet] {
        &self.magnets
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn region(&self, elem: usize) -> Region {
        self.triangles[elem].region
    }

    pub fn magnet(&self, id: u32) -> Option<&Magnet> {
        self.magnets.iter().find(|m| m.id == id)
    }

    /// Whether `node` carries the homogeneous Dirichlet condition.
    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet[node]
    }

    pub fn element_geometry(&self, elem: usize) -> Result<ElementGeometry, MeshError> {
        self.geometry
            .get(elem)
            .copied()
            .ok_or(MeshError::ElementId(elem))
    }

    /// Unchecked variant for hot loops over `0..element_count()`.
    pub(crate) fn geom(&self, elem: usize) -> &ElementGeometry {
        &self.geometry[elem]
    }

    pub fn vertices(&self, elem: usize) -> [[f64; 2]; 3] {
        self.triangles[elem].nodes.map(|n| self.nodes[n])
    }

    pub fn centroid(&self, elem: usize) -> [f64; 2] {
        let p = self.vertices(elem);
        [
            (p[0][0] + p[1][0] + p[2][0]) / 3.0,
            (p[0][1] + p[1][1] + p[2][1]) / 3.0,
        ]
    }

    /// Longest edge of the triangle.
    pub fn diameter(&self, elem: usize) -> f64 {
        let p = self.vertices(elem);
        (0..3)
            .map(|i| {
                let (a, b) = (p[i], p[(i + 1) % 3]);
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    pub fn neighbors(&self, elem: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[elem].iter().flatten().copied()
    }

    /// Ids of all DESIGN triangles, ascending.
    pub fn design_elements(&self) -> Vec<usize> {
        self.elements_in(|r| r == Region::Design)
    }

    pub fn elements_in(&self, pred: impl Fn(Region) -> bool) -> Vec<usize> {
        (0..self.triangles.len())
            .filter(|&e| pred(self.triangles[e].region))
            .collect()
    }

    /// Barycentric coordinates of `x` with respect to triangle `elem`.
    pub fn barycentric(&self, elem: usize, x: [f64; 2]) -> [f64; 3] {
        let p = self.vertices(elem);
        let a = signed_area(p);
        [
            signed_area([x, p[1], p[2]]) / a,
            signed_area([p[0], x, p[2]]) / a,
            signed_area([p[0], p[1], x]) / a,
        ]
    }

    /// Whether `x` lies in the closed triangle `elem` (with a small relative slack).
    pub fn contains(&self, elem: usize, x: [f64; 2]) -> bool {
        self.barycentric(elem, x).iter().all(|&l| l >= -1e-12)
    }

    /// Locates the triangle containing `x` by walking across edges from `start`.
    ///
    /// Falls back to a linear scan when the walk leaves the domain (non-convex
    /// meshes) or cycles. Among several containing triangles the lowest id wins.
    pub fn locate(&self, x: [f64; 2], start: usize) -> Option<usize> {
        let mut elem = start.min(self.triangles.len().checked_sub(1)?);
        for _ in 0..self.triangles.len() {
            let lambda = self.barycentric(elem, x);
            let (slot, min) = lambda
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, l)| if l < acc.1 { (i, l) } else { acc });
            if min >= -1e-12 {
                return self.lowest_containing(x, elem);
            }
            match self.neighbors[elem][slot] {
                Some(next) => elem = next,
                None => break,
            }
        }
        (0..self.triangles.len()).find(|&e| self.contains(e, x))
    }

    // Points on shared edges or vertices belong to the lowest-id triangle so
    // that location does not depend on where the walk started.
    fn lowest_containing(&self, x: [f64; 2], found: usize) -> Option<usize> {
        let on_edge = self.barycentric(found, x).iter().any(|&l| l.abs() <= 1e-12);
        if !on_edge {
            return Some(found);
        }
        let verts = self.triangles[found].nodes;
        (0..self.triangles.len())
            .filter(|&e| self.triangles[e].nodes.iter().any(|n| verts.contains(n)))
            .find(|&e| self.contains(e, x))
            .or(Some(found))
    }
}
