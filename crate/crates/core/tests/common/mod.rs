#![allow(dead_code)]

use rand::Rng;

use magtopo_core::fem::{NodalField, SolverOptions};
use magtopo_core::materials::BHModel;
use magtopo_core::mesh::{rectangle_mesh, Magnet, Mesh, MotorGeometry, Region};
use magtopo_core::objective::{build_gap_circle, TargetCurve};
use magtopo_core::problem::Problem;

/// Quarter motor with 324 elements, 36 of them in the design band.
pub fn small_motor() -> Problem {
    Problem::motor(&MotorGeometry::default(), 0.008, BHModel::default(), 720).unwrap()
}

pub fn motor(h: f64) -> Problem {
    Problem::motor(&MotorGeometry::default(), h, BHModel::default(), 720).unwrap()
}

/// Uniform grid on [0, 0.1]² (all triangles of equal area): a magnet block
/// magnetized towards the origin, a design band between it and the gap
/// circle of radius 0.03, and an iron return strip above.
pub fn uniform_band_problem(n: usize) -> Problem {
    let base = rectangle_mesh((0.0, 0.1), (0.0, 0.1), n, n, Region::Air).unwrap();
    let inside = |c: [f64; 2], x: (f64, f64), y: (f64, f64)| c[0] > x.0 && c[0] < x.1 && c[1] > y.0 && c[1] < y.1;
    let m = 9.0e5 / std::f64::consts::SQRT_2;
    let mesh = base
        .with_regions(
            |_, c| {
                if inside(c, (0.055, 0.075), (0.06, 0.08)) {
                    Region::Magnet(1)
                } else if inside(c, (0.03, 0.09), (0.04, 0.055)) {
                    Region::Design
                } else if inside(c, (0.03, 0.09), (0.085, 0.095)) {
                    Region::Iron
                } else {
                    Region::Air
                }
            },
            vec![Magnet { id: 1, magnetization: [-m, -m] }],
        )
        .unwrap();
    let gap = build_gap_circle(&mesh, 0.03, 360, 1.0).unwrap();
    Problem {
        mesh,
        model: BHModel::default(),
        gap,
        target: TargetCurve::default(),
        opts: SolverOptions::default(),
    }
}

/// Random nodal field, zero on Dirichlet nodes, entries uniform in [−scale, scale].
pub fn random_free_field(mesh: &Mesh, scale: f64, rng: &mut impl Rng) -> NodalField {
    NodalField {
        values: (0..mesh.node_count())
            .map(|n| if mesh.is_dirichlet(n) { 0.0 } else { scale * rng.gen_range(-1.0..1.0) })
            .collect(),
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Least-squares c in a ≈ c·b and the residual norm relative to ‖a‖.
pub fn proportional_fit(a: &[f64], b: &[f64]) -> (f64, f64) {
    let c = dot(a, b) / dot(b, b);
    let r: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - c * y).collect();
    (c, norm(&r) / norm(a))
}
