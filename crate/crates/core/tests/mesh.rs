use proptest::prelude::*;

use magtopo_core::mesh::{generate_motor_mesh, load_mesh, rectangle_mesh, save_mesh, triangle_geometry, MotorGeometry, Region};

fn triangle() -> impl Strategy<Value = [[f64; 2]; 3]> {
    prop::array::uniform3(prop::array::uniform2(-10.0..10.0f64)).prop_filter_map("degenerate", |mut p| {
        let cross = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        if cross.abs() < 1e-2 {
            return None;
        }
        if cross < 0.0 {
            p.swap(1, 2);
        }
        Some(p)
    })
}

proptest! {
    #[test]
    fn basis_gradients_form_a_partition_of_unity(p in triangle()) {
        let g = triangle_geometry(p).unwrap();
        let scale = g.grad_basis.iter().map(|v| v[0].abs() + v[1].abs()).fold(0.0, f64::max);
        for k in 0..2 {
            let sum: f64 = g.grad_basis.iter().map(|v| v[k]).sum();
            prop_assert!(sum.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn affine_functions_have_exact_gradients(p in triangle(), a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64) {
        let g = triangle_geometry(p).unwrap();
        let f = |x: [f64; 2]| a * x[0] + b * x[1] + c;
        let grad = g.gradient([f(p[0]), f(p[1]), f(p[2])]);
        prop_assert!((grad[0] - a).abs() <= 1e-9 * (1.0 + a.abs() + b.abs() + c.abs()));
        prop_assert!((grad[1] - b).abs() <= 1e-9 * (1.0 + a.abs() + b.abs() + c.abs()));
    }

    #[test]
    fn rectangle_areas_sum_exactly(w in 0.1..5.0f64, hgt in 0.1..5.0f64, nx in 1usize..12, ny in 1usize..12) {
        let mesh = rectangle_mesh((0.0, w), (0.0, hgt), nx, ny, Region::Air).unwrap();
        prop_assert_eq!(mesh.element_count(), 2 * nx * ny);
        prop_assert!((mesh.total_area() - w * hgt).abs() <= 1e-12 * w * hgt);
    }
}

#[test]
fn motor_mesh_area_converges_to_the_annulus() {
    let geom = MotorGeometry::default();
    let mut last = f64::INFINITY;
    for h in [0.008, 0.004, 0.002] {
        let mesh = generate_motor_mesh(&geom, h).unwrap();
        let err = (mesh.total_area() - geom.domain_area()).abs() / geom.domain_area();
        assert!(err <= 1e-2, "h = {h}: relative area error {err:e}");
        assert!(err < last);
        last = err;
        for e in 0..mesh.element_count() {
            let g = mesh.element_geometry(e).unwrap();
            assert!(g.area > 0.0);
            let sum = [0, 1].map(|k| g.grad_basis.iter().map(|v| v[k]).sum::<f64>());
            assert!(sum[0].abs() + sum[1].abs() <= 1e-9 * mesh.diameter(e).recip());
        }
    }
}

#[test]
fn neighbor_relation_is_symmetric() {
    let mesh = generate_motor_mesh(&MotorGeometry::default(), 0.004).unwrap();
    for e in 0..mesh.element_count() {
        for n in mesh.neighbors(e) {
            assert!(mesh.neighbors(n).any(|m| m == e), "{e} -> {n}");
        }
    }
}

#[test]
fn motor_mesh_survives_a_file_round_trip() {
    let mesh = generate_motor_mesh(&MotorGeometry::default(), 0.004).unwrap();
    let mut text = Vec::new();
    save_mesh(&mesh, &mut text).unwrap();
    let back = load_mesh(text.as_slice()).unwrap();
    assert_eq!(back.nodes(), mesh.nodes());
    assert_eq!(back.triangles(), mesh.triangles());
    assert_eq!(back.magnets(), mesh.magnets());
    let mut again = Vec::new();
    save_mesh(&back, &mut again).unwrap();
    assert_eq!(text, again);
}
