mod common;

use common::{correlation, proportional_fit, small_motor, uniform_band_problem};
use magtopo_core::materials::{DesignState, Mode};
use magtopo_core::objective::TargetCurve;
use magtopo_core::polarization::{panelize, polarization_matrix, ShapeSpec};
use magtopo_core::problem::Problem;
use magtopo_core::sensitivity::{
    onoff_sensitivities, sensitivity_fd_oracle, topological_derivative_field, Polarization, SensitivityField,
};

fn sensitivities(pb: &Problem, mode: Mode) -> (DesignState, SensitivityField) {
    let state = DesignState::all_on(&pb.mesh, mode);
    let ev = pb.evaluate(&state, None).unwrap();
    let mut s = onoff_sensitivities(&pb.mesh, &state, &ev.state.u, &ev.adjoint.p).unwrap();
    if mode == Mode::Linear {
        s.topo = Some(
            topological_derivative_field(&pb.mesh, &state, &ev.state.u, &ev.adjoint.p, pb.model.nu0, pb.model.nu1, &Polarization::Disk)
                .unwrap(),
        );
    }
    (state, s)
}

fn check_against_fd(mode: Mode, tol: f64) {
    let pb = small_motor();
    assert!(pb.mesh.element_count() <= 500);
    let (state, s) = sensitivities(&pb, mode);
    let h = 1e-4 * pb.model.nu1;
    for (&e, &v) in s.elements.iter().zip(&s.onoff) {
        let fd = sensitivity_fd_oracle(&pb, &state, e, h).unwrap();
        assert!((fd - v).abs() <= tol * v.abs(), "{mode} element {e}: adjoint {v:e}, fd {fd:e}");
    }
}

#[test]
fn linear_sensitivities_match_finite_differences() {
    check_against_fd(Mode::Linear, 1e-3);
}

#[test]
fn nonlinear_sensitivities_match_finite_differences() {
    check_against_fd(Mode::Nonlinear, 5e-3);
}

#[test]
fn fd_error_shrinks_quadratically() {
    let pb = small_motor();
    // saturated iron sits far above nu1, so nonlinear truncation error only
    // stands out of the solver noise at larger steps
    for (mode, steps) in [(Mode::Linear, [1e-2, 1e-3]), (Mode::Nonlinear, [1.0, 1e-1])] {
        let (state, s) = sensitivities(&pb, mode);
        let k = (0..s.onoff.len()).max_by(|&a, &b| s.onoff[a].abs().total_cmp(&s.onoff[b].abs())).unwrap();
        let (e, exact) = (s.elements[k], s.onoff[k]);
        let fd = |f: f64| sensitivity_fd_oracle(&pb, &state, e, f * pb.model.nu1).unwrap();
        let ratio = (fd(steps[0]) - exact).abs() / (fd(steps[1]) - exact).abs();
        assert!((30.0..=300.0).contains(&ratio), "{mode}: error ratio {ratio}");
        let small: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&f| fd(f)).collect();
        let spread = small.iter().fold(0.0f64, |m, v| m.max((v - small[0]).abs()));
        assert!(spread <= 1e-6 * exact.abs(), "{mode}: estimates {small:?}");
    }
}

#[test]
fn zero_load_has_zero_sensitivities() {
    let mut pb = small_motor();
    pb.mesh = pb.mesh.with_scaled_magnetization(0.0);
    let (state, s) = sensitivities(&pb, Mode::Linear);
    assert!(s.onoff.iter().all(|&v| v == 0.0));
    assert_eq!(sensitivity_fd_oracle(&pb, &state, s.elements[0], 1e-4 * pb.model.nu1).unwrap(), 0.0);
}

#[test]
fn magnetization_scaling_is_quadratic() {
    let pb = small_motor();
    let (_, base) = sensitivities(&pb, Mode::Linear);
    let c = 3.0;
    let scaled = Problem {
        mesh: pb.mesh.with_scaled_magnetization(c),
        target: TargetCurve { amplitude: c * pb.target.amplitude, ..pb.target },
        ..pb.clone()
    };
    let (_, s) = sensitivities(&scaled, Mode::Linear);
    let pairs = base.onoff.iter().zip(&s.onoff).chain(base.topo.as_ref().unwrap().iter().zip(s.topo.as_ref().unwrap()));
    for (a, b) in pairs {
        assert!((b - c * c * a).abs() <= 1e-8 * (c * c * a).abs(), "{a:e} scaled to {b:e}");
    }
}

#[test]
fn sensitivity_sign_predicts_objective_change() {
    let pb = small_motor();
    for mode in [Mode::Linear, Mode::Nonlinear] {
        let (state, s) = sensitivities(&pb, mode);
        let mut mags: Vec<f64> = s.onoff.iter().map(|v| v.abs()).collect();
        mags.sort_by(f64::total_cmp);
        let cut = mags[mags.len() / 4];
        let h = 1e-4 * pb.model.nu1;
        let (mut agree, mut total) = (0, 0);
        for (&e, &v) in s.elements.iter().zip(&s.onoff) {
            if v.abs() > cut {
                total += 1;
                let fd = sensitivity_fd_oracle(&pb, &state, e, h).unwrap();
                agree += usize::from(fd.signum() == v.signum());
            }
        }
        assert!(agree as f64 >= 0.95 * total as f64, "{mode}: {agree}/{total}");
    }
}

#[test]
fn nonlinear_field_has_no_topological_derivative() {
    let pb = small_motor();
    let (_, s) = sensitivities(&pb, Mode::Nonlinear);
    assert!(s.topo.is_none());
    assert_eq!(s.elements, pb.mesh.design_elements());
    assert!(s.onoff.iter().all(|v| v.is_finite()));
}

#[test]
fn onoff_and_topological_derivative_agree_up_to_a_constant() {
    let pb = uniform_band_problem(40);
    let (state, s) = sensitivities(&pb, Mode::Linear);
    let ev = pb.evaluate(&state, None).unwrap();
    let area = pb.mesh.element_geometry(s.elements[0]).unwrap().area;
    let shape = panelize(&ShapeSpec::Disk, 256).unwrap();
    let p = polarization_matrix(&shape, pb.model.nu0, pb.model.nu1).unwrap();
    let g = topological_derivative_field(&pb.mesh, &state, &ev.state.u, &ev.adjoint.p, pb.model.nu0, pb.model.nu1, &(&p).into())
        .unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for ((&interior, &v), &gk) in s.interior.iter().zip(&s.onoff).zip(&g) {
        if interior {
            a.push(v);
            b.push(gk * area);
        }
    }
    assert!(a.len() >= 50, "{} interior elements", a.len());
    let (c, rel) = proportional_fit(&a, &b);
    assert!(c > 0.0);
    assert!(rel <= 0.05, "fit residual {rel}");
    assert!(correlation(&a, &b) > 0.99);
}
