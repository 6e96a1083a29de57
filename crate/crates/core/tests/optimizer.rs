mod common;

use common::motor;
use magtopo_core::fem::SolverOptions;
use magtopo_core::materials::Mode;
use magtopo_core::optimizer::{run_onoff, OptimizeError, OptimizationResult, OptimizerConfig, StopReason};
use magtopo_core::problem::Problem;

fn run(pb: &Problem, mode: Mode, cfg: &OptimizerConfig) -> OptimizationResult {
    run_onoff(pb, mode, cfg).unwrap()
}

#[test]
fn zero_iterations_record_only_the_initial_design() {
    let pb = motor(0.004);
    let res = run(&pb, Mode::Linear, &OptimizerConfig { max_iters: 0, ..Default::default() });
    let h = &res.history;
    assert_eq!(h.records.len(), 1);
    assert_eq!(h.stop, Some(StopReason::MaxIterations));
    assert!(h.records[0].flags.iter().all(|&f| f));
    assert_eq!(h.initial_j(), pb.objective(&pb.solve(&res.best, None).unwrap().u));
}

#[test]
fn unmagnetized_motor_stops_without_minima() {
    let mut pb = motor(0.004);
    pb.mesh = pb.mesh.with_scaled_magnetization(0.0);
    let res = run(&pb, Mode::Linear, &OptimizerConfig::default());
    let h = &res.history;
    assert_eq!(h.stop, Some(StopReason::NoMinima));
    assert_eq!(h.records.len(), 1);
    assert_eq!(h.best_j(), h.initial_j());
}

#[test]
fn best_objective_never_increases() {
    let pb = motor(0.004);
    for mode in [Mode::Linear, Mode::Nonlinear] {
        let cfg = OptimizerConfig { max_iters: 12, stop_stagnation: 0, ..Default::default() };
        let h = run(&pb, mode, &cfg).history;
        assert_eq!(h.records[0].best_j, h.records[0].j);
        for w in h.records.windows(2) {
            assert!(w[1].best_j <= w[0].best_j, "{mode}: {} -> {}", w[0].best_j, w[1].best_j);
            assert_eq!(w[1].best_j, w[0].best_j.min(if w[1].reverted { w[0].best_j } else { w[1].j }));
        }
        assert!(h.best_j() < h.initial_j(), "{mode}: no improvement");
    }
}

#[test]
fn design_counts_and_tabu_are_consistent() {
    let pb = motor(0.004);
    let res = run(&pb, Mode::Linear, &OptimizerConfig { max_iters: 15, stop_stagnation: 0, ..Default::default() });
    let h = &res.history;
    let n = h.design_elements.len();
    assert_eq!(res.best.count_on() + res.best.count_off(), n);
    for r in &h.records {
        assert_eq!(r.flags.len(), n);
    }
    // without switch-on, an element once OFF stays OFF, and a tabu element is never switched
    for w in h.records.windows(2) {
        for (a, b) in w[0].flags.iter().zip(&w[1].flags) {
            assert!(*a || !*b);
        }
        if w[1].reverted {
            assert_eq!(w[0].flags, w[1].flags);
        }
    }
    for &e in &h.tabu {
        let slot = h.design_elements.iter().position(|&d| d == e).unwrap();
        assert!(h.records.iter().all(|r| r.flags[slot]), "tabu element {e} was carved");
    }
    let last = h.records.last().unwrap();
    let final_flags: Vec<bool> = res.best.flags().map(|(_, f)| f).collect();
    assert_eq!(last.flags, final_flags);
}

#[test]
fn reruns_are_identical() {
    let pb = motor(0.004);
    let cfg = OptimizerConfig { max_iters: 10, ..Default::default() };
    let a = run(&pb, Mode::Nonlinear, &cfg);
    let b = run(&pb, Mode::Nonlinear, &cfg);
    assert_eq!(a.history, b.history);
    assert_eq!(a.best_u.values, b.best_u.values);
}

#[test]
fn shrinking_radius_follows_the_schedule() {
    let pb = motor(0.004);
    let cfg = OptimizerConfig { max_iters: 6, initial_radius: Some(0.003), radius_factor: 0.5, stop_stagnation: 0, ..Default::default() };
    let h = run(&pb, Mode::Linear, &cfg).history;
    for r in &h.records[1..] {
        assert!((r.radius - 0.003 * 0.5f64.powi(r.iter as i32 - 1)).abs() <= 1e-15);
    }
}

#[test]
fn invalid_configuration_is_rejected() {
    let pb = motor(0.004);
    for cfg in [
        OptimizerConfig { minima_per_iter: 0, ..Default::default() },
        OptimizerConfig { radius_factor: 1.5, ..Default::default() },
        OptimizerConfig { negative_threshold: -0.1, ..Default::default() },
        OptimizerConfig { initial_radius: Some(f64::NAN), ..Default::default() },
    ] {
        assert!(matches!(run_onoff(&pb, Mode::Linear, &cfg), Err(OptimizeError::Config(_))));
    }
}

#[test]
fn solver_failure_reports_the_iteration() {
    let mut pb = motor(0.004);
    pb.opts = SolverOptions { max_newton: 1, ..Default::default() };
    match run_onoff(&pb, Mode::Nonlinear, &OptimizerConfig::default()) {
        Err(OptimizeError::Solve { iteration, history, .. }) => {
            assert_eq!(iteration, 0);
            assert!(history.records.is_empty());
        }
        other => panic!("expected a solver failure, got {other:?}"),
    }
}
