use dcopf_core::cert::{
    build_update_system, evaluate_certificate, tune_parameters, verify_contraction_trace, NormKind,
    ParamGrid, TuneObjective,
};
use dcopf_core::engine::{run, Engine, RunConfig, StopRule, TuningParams, UpdateMode};
use dcopf_core::model::{load_case_path, load_case_str, GridCase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn case(name: &str) -> GridCase {
    load_case_path(format!("{}/cases/{name}.json", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn two_bus_dimensions() {
    let sys = build_update_system(&case("two_bus"), &TuningParams::new(1.0, 1.0, 1.0, 1.0));
    assert_eq!(sys.a.shape(), (7, 7));
    assert_eq!(sys.layout.unwrap().blocks(), (2, 2, 2, 1));
}

#[test]
fn zero_steps_leave_identity_on_state_blocks() {
    let sys = build_update_system(&case("three_bus"), &TuningParams::new(0.0, 0.0, 0.0, 0.0));
    let m = sys.iteration_matrix();
    let l = sys.layout.unwrap();
    let upto = l.pg(0);
    for i in 0..upto {
        for j in 0..l.dim() {
            let expect = if i == j && i != l.theta(0) { 1.0 } else { 0.0 };
            assert_eq!(m[(i, j)], expect, "({i},{j})");
        }
    }
}

#[test]
fn dense_step_matches_engine_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in ["two_bus", "three_bus", "three_bus_congested", "three_bus_multigen", "five_bus"] {
        let c = case(name);
        let e = Engine::new(&c);
        let params = TuningParams::new(0.7, 0.03, 0.05, 0.4);
        let sys = build_update_system(&c, &params);
        for _ in 0..100 {
            let x: Vec<f64> = (0..e.layout().dim()).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let agent = e.to_stacked(&e.step(&e.from_stacked(&x, 0), &params).unwrap());
            assert!(linf(&agent, &sys.dense_step(&x)) <= 1e-10, "{name}");
        }
    }
}

#[test]
fn every_line_case_has_unit_eigenvalue() {
    let c = case("three_bus");
    let cert = evaluate_certificate(&build_update_system(&c, &TuningParams::new(0.1, 0.01, 0.01, 0.01)));
    assert!(cert.spectral_radius.unwrap() >= 1.0 - 1e-12);
    assert!(!cert.certified);
}

#[test]
fn single_bus_norms_stay_at_least_one_while_radius_drops_below() {
    let c = load_case_str(
        r#"{"buses":[{"id":1,"load":20}],"lines":[],
        "generators":[{"bus":1,"a":0.5,"b":10,"c":0,"pmin":0,"pmax":100}]}"#,
    )
    .unwrap();
    let result = tune_parameters(&c, &ParamGrid::log_uniform(1e-4, 1.0, 5), TuneObjective::MinSpectralRadius);
    assert!(result.table.iter().all(|r| !r.certificate.certified && r.certificate.norms.min() >= 1.0));
    let best = result.best.expect("radius available");
    assert!(best.certificate.spectral_radius.unwrap() < 1.0);
    let e = Engine::new(&c);
    let trace = run(&c, &best.params, e.init_cold(), &RunConfig::default()).unwrap();
    assert!(trace.converged(), "{:?}", trace.outcome);
}

#[test]
fn contraction_inequality_on_traces() {
    let c = case("three_bus_congested");
    let e = Engine::new(&c);
    for params in [TuningParams::new(2.0, 0.02, 0.04, 4.0), TuningParams::new(50.0, 1.0, 1.0, 1.0)] {
        let sys = build_update_system(&c, &params);
        let cfg = RunConfig { stop: StopRule { max_iters: 3000, ..StopRule::default() }, ..RunConfig::default() };
        let trace = run(&c, &params, e.init_cold(), &cfg).unwrap();
        for p in [NormKind::L1, NormKind::LInf, NormKind::L2] {
            let report = verify_contraction_trace(&trace, &sys, p).unwrap();
            assert!(report.holds(), "{p:?} {report:?}");
            assert!(report.max_ratio.unwrap() <= report.norm * (1.0 + 1e-9) + 1e-12);
        }
    }
}

#[test]
fn stationary_trace() {
    let c = case("three_bus");
    let e = Engine::new(&c);
    let params = TuningParams::new(0.0, 0.0, 0.0, 0.0);
    let cfg = RunConfig { stop: StopRule::max_iters_only(5), ..RunConfig::default() };
    let mut trace = run(&c, &params, e.init_cold(), &cfg).unwrap();
    trace.records.remove(0);
    let report = verify_contraction_trace(&trace, &build_update_system(&c, &params), NormKind::LInf).unwrap();
    assert!(report.stationary);
    assert_eq!(report.max_ratio, None);
}

#[test]
fn mismatched_traces_are_rejected() {
    let c = case("three_bus");
    let e = Engine::new(&c);
    let params = TuningParams::new(2.0, 0.02, 0.04, 0.2);
    let cfg = RunConfig { stop: StopRule::max_iters_only(5), ..RunConfig::default() };
    let trace = run(&c, &params, e.init_cold(), &cfg).unwrap();
    let other = build_update_system(&c, &TuningParams::new(1.0, 0.02, 0.04, 0.2));
    assert!(verify_contraction_trace(&trace, &other, NormKind::L1).is_err());
    let serial = run(&c, &params.with_mode(UpdateMode::Serial), e.init_cold(), &cfg).unwrap();
    assert!(verify_contraction_trace(&serial, &build_update_system(&c, &params), NormKind::L1).is_err());
}

#[test]
fn singleton_grid_returns_its_point() {
    let c = case("three_bus");
    let p = TuningParams::new(2.0, 0.02, 0.04, 0.2);
    let result = tune_parameters(&c, &ParamGrid::singleton(&p), TuneObjective::MinSpectralRadius);
    assert_eq!(result.table.len(), 1);
    assert_eq!(result.best.unwrap().params, p);
}

#[test]
fn two_bus_log_grid_has_empirically_convergent_point() {
    let c = case("two_bus");
    let result = tune_parameters(
        &c,
        &ParamGrid::log_uniform(1e-4, 1.0, 5),
        TuneObjective::Empirical { max_iters: 5000, rel_tol: 1e-6 },
    );
    assert_eq!(result.table.len(), 625);
    let best = result.best.expect("some point converges");
    assert!(best.certificate.spectral_radius.is_some());
    for row in &result.table {
        let cert = &row.certificate;
        if let Some(rho) = cert.spectral_radius {
            for p in [Some(cert.norms.l1), cert.norms.l2, Some(cert.norms.linf)].into_iter().flatten() {
                assert!(rho <= p * (1.0 + 1e-9), "{rho} > {p}");
            }
        }
    }
}
