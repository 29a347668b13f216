use dcopf_core::cases::builtin;
use dcopf_core::engine::{run, Engine, RunConfig, StopRule, SystemState, TuningParams, UpdateMode};
use dcopf_core::matrices::build_matrices;
use dcopf_core::model::{load_case_str, GridCase};
use dcopf_core::oracle::{solve_centralized, solve_enumeration, OracleError};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Connected random case with `n` buses, in MW.
fn random_case(seed: u64, n: usize, max_gens: usize) -> GridCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let buses: Vec<_> = (1..=n)
        .map(|id| json!({"id": id, "load": if rng.gen_bool(0.7) { rng.gen_range(0.0..80.0) } else { 0.0 }}))
        .collect();
    let mut pairs = Vec::new();
    for i in 2..=n {
        pairs.push((rng.gen_range(1..i), i));
    }
    for i in 1..=n {
        for j in i + 1..=n {
            if !pairs.contains(&(i, j)) && rng.gen_bool(0.3) {
                pairs.push((i, j));
            }
        }
    }
    let lines: Vec<_> = pairs
        .iter()
        .map(|&(i, j)| {
            let (from, to) = if rng.gen_bool(0.5) { (i, j) } else { (j, i) };
            json!({"from": from, "to": to, "x": rng.gen_range(0.05..0.5), "limit": rng.gen_range(20.0..150.0)})
        })
        .collect();
    let n_gens = rng.gen_range(1..=max_gens);
    let gens: Vec<_> = (0..n_gens)
        .map(|_| {
            let pmin = if rng.gen_bool(0.3) { rng.gen_range(0.0..20.0) } else { 0.0 };
            json!({
                "bus": rng.gen_range(1..=n),
                "a": rng.gen_range(0.005..0.1),
                "b": rng.gen_range(5.0..40.0),
                "c": rng.gen_range(0.0..100.0),
                "pmin": pmin,
                "pmax": pmin + rng.gen_range(30.0..200.0),
            })
        })
        .collect();
    let doc = json!({"buses": buses, "lines": lines, "gens": gens});
    load_case_str(&doc.to_string()).expect("generated case is valid")
}

fn random_state(engine: &Engine, rng: &mut ChaCha8Rng) -> SystemState {
    let l = engine.layout();
    let mut x = vec![0.0; l.dim()];
    for v in &mut x {
        *v = rng.gen_range(-5.0..5.0);
    }
    for i in 0..l.n_buses {
        x[l.lambda(i)] = rng.gen_range(-20.0..60.0);
    }
    engine.from_stacked(&x, 0)
}

fn random_params(rng: &mut ChaCha8Rng, mode: UpdateMode) -> TuningParams {
    TuningParams::new(
        rng.gen_range(0.01..5.0),
        rng.gen_range(0.001..0.5),
        rng.gen_range(0.001..0.5),
        rng.gen_range(0.001..5.0),
    )
    .with_mode(mode)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn susceptance_matrix_is_a_laplacian(seed in any::<u64>(), n in 2usize..9) {
        let case = random_case(seed, n, 3).per_unit();
        let m = build_matrices(&case);
        prop_assert_eq!(&m.b, &m.b.transpose());
        for i in 0..n {
            prop_assert!(m.b.row(i).sum().abs() <= 1e-9 * m.b[(i, i)]);
        }
        let eig = SymmetricEigen::new(m.b.clone()).eigenvalues;
        let scale = eig.amax();
        prop_assert!(eig.iter().all(|&v| v >= -1e-10 * scale));
        prop_assert_eq!(eig.iter().filter(|v| v.abs() <= 1e-10 * scale).count(), 1);
    }

    #[test]
    fn incidence_and_directed_rows_pair_up(seed in any::<u64>(), n in 2usize..9) {
        let case = random_case(seed, n, 3).per_unit();
        let m = build_matrices(&case);
        let nl = case.n_lines();
        for l in 0..nl {
            let col = m.incidence.column(l);
            prop_assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
            prop_assert_eq!(col.iter().filter(|&&v| v == -1.0).count(), 1);
            prop_assert_eq!(col.iter().filter(|&&v| v != 0.0).count(), 2);
            let sum = m.by.row(l) + m.by.row(l + nl);
            prop_assert!(sum.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn limit_scaling_is_multiplicative(seed in any::<u64>(), f in 0.1f64..3.0, g in 0.1f64..3.0) {
        let case = random_case(seed, 5, 3);
        let twice = case.scale_line_limits(f).unwrap().scale_line_limits(g).unwrap();
        let once = case.scale_line_limits(f * g).unwrap();
        for (a, b) in twice.lines.iter().zip(&once.lines) {
            prop_assert!(close(a.limit, b.limit, 1e-12));
        }
    }

    #[test]
    fn unit_round_trip(seed in any::<u64>()) {
        let case = random_case(seed, 5, 4);
        let back = case.to_internal_units().unwrap().from_internal_units().unwrap();
        for (a, b) in case.buses.iter().zip(&back.buses) {
            prop_assert!(close(a.load, b.load, 1e-12));
        }
        for (a, b) in case.lines.iter().zip(&back.lines) {
            prop_assert!(close(a.limit, b.limit, 1e-12) && close(a.reactance, b.reactance, 1e-12));
        }
        for (a, b) in case.generators.iter().zip(&back.generators) {
            for (x, y) in [(a.a, b.a), (a.b, b.b), (a.c, b.c), (a.pmin, b.pmin), (a.pmax, b.pmax)] {
                prop_assert!(close(x, y, 1e-12));
            }
        }
        let pg: Vec<f64> = case.generators.iter().map(|g| 0.5 * (g.pmin + g.pmax)).collect();
        let pu = case.per_unit();
        let pg_pu: Vec<f64> = pg.iter().map(|p| p / pu.base_mva).collect();
        prop_assert!(close(case.objective(&pg), pu.objective(&pg_pu), 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn oracles_agree_on_random_small_cases(seed in any::<u64>(), n in 2usize..5) {
        let case = random_case(seed, n, 3);
        match (solve_centralized(&case), solve_enumeration(&case)) {
            (Ok(a), Ok(e)) => {
                prop_assert!((a.objective - e.objective).abs() <= 1e-8, "{} vs {}", a.objective, e.objective);
                for (x, y) in a.point.pg.iter().zip(&e.point.pg) {
                    prop_assert!((x - y).abs() <= 1e-6);
                }
                let pu = case.per_unit();
                for (n, g) in pu.generators.iter().enumerate() {
                    let gap = a.point.lambda[g.bus] - pu.cost_slope(n) * a.point.pg[n] - pu.cost_intercept(n);
                    let recovered = a.point.mu_gen_hi[n] - a.point.mu_gen_lo[n];
                    prop_assert!((gap - recovered).abs() <= 1e-8);
                }
            }
            (Err(OracleError::Infeasible(_)), Err(OracleError::Infeasible(_))) => {}
            (a, e) => prop_assert!(false, "routes disagree: {:?} vs {:?}", a.map(|s| s.objective), e.map(|s| s.objective)),
        }
    }

    #[test]
    fn steps_respect_projections(seed in any::<u64>(), n in 2usize..7, serial in any::<bool>()) {
        let mode = if serial { UpdateMode::Serial } else { UpdateMode::Synchronous };
        let case = random_case(seed, n, 4);
        let engine = Engine::new(&case);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let params = random_params(&mut rng, mode);
        let mut state = random_state(&engine, &mut rng);
        for _ in 0..5 {
            state = engine.step(&state, &params).unwrap();
            let pu = engine.case();
            for (i, a) in state.agents.iter().enumerate() {
                prop_assert!(a.mu_out.iter().all(|&m| m >= 0.0));
                if pu.buses[i].is_slack {
                    prop_assert_eq!(a.theta, 0.0);
                }
            }
            for (n, g) in pu.generators.iter().enumerate() {
                let p = engine.to_point(&state).pg[n];
                prop_assert!(p >= g.pmin && p <= g.pmax);
            }
        }
    }

    #[test]
    fn synchronous_step_commutes_with_relabeling(seed in any::<u64>(), n in 2usize..8) {
        let case = random_case(seed, n, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let relabeled = case.relabel(&perm).unwrap();
        let (engine, other) = (Engine::new(&case), Engine::new(&relabeled));
        let params = random_params(&mut rng, UpdateMode::Synchronous);
        let mut state = random_state(&engine, &mut rng);
        let permute = |s: &SystemState| {
            let mut agents = s.agents.clone();
            for (old, a) in s.agents.iter().enumerate() {
                agents[perm[old]] = a.clone();
            }
            SystemState { k: s.k, agents }
        };
        let mut moved = permute(&state);
        for _ in 0..10 {
            state = engine.step(&state, &params).unwrap();
            moved = other.step(&moved, &params).unwrap();
            prop_assert_eq!(&permute(&state), &moved);
        }
    }
}

fn trace_bits(case: &GridCase, params: &TuningParams) -> Vec<Vec<u64>> {
    let engine = Engine::new(case);
    let config = RunConfig {
        stop: StopRule::max_iters_only(300),
        ..RunConfig::default()
    };
    run(case, params, engine.init_cold(), &config)
        .unwrap()
        .records
        .iter()
        .map(|r| r.state.iter().map(|v| v.to_bits()).collect())
        .collect()
}

#[test]
fn runs_are_bit_identical() {
    let large = random_case(7, 90, 30);
    for case in [builtin("rts24").unwrap(), builtin("five_bus").unwrap(), large] {
        for mode in [UpdateMode::Synchronous, UpdateMode::Serial] {
            let params = TuningParams::rts_reference().with_mode(mode);
            assert_eq!(trace_bits(&case, &params), trace_bits(&case, &params));
        }
    }
}

#[test]
fn generated_cases_are_connected() {
    for seed in 0..50 {
        let case = random_case(seed, 2 + (seed as usize % 12), 5);
        assert!(case.is_connected());
        let zero = DMatrix::<f64>::zeros(case.n_buses(), case.n_buses());
        assert_ne!(build_matrices(&case).b, zero);
    }
}
