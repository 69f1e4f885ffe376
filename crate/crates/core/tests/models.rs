use odesens::forward::{jacobian, SeedPlan, Wrt};
use odesens::models::{self, bruss_forcing, Brusselator, Model, Pkpd, ModelSpec};
use odesens::ode::{solve, IntegratorConfig, OdeProblem, OdeSystem, Retcode};
use odesens::{Dual, Scalar};

fn rhs(spec: &ModelSpec, u: &[f64], p: &[f64], t: f64) -> Vec<f64> {
    let mut du = vec![0.0; u.len()];
    spec.system.rhs(u, p, &t, &mut du);
    du
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

fn all_models() -> Vec<ModelSpec> {
    vec![
        models::lv(),
        models::bruss(3).unwrap(),
        models::bruss(4).unwrap(),
        models::pollu(),
        models::pkpd(),
        models::hybrid_control(2.0, 1.0).unwrap(),
    ]
}

/// A state a little away from the initial one, so that no term vanishes.
fn probe_state(spec: &ModelSpec) -> Vec<f64> {
    spec.u0.iter().enumerate().map(|(i, x)| x + 0.1 + 0.01 * i as f64).collect()
}

#[test]
fn lv_examples() {
    let m = models::lv();
    assert_eq!((m.n_states(), m.n_params()), (2, 3));
    assert_eq!(rhs(&m, &m.u0, &m.true_params, 0.0), vec![0.5, -2.0]);
    let mut j = vec![0.0; 4];
    assert!(m.system.analytic_jacobian(&m.u0, &m.true_params, &0.0, &mut j));
    assert_eq!(j, vec![0.5, -1.0, 1.0, -2.0]);
}

#[test]
fn bruss_examples() {
    let m = models::bruss(3).unwrap();
    assert_eq!((m.n_states(), m.n_params()), (18, 36));
    // Node (1, 1) is (0.5, 0.5): u0 = 22·(1/4)^{3/2}.
    let Model::Bruss(b) = &m.system else { unreachable!() };
    let k = 4;
    assert_eq!(b.node_xy(k), (0.5, 0.5));
    assert!((m.u0[2 * k] - 2.75).abs() < 1e-14);
    assert_eq!(bruss_forcing(0.3, 0.6, 2.0), 5.0);
    assert_eq!(bruss_forcing(0.3, 0.6, 1.0), 0.0);
    assert_eq!(bruss_forcing(0.9, 0.9, 2.0), 0.0);
    assert!(models::bruss(1).is_err());
}

#[test]
fn bruss_laplacian_of_constant_is_zero() {
    for n in 2..8 {
        let b = Brusselator::new(n).unwrap();
        let w = vec![3.7; 2 * n * n];
        for k in 0..n * n {
            assert_eq!(b.laplacian(&w, k, 0), 0.0);
            assert_eq!(b.laplacian(&w, k, 1), 0.0);
        }
    }
}

#[test]
fn pollu_examples() {
    let m = models::pollu();
    assert_eq!((m.n_states(), m.n_params()), (20, 25));
    let du = rhs(&m, &m.u0, &m.true_params, 0.0);
    assert_eq!(du[11], 0.0);
    assert!((du[1] + 0.2128).abs() < 1e-15);
}

#[test]
fn pkpd_examples() {
    let m = models::pkpd();
    assert_eq!(m.n_states(), 5);
    let du = rhs(&m, &m.u0, &m.true_params, 0.0);
    assert_eq!(du[0], -100.0);
    assert_eq!(du[4], 0.0);
    // Dose at t = 24 adds 100 to the depot.
    let prob = OdeProblem::new(&m.system, m.u0.clone(), m.true_params.clone(), (0.0, 30.0)).unwrap();
    let sol = solve(&prob, &IntegratorConfig::new(m.method, 1e-8)).unwrap();
    assert_eq!(sol.events.len(), 1);
    let ev = &sol.events[0];
    assert!((ev.t - 24.0).abs() < 1e-12);
    assert!((ev.u_post[0] - ev.u_pre[0] - 100.0).abs() < 1e-12);
}

#[test]
fn pkpd_without_saturable_term_matches_at_zero_vmax() {
    let m = models::pkpd();
    let pk = Pkpd::default();
    for s in 0..5 {
        let u: Vec<f64> = m.u0.iter().map(|x| x * (1.0 + 0.1 * s as f64) + s as f64).collect();
        let full = rhs(&m, &u, &m.true_params, 0.0);
        let mut lin = vec![0.0; 5];
        pk.rhs_linear_elimination(&u, &m.true_params, &mut lin);
        for (a, b) in full.iter().zip(&lin) {
            assert!(close(*a, *b, 1e-14), "{a} vs {b}");
        }
    }
}

#[test]
fn hybrid_event_time_and_state() {
    let m = models::hybrid_control(2.0, 1.0).unwrap();
    let prob = OdeProblem::new(&m.system, m.u0.clone(), m.true_params.clone(), m.tspan).unwrap();
    let sol = solve(&prob, &IntegratorConfig::new(m.method, 1e-8)).unwrap();
    assert_eq!(sol.retcode, Retcode::Success);
    assert_eq!(sol.events.len(), 1);
    assert!((sol.events[0].t - 0.5).abs() < 1e-12);
    let u = sol.final_state();
    assert!((u[0] + 1.0).abs() < 1e-8 && (u[1] - 0.5).abs() < 1e-8);

    // Crossing exactly at the final time.
    let m = models::hybrid_control(1.0, 0.7).unwrap();
    let prob = OdeProblem::new(&m.system, m.u0.clone(), m.true_params.clone(), m.tspan).unwrap();
    let sol = solve(&prob, &IntegratorConfig::new(m.method, 1e-8)).unwrap();
    assert!((sol.final_state()[1] - 0.7).abs() < 1e-10);
    assert_eq!(models::hybrid_solution(2.0, 1.0, 1.0), [-1.0, 0.5]);
    assert_eq!(models::hybrid_sensitivities(2.0, 1.0, 1.0), [-1.0, -0.25, 0.0, 0.5]);
}

#[test]
fn analytic_jacobians_match_forward_ad() {
    for m in all_models() {
        let u = probe_state(&m);
        let p = &m.true_params;
        let n = m.n_states();
        let np = m.n_params();
        let ad = jacobian(&m.system, &u, p, 0.5, Wrt::State, &SeedPlan::full(n)).unwrap();
        let mut an = vec![0.0; n * n];
        assert!(m.system.analytic_jacobian(&u, p, &0.5, &mut an), "{}", m.name);
        for (a, b) in an.iter().zip(&ad) {
            assert!(close(*a, *b, 1e-12), "{}: {a} vs {b}", m.name);
        }
        let ad = jacobian(&m.system, &u, p, 0.5, Wrt::Params, &SeedPlan::full(np)).unwrap();
        let mut an = vec![0.0; n * np];
        assert!(m.system.analytic_param_jacobian(&u, p, 0.5, &mut an), "{}", m.name);
        for (i, (a, b)) in an.iter().zip(&ad).enumerate() {
            assert!(close(*a, *b, 1e-12), "{} entry {i}: {a} vs {b}", m.name);
        }
    }
}

#[test]
fn rhs_is_identical_for_reals_and_zero_seeded_duals() {
    for m in all_models() {
        let u = probe_state(&m);
        let p = &m.true_params;
        let f = rhs(&m, &u, p, 2.0);
        let w = 3;
        let ud: Vec<Dual> = u.iter().map(|x| Dual::new(*x, vec![0.0; w])).collect();
        let pd: Vec<Dual> = p.iter().map(|x| Dual::new(*x, vec![0.0; w])).collect();
        let mut fd = vec![Dual::zero(); u.len()];
        m.system.rhs(&ud, &pd, &Dual::constant(2.0), &mut fd);
        for (a, b) in f.iter().zip(&fd) {
            assert!(close(*a, b.value(), 1e-14), "{}", m.name);
            assert!(b.partials().iter().all(|d| *d == 0.0));
        }
    }
}

#[test]
fn registry_by_name() {
    for name in models::MODEL_NAMES {
        assert_eq!(models::by_name(name).unwrap().name, name);
    }
    assert!(models::by_name("vdp").is_err());
    let g = models::lv().initial_guess();
    for (a, b) in g.iter().zip([1.2, 0.8, 2.4]) {
        assert!((a - b).abs() < 1e-15);
    }
}
