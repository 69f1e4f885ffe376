use odesens::ode::{
    solve, solve_explicit, solve_stiff, Direction, IntegratorConfig, Method, OdeProblem, OdeSystem,
    Retcode,
};
use odesens::{Dual, Scalar};

/// u' = -k u with k = p[0].
struct Decay;

impl OdeSystem for Decay {
    fn dim(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        1
    }
    fn rhs<T: Scalar>(&self, u: &[T], p: &[T], _t: &T, du: &mut [T]) {
        du[0] = -(p[0].clone() * &u[0]);
    }
}

/// u' = 0.
struct Still;

impl OdeSystem for Still {
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        0
    }
    fn rhs<T: Scalar>(&self, _u: &[T], _p: &[T], _t: &T, du: &mut [T]) {
        du.iter_mut().for_each(|d| *d = T::zero());
    }
}

/// u' = -1000 (u - cos t).
struct Prothero;

impl OdeSystem for Prothero {
    fn dim(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        0
    }
    fn rhs<T: Scalar>(&self, u: &[T], _p: &[T], t: &T, du: &mut [T]) {
        du[0] = (u[0].clone() - t.cos()) * -1000.0;
    }
}

/// Decay with an event at u = level that leaves the state alone.
struct DecayWithIdentityEvent {
    level: f64,
}

impl OdeSystem for DecayWithIdentityEvent {
    fn dim(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        1
    }
    fn rhs<T: Scalar>(&self, u: &[T], p: &[T], t: &T, du: &mut [T]) {
        Decay.rhs(u, p, t, du)
    }
    fn n_events(&self) -> usize {
        1
    }
    fn event_direction(&self, _i: usize) -> Direction {
        Direction::Down
    }
    fn event_condition<T: Scalar>(&self, _i: usize, u: &[T], _p: &[T], _t: &T) -> T {
        u[0].clone() - self.level
    }
}

fn cfg(method: Method, tol: f64) -> IntegratorConfig {
    IntegratorConfig::new(method, tol)
}

#[test]
fn exponential_decay_explicit() {
    let prob = OdeProblem::new(&Decay, vec![1.0], vec![1.0], (0.0, 1.0)).unwrap();
    let sol = solve_explicit(&prob, &cfg(Method::Tsit5, 1e-8)).unwrap();
    assert_eq!(sol.retcode, Retcode::Success);
    assert!((sol.final_state()[0] - (-1f64).exp()).abs() < 1e-7);
    // Interpolation returns stored states exactly and is accurate between.
    for (k, t) in sol.time_values().iter().enumerate() {
        assert_eq!(sol.interpolate(*t).unwrap(), sol.us[k]);
    }
    let ts = sol.time_values();
    for w in ts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let err = (sol.interpolate(mid).unwrap()[0] - (-mid).exp()).abs();
        assert!(err < 1e-7, "midpoint {mid}: {err}");
    }
    assert!(sol.interpolate(1.5).is_err());
}

#[test]
fn constant_solution_is_exact() {
    let prob = OdeProblem::new(&Still, vec![3.25, -1.5], vec![], (0.0, 5.0)).unwrap();
    for m in [Method::Tsit5, Method::Rodas4] {
        let sol = solve(&prob, &cfg(m, 1e-6)).unwrap();
        for u in &sol.us {
            assert_eq!(u, &vec![3.25, -1.5]);
        }
        for t in [0.1, 1.7, 4.99] {
            assert_eq!(sol.interpolate(t).unwrap(), vec![3.25, -1.5]);
        }
    }
}

#[test]
fn explicit_order_on_decay() {
    let prob = OdeProblem::new(&Decay, vec![1.0], vec![1.0], (0.0, 1.0)).unwrap();
    let mut pts = Vec::new();
    let mut last = f64::INFINITY;
    for e in 4..=10 {
        let tol = 10f64.powi(-e);
        let sol = solve_explicit(&prob, &cfg(Method::Tsit5, tol)).unwrap();
        let err = (sol.final_state()[0] - (-1f64).exp()).abs();
        assert!(err <= last, "error not monotone at tol {tol}");
        last = err;
        pts.push(((sol.stats.naccept as f64).ln(), err.ln()));
    }
    let slope = fit_slope(&pts);
    assert!(-slope >= 4.5, "fitted order {}", -slope);
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn stiff_prothero_robinson() {
    let prob = OdeProblem::new(&Prothero, vec![0.0], vec![], (0.0, 1.0)).unwrap();
    let sol = solve_stiff(&prob, &cfg(Method::Rodas4, 1e-6)).unwrap();
    assert_eq!(sol.retcode, Retcode::Success);
    assert!(sol.stats.naccept <= 500, "{} steps", sol.stats.naccept);
    let reference = solve_explicit(&prob, &cfg(Method::Tsit5, 1e-12)).unwrap();
    let d = (sol.final_state()[0] - reference.final_state()[0]).abs();
    assert!(d < 1e-5, "{d}");
}

#[test]
fn stiff_linear_decay_and_dense_order() {
    let prob = OdeProblem::new(&Decay, vec![1.0], vec![1.0], (0.0, 1.0)).unwrap();
    let sol = solve_stiff(&prob, &cfg(Method::Rodas4, 1e-8)).unwrap();
    assert!((sol.final_state()[0] - (-1f64).exp()).abs() < 1e-7);
    // Dense output error on a single forced step shrinks at least cubically.
    let mut errs = Vec::new();
    for h in [0.2, 0.1, 0.05] {
        let mut c = cfg(Method::Rodas4, 0.5);
        c.dt_init = Some(h);
        c.dtmax = h;
        let p = OdeProblem::new(&Decay, vec![1.0], vec![1.0], (0.0, h)).unwrap();
        let s = solve_stiff(&p, &c).unwrap();
        assert_eq!(s.n_segments(), 1);
        let t = 0.37 * h;
        errs.push((s.interpolate(t).unwrap()[0] - (-t).exp()).abs());
    }
    for w in errs.windows(2) {
        assert!(w[0] / w[1] > 2f64.powi(3) * 0.8, "{errs:?}");
    }
}

#[test]
fn identity_event_does_not_change_trajectory() {
    let sys = DecayWithIdentityEvent { level: 0.5 };
    let prob = OdeProblem::new(&sys, vec![1.0], vec![1.0], (0.0, 2.0)).unwrap();
    let sol = solve_explicit(&prob, &cfg(Method::Tsit5, 1e-8)).unwrap();
    assert_eq!(sol.events.len(), 1);
    assert!((sol.events[0].t - 2f64.ln()).abs() < 1e-8);
    let plain = OdeProblem::new(&Decay, vec![1.0], vec![1.0], (0.0, 2.0)).unwrap();
    let base = solve_explicit(&plain, &cfg(Method::Tsit5, 1e-8)).unwrap();
    assert!((sol.final_state()[0] - base.final_state()[0]).abs() < 1e-7);
}

#[test]
fn zero_seeded_duals_match_reals_bitwise() {
    let prob = OdeProblem::new(&Decay, vec![1.0], vec![0.7], (0.0, 3.0)).unwrap();
    let dprob = OdeProblem::new(
        &Decay,
        vec![Dual::new(1.0, vec![0.0, 0.0])],
        vec![Dual::new(0.7, vec![0.0, 0.0])],
        (0.0, 3.0),
    )
    .unwrap();
    for m in [Method::Tsit5, Method::Rodas4] {
        let a = solve(&prob, &cfg(m, 1e-6)).unwrap();
        let b = solve(&dprob, &cfg(m, 1e-6)).unwrap();
        assert_eq!(a.ts.len(), b.ts.len());
        for (x, y) in a.us.iter().zip(&b.us) {
            assert_eq!(x[0].to_bits(), y[0].value().to_bits());
        }
    }
}

#[test]
fn dual_solve_gives_parameter_sensitivity() {
    let dprob = OdeProblem::new(
        &Decay,
        vec![Dual::constant(1.0)],
        vec![Dual::variable(1.0, 0, 1)],
        (0.0, 1.0),
    )
    .unwrap();
    let sol = solve_explicit(&dprob, &cfg(Method::Tsit5, 1e-10)).unwrap();
    let s = sol.final_state()[0].partial(0);
    assert!((s + (-1f64).exp()).abs() < 1e-8, "{s}");
}

#[test]
fn max_steps_and_dtmin_are_reported() {
    let prob = OdeProblem::new(&Decay, vec![1.0], vec![1.0], (0.0, 10.0)).unwrap();
    let mut c = cfg(Method::Tsit5, 1e-10);
    c.max_steps = 3;
    assert_eq!(solve(&prob, &c).unwrap().retcode, Retcode::MaxIters);
    let mut c = cfg(Method::Tsit5, 1e-12);
    c.dtmin = 0.5;
    c.dtmax = 1.0;
    assert_eq!(solve(&prob, &c).unwrap().retcode, Retcode::DtMin);
}

#[test]
fn lv_dense_output_tracks_tight_reference() {
    use rand::{Rng, SeedableRng};
    let m = odesens::models::lv();
    let prob = OdeProblem::new(&m.system, m.u0.clone(), m.true_params.clone(), m.tspan).unwrap();
    let reference = solve(&prob, &cfg(Method::Tsit5, 1e-12)).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    let ts: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..10.0)).collect();
    for method in [Method::Tsit5, Method::Rodas4] {
        let tol = 1e-6;
        let sol = solve(&prob, &cfg(method, tol)).unwrap();
        let worst = ts.iter().fold(0.0f64, |w, t| {
            let a = sol.interpolate(*t).unwrap();
            let b = reference.interpolate(*t).unwrap();
            a.iter().zip(&b).fold(w, |w, (x, y)| w.max((x - y).abs()))
        });
        assert!(worst <= 100.0 * tol, "{method:?}: {worst:e}");
    }
}
