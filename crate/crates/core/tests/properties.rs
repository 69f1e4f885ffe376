use std::f64::consts::{E, PI};

use odesens::forward::{dual_arith, dual_elementary, jacobian, ArithOp, Elementary, SeedPlan, Wrt};
use odesens::models::{self, ModelSpec};
use odesens::quadrature::adaptive;
use odesens::reverse::record;
use odesens::{Dual, Scalar};
use proptest::prelude::*;

fn cdiff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = f64::EPSILON.cbrt() * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn close(ad: f64, fd: f64, rel: f64) -> bool {
    (ad - fd).abs() <= rel * ad.abs().max(1.0)
}

const OP_TOL: f64 = 10.0 * 1.4901161193847656e-8;

proptest! {
    #[test]
    fn arithmetic_partials_match_differences(a in -5.0..5.0f64, b in prop_oneof![-5.0..-0.2f64, 0.2..5.0f64]) {
        for op in [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div] {
            let f = |x: f64, y: f64| match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => x / y,
            };
            let d = dual_arith(&Dual::variable(a, 0, 2), &Dual::variable(b, 1, 2), op).unwrap();
            prop_assert_eq!(d.value(), f(a, b));
            prop_assert!(close(d.partial(0), cdiff(|x| f(x, b), a), OP_TOL), "{:?} d/da", op);
            prop_assert!(close(d.partial(1), cdiff(|y| f(a, y), b), OP_TOL), "{:?} d/db", op);
        }
    }

    #[test]
    fn elementary_partials_match_differences(x in 0.05..6.0f64, s in -6.0..6.0f64, n in -3.0..3.0f64) {
        let cases: [(Elementary, f64, fn(f64, f64) -> f64); 7] = [
            (Elementary::Exp, s, |x, _| x.exp()),
            (Elementary::Log, x, |x, _| x.ln()),
            (Elementary::Sin, s, |x, _| x.sin()),
            (Elementary::Cos, s, |x, _| x.cos()),
            (Elementary::Sqrt, x, |x, _| x.sqrt()),
            (Elementary::Pow(n), x, |x, n| x.powf(n)),
            (Elementary::Abs, if s.abs() < 0.05 { 1.0 } else { s }, |x, _| x.abs()),
        ];
        for (op, at, f) in cases {
            let d = dual_elementary(&Dual::variable(at, 0, 1), op).unwrap();
            prop_assert!((d.value() - f(at, n)).abs() <= 4.0 * f64::EPSILON * f(at, n).abs());
            prop_assert!(close(d.partial(0), cdiff(|v| f(v, n), at), OP_TOL), "{:?} at {}", op, at);
        }
    }
}

/// Expressions over two variables built from smooth, bounded-growth pieces.
#[derive(Debug, Clone)]
enum Expr {
    X,
    Y,
    Const(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// `a / (1 + b²)`
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    /// `exp(sin a)`
    Exp(Box<Expr>),
    /// `ln(1 + a²)`
    Log(Box<Expr>),
    /// `sqrt(1 + a²)`
    Sqrt(Box<Expr>),
    /// `(1 + a²)^n`
    Pow(Box<Expr>, f64),
}

impl Expr {
    fn eval<T: Scalar>(&self, x: &T, y: &T) -> T {
        let one_plus_sq = |a: T| a.clone() * &a + 1.0;
        match self {
            Expr::X => x.clone(),
            Expr::Y => y.clone(),
            Expr::Const(c) => T::from(*c),
            Expr::Add(a, b) => a.eval(x, y) + &b.eval(x, y),
            Expr::Sub(a, b) => a.eval(x, y) - &b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * &b.eval(x, y),
            Expr::Div(a, b) => a.eval(x, y) / &one_plus_sq(b.eval(x, y)),
            Expr::Sin(a) => a.eval(x, y).sin(),
            Expr::Cos(a) => a.eval(x, y).cos(),
            Expr::Exp(a) => a.eval(x, y).sin().exp(),
            Expr::Log(a) => one_plus_sq(a.eval(x, y)).ln(),
            Expr::Sqrt(a) => one_plus_sq(a.eval(x, y)).sqrt(),
            Expr::Pow(a, n) => one_plus_sq(a.eval(x, y)).powf(*n),
        }
    }
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![Just(Expr::X), Just(Expr::Y), (-2.0..2.0f64).prop_map(Expr::Const)];
    leaf.prop_recursive(6, 48, 2, |inner| {
        let b = |e: Expr| Box::new(e);
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Add(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Sub(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Mul(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Div(b(x), b(y))),
            inner.clone().prop_map(move |x| Expr::Sin(b(x))),
            inner.clone().prop_map(move |x| Expr::Cos(b(x))),
            inner.clone().prop_map(move |x| Expr::Exp(b(x))),
            inner.clone().prop_map(move |x| Expr::Log(b(x))),
            inner.clone().prop_map(move |x| Expr::Sqrt(b(x))),
            (inner, -1.5..1.5f64).prop_map(move |(x, n)| Expr::Pow(b(x), n)),
        ]
    })
}

proptest! {
    #[test]
    fn chain_rule_on_random_expressions(e in expr(), x in -1.5..1.5f64, y in -1.5..1.5f64) {
        let d = e.eval(&Dual::variable(x, 0, 2), &Dual::variable(y, 1, 2));
        let v = e.eval(&x, &y);
        prop_assume!(v.is_finite() && v.abs() < 1e8);
        prop_assert!((d.value() - v).abs() <= 1e-12 * v.abs().max(1.0));
        let fx = cdiff(|t| e.eval(&t, &y), x);
        let fy = cdiff(|t| e.eval(&x, &t), y);
        prop_assert!(close(d.partial(0), fx, 1e-6), "d/dx {} vs {}", d.partial(0), fx);
        prop_assert!(close(d.partial(1), fy, 1e-6), "d/dy {} vs {}", d.partial(1), fy);
    }
}

fn all_models() -> Vec<ModelSpec> {
    vec![models::lv(), models::bruss(3).unwrap(), models::pollu(), models::pkpd(), models::hybrid_control(2.0, 1.0).unwrap()]
}

/// A positive state and parameters within a factor of two of the reference.
fn point(m: &ModelSpec, seed: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let mut s = seed.iter().cycle();
    let u = (0..m.n_states()).map(|_| 0.05 + s.next().unwrap()).collect();
    let p = m.true_params.iter().map(|x| x * (0.5 + s.next().unwrap())).collect();
    let t = m.tspan.0 + (m.tspan.1 - m.tspan.0) * s.next().unwrap();
    (u, p, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn chunked_jacobians_are_bitwise_equal(seed in prop::collection::vec(0.0..1.0f64, 7)) {
        for m in all_models() {
            let (u, p, t) = point(&m, &seed);
            for (wrt, cols) in [(Wrt::State, u.len()), (Wrt::Params, p.len())] {
                let full = jacobian(&m.system, &u, &p, t, wrt, &SeedPlan::full(cols)).unwrap();
                for chunk in [1, 2] {
                    let plan = SeedPlan::new(cols, chunk).unwrap();
                    let part = jacobian(&m.system, &u, &p, t, wrt, &plan).unwrap();
                    prop_assert!(
                        full.iter().zip(&part).all(|(a, b)| a.to_bits() == b.to_bits()),
                        "{} {:?} chunk {}", m.name, wrt, chunk
                    );
                }
            }
        }
    }

    #[test]
    fn tape_vjp_matches_forward_jacobian(seed in prop::collection::vec(0.0..1.0f64, 11), v in prop::collection::vec(-1.0..1.0f64, 20)) {
        for m in all_models() {
            let (u, p, t) = point(&m, &seed);
            let n = u.len();
            let v: Vec<f64> = v.iter().cycle().take(n).copied().collect();
            let (vu, vp) = record(&m.system, &u, &p, t).unwrap().vjp(&v).unwrap();
            for (got, wrt, cols) in [(vu, Wrt::State, n), (vp, Wrt::Params, p.len())] {
                let jac = jacobian(&m.system, &u, &p, t, wrt, &SeedPlan::full(cols)).unwrap();
                for j in 0..cols {
                    let terms: Vec<f64> = (0..n).map(|i| v[i] * jac[i * cols + j]).collect();
                    let exact: f64 = terms.iter().sum();
                    let size = terms.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                    prop_assert!((got[j] - exact).abs() <= 1e-12 * size, "{} {:?} column {}", m.name, wrt, j);
                }
            }
        }
    }
}

#[test]
fn tape_size_is_bounded_by_op_count() {
    for m in all_models() {
        let tape = record(&m.system, &m.u0, &m.true_params, m.tspan.0).unwrap();
        // One leaf per state, parameter and time precedes the recorded ops.
        let leaves = m.n_states() + m.n_params() + 1;
        assert!(tape.op_count() > 0, "{}", m.name);
        assert!(
            tape.node_count() - leaves <= 5 * tape.op_count(),
            "{}: {} nodes for {} ops",
            m.name,
            tape.node_count(),
            tape.op_count()
        );
    }
}

#[test]
fn pollu_tape_reuse_matches_fresh_recording() {
    use rand::{Rng, SeedableRng};
    let m = models::pollu();
    let mut rng = rand::rngs::StdRng::seed_from_u64(17);
    let mut tape = record(&m.system, &m.u0, &m.true_params, 0.0).unwrap();
    assert!(tape.is_branch_free());
    for _ in 0..100 {
        let u: Vec<f64> = (0..m.n_states()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p: Vec<f64> = m.true_params.iter().map(|x| x * rng.gen_range(0.5..1.5)).collect();
        let v: Vec<f64> = (0..m.n_states()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        tape.reuse(&u, &p, 0.0).unwrap();
        let fresh = record(&m.system, &u, &p, 0.0).unwrap();
        assert_eq!(tape.values(), fresh.values());
        assert_eq!(tape.vjp(&v).unwrap(), fresh.vjp(&v).unwrap());
    }
}

#[test]
fn quadrature_error_estimates_are_reliable() {
    type Case = (fn(f64) -> f64, f64, f64, f64);
    let cases: [Case; 20] = [
        (|x| x * x, 0.0, 1.0, 1.0 / 3.0),
        (|x| x.powi(5), -1.0, 2.0, 10.5),
        (f64::exp, 0.0, 1.0, E - 1.0),
        (f64::sin, 0.0, PI, 2.0),
        (f64::cos, 0.0, PI / 2.0, 1.0),
        (|x| 1.0 / (1.0 + x * x), 0.0, 1.0, PI / 4.0),
        (f64::sqrt, 0.0, 1.0, 2.0 / 3.0),
        (f64::ln, 1.0, E, 1.0),
        (|x| 1.0 / x, 1.0, 10.0, 10f64.ln()),
        (|x| x * (-x).exp(), 0.0, 5.0, 1.0 - 6.0 * (-5f64).exp()),
        (|x| (-x).exp(), 0.0, 10.0, 1.0 - (-10f64).exp()),
        (|x| x.sin().powi(2), 0.0, 2.0 * PI, PI),
        (|x| 1.0 / (x + 0.01).sqrt(), 0.0, 1.0, 2.0 * (1.01f64.sqrt() - 0.1)),
        (|x| (x - 0.3).abs(), 0.0, 1.0, 0.29),
        (|x| (10.0 * x).cos(), 0.0, 1.0, 10f64.sin() / 10.0),
        (|x| x * x.sin(), 0.0, PI, PI),
        (|x| 1.0 / (1.0 + 25.0 * x * x), -1.0, 1.0, 0.4 * 5f64.atan()),
        (f64::cbrt, 0.0, 8.0, 12.0),
        (|x| 1.0 / (2.0 + x.cos()), 0.0, 2.0 * PI, 2.0 * PI / 3f64.sqrt()),
        (|x| (1.0 - x * x).max(0.0).sqrt(), -1.0, 1.0, PI / 2.0),
    ];
    let mut bounded = 0;
    for (k, (f, a, b, exact)) in cases.iter().enumerate() {
        let r = adaptive(f, *a, *b, 1e-8, 0.0).unwrap();
        let err = (r.value - exact).abs();
        assert!(err <= 1e-7 * exact.abs().max(1.0), "case {k}: error {err}");
        assert!(err <= 10.0 * r.err_est, "case {k}: error {err:e} vs estimate {:e}", r.err_est);
        if err <= r.err_est {
            bounded += 1;
        }
    }
    assert!(bounded >= 19, "{bounded} of 20 estimates bound the error");
}

proptest! {
    #[test]
    fn quadrature_is_linear(c in prop::collection::vec(-3.0..3.0f64, 4), w in 0.5..8.0f64, lo in -2.0..0.0f64, hi in 0.1..3.0f64) {
        let f = |x: f64| c[0] * x * x + c[1] * (w * x).sin();
        let g = |x: f64| c[2] * (c[3] * x).exp() + 1.0 / (1.0 + x * x);
        let (rtol, atol) = (1e-10, 1e-12);
        let a = adaptive(f, lo, hi, rtol, atol).unwrap();
        let b = adaptive(g, lo, hi, rtol, atol).unwrap();
        let s = adaptive(|x| f(x) + g(x), lo, hi, rtol, atol).unwrap();
        let slack = a.err_est + b.err_est + s.err_est + 1e-13 * (a.value.abs() + b.value.abs());
        prop_assert!((a.value + b.value - s.value).abs() <= slack);
    }
}
