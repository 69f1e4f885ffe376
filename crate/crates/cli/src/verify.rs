use std::fs;

use odesens::forward::{jacobian, SeedPlan, Wrt};
use odesens::models::{self, ModelSpec};
use odesens::ode::{solve, IntegratorConfig, Method, OdeProblem, OdeSystem, Solution};
use odesens::reverse::record as record_tape;
use odesens::sensitivity::{
    casa_adjoint, csa_forward_with_jacobian_scale, dsaad_forward, loss_gradient, numdiff, sensitivities,
    CostSpec, FdScheme, JacStrategy, QuadTol, SensError, SensitivityMethod, SensitivityResult, VjpStrategy,
};
use odesens::Scalar;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::VerifyArgs;
use crate::CliError;

/// Jacobian factor applied to CSA under `--inject-fault`.
pub const FAULT_SCALE: f64 = 1.01;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured quantity, compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed: value <= threshold, value, threshold, detail: detail.into() }
    }

    fn failed(name: &str, threshold: f64, why: impl std::fmt::Display) -> Self {
        Check { name: name.into(), passed: false, value: f64::NAN, threshold, detail: why.to_string() }
    }
}

fn check(name: &str, threshold: f64, r: Result<(f64, String), SensError>) -> Check {
    match r {
        Ok((v, detail)) => Check::at_most(name, v, threshold, detail),
        Err(e) => Check::failed(name, threshold, e),
    }
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    max_dev(a, b) / b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE)
}

fn grid(t0: f64, tf: f64, n: usize) -> Vec<f64> {
    odesens::estimation::even_times(t0, tf, n)
}

fn problem(m: &ModelSpec) -> OdeProblem<'_, models::Model, f64> {
    OdeProblem::new(&m.system, m.u0.clone(), m.true_params.clone(), m.tspan).expect("bundled model problem")
}

struct Suite {
    csa_scale: f64,
    rng: StdRng,
    checks: Vec<Check>,
}

impl Suite {
    fn csa(&self, m: &ModelSpec, cfg: &IntegratorConfig, ts: &[f64], jac: JacStrategy) -> Result<SensitivityResult, SensError> {
        let scale = if jac == JacStrategy::User { self.csa_scale } else { 1.0 };
        csa_forward_with_jacobian_scale(&problem(m), cfg, ts, jac, scale)
    }

    fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn hybrid_rows(&mut self) {
        let m = models::hybrid_control(2.0, 1.0).expect("valid control parameters");
        let cfg = IntegratorConfig::new(Method::Tsit5, 1e-8);
        let analytic = models::hybrid_sensitivities(2.0, 1.0, 1.0);
        let d = dsaad_forward(&problem(&m), &cfg, &[1.0], None);
        self.push(check(
            "hybrid_dsaad_row",
            1e-6,
            d.map(|r| (max_dev(&r.by_param(0), &analytic), format!("{:?}", r.by_param(0)))),
        ));
        let c = self.csa(&m, &cfg, &[1.0], JacStrategy::User);
        self.push(check(
            "hybrid_naive_csa_row",
            1e-6,
            c.map(|r| (max_dev(&r.by_param(0), &[-1.0, 0.0, 0.0, 1.0]), format!("{:?}", r.by_param(0)))),
        ));
        let f = numdiff(&problem(&m), &cfg, &[1.0], FdScheme::Central);
        self.push(check(
            "hybrid_numdiff_central_row",
            1e-3,
            f.map(|r| (max_dev(&r.by_param(0), &analytic), format!("{:?}", r.by_param(0)))),
        ));
    }

    fn trajectories(&mut self, m: &ModelSpec, tol: f64) -> Option<(SensitivityResult, SensitivityResult)> {
        let cfg = IntegratorConfig::new(m.method, tol);
        let ts = grid(m.tspan.0, m.tspan.1, 101);
        let name = |s: &str| format!("{}_{s}", m.name);
        let d = dsaad_forward(&problem(m), &cfg, &ts, None);
        let u = self.csa(m, &cfg, &ts, JacStrategy::User);
        let pair = match (&d, &u) {
            (Ok(d), Ok(u)) => {
                self.push(Check::at_most(&name("dsaad_vs_csa_user"), d.max_abs_diff(u), 5e-4, "max-norm over 101 times"));
                Some((d.clone(), u.clone()))
            }
            (Err(e), _) | (_, Err(e)) => {
                self.push(Check::failed(&name("dsaad_vs_csa_user"), 5e-4, e));
                None
            }
        };
        let jv = self.csa(m, &cfg, &ts, JacStrategy::AdJv);
        self.push(check(
            &name("dsaad_vs_csa_ad_jv"),
            5e-4,
            d.clone().and_then(|d| jv.map(|v| (d.max_abs_diff(&v), "max-norm over 101 times".into()))),
        ));
        pair
    }

    fn csa_strategies(&mut self) {
        let m = models::lv();
        let cfg = IntegratorConfig::new(Method::Tsit5, 1e-6);
        let ts = grid(0.0, 10.0, 51);
        let r = (|| {
            let u = self.csa(&m, &cfg, &ts, JacStrategy::User)?;
            let f = self.csa(&m, &cfg, &ts, JacStrategy::AdFull)?;
            let v = self.csa(&m, &cfg, &ts, JacStrategy::AdJv)?;
            let worst = u.max_abs_diff(&f).max(u.max_abs_diff(&v)).max(f.max_abs_diff(&v));
            Ok((worst, "user / ad-jac / ad-jv pairwise".into()))
        })();
        self.push(check("lv_csa_strategies_agree", 1e-8, r));
    }

    fn numdiff_checks(&mut self) {
        let m = models::lv();
        let prob = problem(&m);
        let cfg = IntegratorConfig::new(Method::Tsit5, 1e-8);
        let ts = grid(0.0, 10.0, 101);
        let r = dsaad_forward(&prob, &cfg, &ts, None).and_then(|d| {
            let f = numdiff(&prob, &cfg, &ts, FdScheme::Central)?;
            Ok((d.max_abs_diff(&f), "tol 1e-8".into()))
        });
        self.push(check("lv_numdiff_central_vs_dsaad", 1e-3, r));
        let counts = numdiff(&prob, &cfg, &ts, FdScheme::Forward)
            .and_then(|f| Ok((f.n_solves, numdiff(&prob, &cfg, &ts, FdScheme::Central)?.n_solves)));
        let p = m.n_params();
        self.push(match counts {
            Ok((fw, ce)) => Check::at_most(
                "numdiff_solve_counts",
                ((fw != 1 + p) || (ce != 2 * p)) as u8 as f64,
                0.0,
                format!("forward {fw} (expect {}), central {ce} (expect {})", 1 + p, 2 * p),
            ),
            Err(e) => Check::failed("numdiff_solve_counts", 0.0, e),
        });
    }

    fn initial_sensitivities(&mut self) {
        let m = models::lv();
        let cfg = IntegratorConfig::new(Method::Tsit5, 1e-6);
        let mut worst = 0.0f64;
        for name in ["dsaad", "csa-user", "csa-ad-jac", "csa-ad-jv", "numdiff-forward", "numdiff-central"] {
            let method = SensitivityMethod::from_name(name).expect("registered method");
            match sensitivities(&problem(&m), &cfg, &[0.0, 1.0], &method) {
                Ok(r) => worst = worst.max(r.sens[0].iter().fold(0.0f64, |a, x| a.max(x.abs()))),
                Err(e) => return self.push(Check::failed("lv_zero_sensitivity_at_t0", 1e-12, format!("{name}: {e}"))),
            }
        }
        self.push(Check::at_most("lv_zero_sensitivity_at_t0", worst, 1e-12, "all forward methods"));
    }

    fn gradients(&mut self, m: &ModelSpec, methods: &[&str]) {
        let name = format!("{}_gradients_agree", m.name);
        let cfg = IntegratorConfig::new(m.method, 1e-8);
        let shifted: Vec<f64> = m.true_params.iter().map(|p| 1.1 * p).collect();
        let data = match odesens::estimation::generate_data_at(m, &shifted, m.n_data_points) {
            Ok(d) => d,
            Err(e) => return self.push(Check::failed(&name, 1e-3, e)),
        };
        let r = data.cost().and_then(|cost| {
            let mut grads = Vec::new();
            for n in methods {
                let method = SensitivityMethod::from_name(n).expect("registered method");
                grads.push(loss_gradient(&problem(m), &cfg, &cost, &method)?.grad);
            }
            let mut worst = 0.0f64;
            for a in &grads {
                for b in &grads {
                    worst = worst.max(rel_inf(a, b));
                }
            }
            Ok((worst, methods.join(", ")))
        });
        self.push(check(&name, 1e-3, r));
    }

    fn adjoint_oracle(&mut self) {
        let r = (|| {
            let prob = OdeProblem::new(&Decay, vec![1.0], vec![1.0], (0.0, 1.0))?;
            let cfg = IntegratorConfig::new(Method::Tsit5, 1e-10);
            let cost = CostSpec::linear(vec![1.0], vec![1.0])?;
            let exact = -(-1f64).exp();
            let mut worst = 0.0f64;
            for v in [VjpStrategy::UserJacobianTranspose, VjpStrategy::ForwardJacobianTranspose, VjpStrategy::ReverseTape] {
                let g = casa_adjoint(&prob, &cfg, &cost, v, QuadTol::default())?;
                worst = worst.max((g.grad[0] - exact).abs());
            }
            Ok((worst, "u' = -p u, C = u(1), dC/dp = -1/e".into()))
        })();
        self.push(check("decay_adjoint_oracle", 1e-6, r));
    }

    /// A random point of the reference trajectory with states and
    /// parameters perturbed by up to 10%. Arbitrary states can make stiff
    /// rate terms so large that finite differences are pure rounding.
    fn random_point(&mut self, m: &ModelSpec, sol: &Solution<f64>) -> Result<(Vec<f64>, Vec<f64>, f64), String> {
        let t = self.rng.gen_range(m.tspan.0..m.tspan.1);
        let u = sol.interpolate(t).map_err(|e| e.to_string())?;
        let u = u.iter().map(|x| x * self.rng.gen_range(0.9..1.1)).collect();
        let p = m.true_params.iter().map(|x| x * self.rng.gen_range(0.9..1.1)).collect();
        Ok((u, p, t))
    }

    fn ad_properties(&mut self, specs: &[ModelSpec]) {
        let (mut fd_worst, mut fd_model) = (0.0f64, "");
        let (mut tape_worst, mut tape_model) = (0.0f64, "");
        let mut failure = None;
        for m in specs {
            let sol = match solve(&problem(m), &IntegratorConfig::new(m.method, 1e-6)) {
                Ok(sol) => sol,
                Err(e) => {
                    failure = Some(format!("{}: {e}", m.name));
                    continue;
                }
            };
            for _ in 0..5 {
                let point = self.random_point(m, &sol);
                let v: Vec<f64> = (0..m.n_states()).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
                match point.and_then(|(u, p, t)| ad_point(&m.system, &u, &p, t, &v)) {
                    Ok((fd, tape)) => {
                        if fd >= fd_worst {
                            (fd_worst, fd_model) = (fd, m.name);
                        }
                        if tape >= tape_worst {
                            (tape_worst, tape_model) = (tape, m.name);
                        }
                    }
                    Err(e) => failure = Some(format!("{}: {e}", m.name)),
                }
            }
        }
        let detail = |worst: &str| format!("5 seeded points per model, worst on {worst}");
        match failure {
            Some(e) => {
                self.push(Check::failed("ad_jacobians_vs_central_fd", 1e-6, &e));
                self.push(Check::failed("tape_vjp_vs_forward_jacobian", 1e-12, &e));
            }
            None => {
                self.push(Check::at_most("ad_jacobians_vs_central_fd", fd_worst, 1e-6, detail(fd_model)));
                self.push(Check::at_most("tape_vjp_vs_forward_jacobian", tape_worst, 1e-12, detail(tape_model)));
            }
        }
    }
}

/// `u' = -p u`.
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
    fn analytic_jacobian<T: Scalar>(&self, _u: &[T], p: &[T], _t: &T, jac: &mut [T]) -> bool {
        jac[0] = -p[0].clone();
        true
    }
    fn analytic_param_jacobian(&self, u: &[f64], _p: &[f64], _t: f64, jac: &mut [f64]) -> bool {
        jac[0] = -u[0];
        true
    }
}

/// Worst relative deviation of the dual Jacobians from central differences
/// and of the tape vjp from `vᵀJ`, at one point.
pub fn ad_point<S: OdeSystem>(sys: &S, u: &[f64], p: &[f64], t: f64, v: &[f64]) -> Result<(f64, f64), String> {
    let n = u.len();
    let ju = jacobian(sys, u, p, t, Wrt::State, &SeedPlan::full(n)).map_err(|e| e.to_string())?;
    let jp = jacobian(sys, u, p, t, Wrt::Params, &SeedPlan::full(p.len())).map_err(|e| e.to_string())?;
    let f = |u: &[f64], p: &[f64]| {
        let mut du = vec![0.0; n];
        sys.rhs(u, p, &t, &mut du);
        du
    };
    let fd_col = |x: &[f64], j: usize, wrt_u: bool| {
        let h = f64::EPSILON.cbrt() * x[j].abs().max(1.0);
        let (mut a, mut b) = (x.to_vec(), x.to_vec());
        a[j] += h;
        b[j] -= h;
        let (fa, fb) = if wrt_u { (f(&a, p), f(&b, p)) } else { (f(u, &a), f(u, &b)) };
        fa.iter().zip(&fb).map(|(x, y)| (x - y) / (2.0 * h)).collect::<Vec<f64>>()
    };
    let mut fd = 0.0f64;
    for (jac, x, wrt_u) in [(&ju, u, true), (&jp, p, false)] {
        let cols = x.len();
        for j in 0..cols {
            let col = fd_col(x, j, wrt_u);
            for i in 0..n {
                // Entries are compared on the scale of their row, since
                // differences of large terms cancel to rounding level.
                let row = (0..cols).fold(0.0f64, |m, k| m.max(jac[i * cols + k].abs()));
                let ad = jac[i * cols + j];
                fd = fd.max((ad - col[i]).abs() / row.max(f64::MIN_POSITIVE));
            }
        }
    }
    let tape = record_tape(sys, u, p, t).map_err(|e| e.to_string())?;
    let (vu, vp) = tape.vjp(v).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (got, jac, cols) in [(&vu, &ju, n), (&vp, &jp, p.len())] {
        for j in 0..cols {
            let terms: Vec<f64> = (0..n).map(|i| v[i] * jac[i * cols + j]).collect();
            let exact: f64 = terms.iter().sum();
            let size = terms.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if size > 0.0 {
                worst = worst.max((got[j] - exact).abs() / size);
            } else if got[j] != 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    Ok((fd, worst))
}

fn trace(r: &SensitivityResult, k: usize, node_params: std::ops::Range<usize>) -> Value {
    let series = |i: usize| -> Vec<Value> {
        node_params.clone().map(|j| json!((0..r.times.len()).map(|t| r.get(t, i, j)).collect::<Vec<_>>())).collect()
    };
    json!({
        "u": r.states.iter().map(|s| s[2 * k]).collect::<Vec<_>>(),
        "v": r.states.iter().map(|s| s[2 * k + 1]).collect::<Vec<_>>(),
        "du_dp": series(2 * k),
        "dv_dp": series(2 * k + 1),
    })
}

/// Runs every check and returns them with the BRUSS(3) grid-point (1,1)
/// traces.
pub fn suite(seed: u64, inject_fault: bool) -> (Vec<Check>, Value) {
    let mut s = Suite {
        csa_scale: if inject_fault { FAULT_SCALE } else { 1.0 },
        rng: StdRng::seed_from_u64(seed),
        checks: Vec::new(),
    };
    s.hybrid_rows();
    let lv = models::lv();
    s.trajectories(&lv, 1e-6);
    let bruss = models::bruss(3).expect("grid size 3");
    let traces = match s.trajectories(&bruss, 1e-6) {
        Some((d, c)) => {
            // Node (1,1) of the 3×3 grid.
            let k = 3 + 1;
            json!({
                "grid_point": [1, 1],
                "params": ["p1", "p2", "p3", "p4"],
                "times": d.times,
                "dsaad": trace(&d, k, 4 * k..4 * k + 4),
                "csa_user": trace(&c, k, 4 * k..4 * k + 4),
            })
        }
        None => Value::Null,
    };
    s.csa_strategies();
    s.numdiff_checks();
    s.initial_sensitivities();
    let all: Vec<&str> = SensitivityMethod::NAMES.iter().copied().filter(|n| *n != "numdiff-forward").collect();
    s.gradients(&lv, &all);
    s.gradients(&bruss, &["dsaad", "csa-user", "csa-ad-jv", "casa-user", "casa-ad-vjp", "numdiff-central"]);
    s.adjoint_oracle();
    let specs = [
        lv,
        bruss,
        models::pollu(),
        models::pkpd(),
        models::hybrid_control(2.0, 1.0).expect("valid control parameters"),
    ];
    s.ad_properties(&specs);
    (s.checks, traces)
}

pub fn run(a: &VerifyArgs) -> Result<(), CliError> {
    let (checks, traces) = suite(a.output.seed, a.inject_fault);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let report = json!({
        "passed": failed.is_empty(),
        "n_checks": checks.len(),
        "n_passed": checks.len() - failed.len(),
        "failed": failed,
        "seed": a.output.seed,
        "fault_injected": a.inject_fault,
        "checks": checks,
        "traces": traces,
    });
    let out = a.output.out.clone().unwrap_or_else(|| "verify.json".into());
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(&out, text + "\n").map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", out.display())))?;
    for c in &checks {
        eprintln!("{} {} ({:e} vs {:e})", if c.passed { "pass" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("failed checks: {}", failed.join(", "))))
    }
}
