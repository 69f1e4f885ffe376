use std::cell::RefCell;

use super::{check_success, check_times, JacStrategy, SensError, SensWarning, SensitivityResult};
use crate::forward::{jacobian, push_forward, SeedPlan, Wrt};
use crate::linalg::Lu;
use crate::ode::{solve, Direction, Dynamics, IntegratorConfig, OdeProblem, OdeSystem};

/// State and forward sensitivities `z = [u, s_0, …, s_{P−1}]` with
/// `s_j = ∂u/∂p_j` and `s_j' = (∂f/∂u) s_j + ∂f/∂p_j`.
///
/// Events act on the state block only; the sensitivities pass through
/// unchanged, which is wrong whenever an event time or effect depends on
/// the parameters.
pub struct CsaSystem<'a, S> {
    sys: &'a S,
    n: usize,
    np: usize,
    jac: JacStrategy,
    jacobian_scale: f64,
    states_only_norm: bool,
    /// Sensitivity right-hand side at the last point `W` was factored at.
    cache: RefCell<Option<(Vec<f64>, Vec<f64>)>>,
}

impl<'a, S: OdeSystem> CsaSystem<'a, S> {
    pub fn new(sys: &'a S, jac: JacStrategy) -> Self {
        CsaSystem {
            sys,
            n: sys.dim(),
            np: sys.n_params(),
            jac,
            jacobian_scale: 1.0,
            states_only_norm: false,
            cache: RefCell::new(None),
        }
    }

    /// Multiplies `∂f/∂u` in the sensitivity equations by `scale`. Only
    /// useful to check that a wrong Jacobian is detected.
    pub fn with_jacobian_scale(mut self, scale: f64) -> Self {
        self.jacobian_scale = scale;
        self
    }

    /// Restricts the step error norm to the state block.
    pub fn with_states_only_norm(mut self, on: bool) -> Self {
        self.states_only_norm = on;
        self
    }

    fn state_jacobian(&self, u: &[f64], p: &[f64], t: f64) -> Vec<f64> {
        let n = self.n;
        let mut j = vec![0.0; n * n];
        let ok = match self.jac {
            JacStrategy::User => self.sys.analytic_jacobian(u, p, &t, &mut j),
            JacStrategy::AdFull | JacStrategy::AdJv => {
                match jacobian(self.sys, u, p, t, Wrt::State, &SeedPlan::full(n)) {
                    Ok(m) => {
                        j = m;
                        true
                    }
                    Err(_) => false,
                }
            }
        };
        if !ok {
            j.fill(f64::NAN);
        }
        j
    }

    fn param_jacobian(&self, u: &[f64], p: &[f64], t: f64) -> Vec<f64> {
        let mut j = vec![0.0; self.n * self.np];
        let ok = match self.jac {
            JacStrategy::User => self.sys.analytic_param_jacobian(u, p, t, &mut j),
            JacStrategy::AdFull | JacStrategy::AdJv => {
                match jacobian(self.sys, u, p, t, Wrt::Params, &SeedPlan::full(self.np)) {
                    Ok(m) => {
                        j = m;
                        true
                    }
                    Err(_) => false,
                }
            }
        };
        if !ok {
            j.fill(f64::NAN);
        }
        j
    }

    /// Writes `f(u)` into `f` and the sensitivity right-hand side into `g`.
    fn eval(&self, z: &[f64], p: &[f64], t: f64, f: &mut [f64], g: &mut [f64]) {
        let (n, np) = (self.n, self.np);
        let (u, s) = z.split_at(n);
        if np == 0 {
            self.sys.rhs(u, p, &t, f);
            return;
        }
        match self.jac {
            JacStrategy::User | JacStrategy::AdFull => {
                self.sys.rhs(u, p, &t, f);
                let jm = self.state_jacobian(u, p, t);
                let fp = self.param_jacobian(u, p, t);
                for j in 0..np {
                    let sj = &s[j * n..(j + 1) * n];
                    for i in 0..n {
                        let row = &jm[i * n..(i + 1) * n];
                        let js: f64 = row.iter().zip(sj).map(|(a, b)| a * b).sum();
                        g[j * n + i] = self.jacobian_scale * js + fp[i * np + j];
                    }
                }
            }
            JacStrategy::AdJv => {
                let seeded = push_forward(
                    self.sys,
                    u,
                    p,
                    t,
                    np,
                    |k, buf| {
                        for (j, b) in buf.iter_mut().enumerate() {
                            *b = s[j * n + k];
                        }
                        true
                    },
                    |j, buf| {
                        buf[j] = 1.0;
                        true
                    },
                );
                let Ok((vals, d)) = seeded else {
                    f.fill(f64::NAN);
                    g.fill(f64::NAN);
                    return;
                };
                f.copy_from_slice(&vals);
                for j in 0..np {
                    for i in 0..n {
                        g[j * n + i] = d[i * np + j];
                    }
                }
                if self.jacobian_scale != 1.0 {
                    let fp = self.param_jacobian(u, p, t);
                    for j in 0..np {
                        for i in 0..n {
                            let v = &mut g[j * n + i];
                            *v = self.jacobian_scale * (*v - fp[i * np + j]) + fp[i * np + j];
                        }
                    }
                }
            }
        }
    }

    fn sens_rhs(&self, z: &[f64], p: &[f64], t: f64) -> Vec<f64> {
        let mut f = vec![0.0; self.n];
        let mut g = vec![0.0; self.n * self.np];
        self.eval(z, p, t, &mut f, &mut g);
        g
    }
}

impl<S: OdeSystem> Dynamics<f64> for CsaSystem<'_, S> {
    fn dim(&self) -> usize {
        self.n * (1 + self.np)
    }

    fn rhs(&self, z: &[f64], p: &[f64], t: &f64, dz: &mut [f64]) {
        let (f, g) = dz.split_at_mut(self.n);
        self.eval(z, p, *t, f, g);
    }

    fn jacobian(&self, z: &[f64], p: &[f64], t: &f64, jac: &mut [f64]) {
        // Block lower triangular: ∂f/∂u on the diagonal, the derivative of
        // each sensitivity right-hand side with respect to u in the first
        // block column (by differences).
        let (n, dim) = (self.n, Dynamics::dim(self));
        jac.fill(0.0);
        let jm = self.state_jacobian(&z[..n], p, *t);
        for b in 0..=self.np {
            for i in 0..n {
                for k in 0..n {
                    jac[(b * n + i) * dim + b * n + k] = jm[i * n + k];
                }
            }
        }
        if self.np == 0 {
            return;
        }
        let g0 = self.sens_rhs(z, p, *t);
        let mut zp = z.to_vec();
        for c in 0..n {
            let delta = f64::EPSILON.sqrt() * z[c].abs().max(1.0);
            zp[c] = z[c] + delta;
            let g1 = self.sens_rhs(&zp, p, *t);
            zp[c] = z[c];
            for (r, (a, b)) in g1.iter().zip(&g0).enumerate() {
                jac[(n + r) * dim + c] = (a - b) / delta;
            }
        }
    }

    fn factor_w(&self, z: &[f64], p: &[f64], t: &f64, shift: &f64) -> Option<Lu<f64>> {
        let n = self.n;
        let mut w = self.state_jacobian(&z[..n], p, *t);
        for (k, x) in w.iter_mut().enumerate() {
            *x = if k % (n + 1) == 0 { shift - *x } else { -*x };
        }
        let lu = Lu::factor(n, w).ok()?;
        if self.np > 0 {
            *self.cache.borrow_mut() = Some((z.to_vec(), self.sens_rhs(z, p, *t)));
        }
        Some(lu)
    }

    fn solve_w(&self, w: &Lu<f64>, z: &[f64], p: &[f64], t: &f64, rhs: &mut [f64]) {
        let n = self.n;
        let (x0, rest) = rhs.split_at_mut(n);
        w.solve(x0);
        if self.np == 0 {
            return;
        }
        let xnorm = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if xnorm > 0.0 {
            // Coupling (∂G/∂u) x0 by a directional difference.
            let g0 = {
                let cache = self.cache.borrow();
                match cache.as_ref() {
                    Some((zc, g)) if zc.as_slice() == z => g.clone(),
                    _ => self.sens_rhs(z, p, *t),
                }
            };
            let unorm = z[..n].iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let delta = f64::EPSILON.sqrt() * unorm / xnorm;
            let mut zp = z.to_vec();
            for i in 0..n {
                zp[i] += delta * x0[i];
            }
            let g1 = self.sens_rhs(&zp, p, *t);
            for (r, (a, b)) in g1.iter().zip(&g0).enumerate() {
                rest[r] += (a - b) / delta;
            }
        }
        for j in 0..self.np {
            w.solve(&mut rest[j * n..(j + 1) * n]);
        }
    }

    fn error_dim(&self) -> usize {
        if self.states_only_norm {
            self.n
        } else {
            Dynamics::dim(self)
        }
    }

    fn depends_on_time(&self) -> bool {
        self.sys.depends_on_time()
    }

    fn tstops(&self) -> Vec<f64> {
        self.sys.tstops()
    }

    fn n_events(&self) -> usize {
        self.sys.n_events()
    }

    fn event_direction(&self, index: usize) -> Direction {
        self.sys.event_direction(index)
    }

    fn event_condition(&self, index: usize, z: &[f64], p: &[f64], t: &f64) -> f64 {
        self.sys.event_condition(index, &z[..self.n], p, t)
    }

    fn apply_event(&self, index: usize, z: &mut [f64], p: &mut [f64], t: &f64) {
        self.sys.apply_event(index, &mut z[..self.n], p, t)
    }
}

/// Forward sensitivities from the augmented system of dimension
/// `(1 + P)·N`. With `cfg.norm_partials` off, step control looks at the
/// states only.
pub fn csa_forward<S: OdeSystem>(
    prob: &OdeProblem<'_, S, f64>,
    cfg: &IntegratorConfig,
    out_times: &[f64],
    jac: JacStrategy,
) -> Result<SensitivityResult, SensError> {
    let ext = CsaSystem::new(prob.system, jac).with_states_only_norm(!cfg.norm_partials);
    csa_solve(&ext, prob, cfg, out_times)
}

/// [`csa_forward`] with `∂f/∂u` scaled by `scale` in the sensitivity
/// equations.
pub fn csa_forward_with_jacobian_scale<S: OdeSystem>(
    prob: &OdeProblem<'_, S, f64>,
    cfg: &IntegratorConfig,
    out_times: &[f64],
    jac: JacStrategy,
    scale: f64,
) -> Result<SensitivityResult, SensError> {
    let ext = CsaSystem::new(prob.system, jac)
        .with_states_only_norm(!cfg.norm_partials)
        .with_jacobian_scale(scale);
    csa_solve(&ext, prob, cfg, out_times)
}

fn csa_solve<S: OdeSystem>(
    ext: &CsaSystem<'_, S>,
    prob: &OdeProblem<'_, S, f64>,
    cfg: &IntegratorConfig,
    out_times: &[f64],
) -> Result<SensitivityResult, SensError> {
    check_times(out_times, prob.tspan)?;
    let sys = prob.system;
    let (n, np) = (prob.u0.len(), prob.p.len());
    if ext.jac == JacStrategy::User {
        let mut j = vec![0.0; n * n];
        if !sys.analytic_jacobian(&prob.u0, &prob.p, &prob.tspan.0, &mut j) {
            return Err(SensError::MissingJacobian("state Jacobian"));
        }
        let mut jp = vec![0.0; n * np];
        if np > 0 && !sys.analytic_param_jacobian(&prob.u0, &prob.p, prob.tspan.0, &mut jp) {
            return Err(SensError::MissingJacobian("parameter Jacobian"));
        }
    }
    let mut z0 = prob.u0.clone();
    z0.resize(n * (1 + np), 0.0);
    let eprob = OdeProblem::new(ext, z0, prob.p.clone(), prob.tspan)?;
    let sol = solve(&eprob, cfg)?;
    check_success(&sol)?;

    let mut res = SensitivityResult::zeros(out_times, n, np);
    res.stats = sol.stats;
    res.n_solves = 1;
    if sys.n_events() > 0 {
        res.warnings.push(SensWarning::NaiveCsaUnderEvents);
    }
    for (k, t) in out_times.iter().enumerate() {
        let z = sol.interpolate(*t)?;
        res.states[k] = z[..n].to_vec();
        for j in 0..np {
            for i in 0..n {
                res.sens[k][i * np + j] = z[n + j * n + i];
            }
        }
    }
    Ok(res)
}
