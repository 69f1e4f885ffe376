use std::cell::RefCell;

use super::{check_success, CostSpec, GradientResult, SensError, SensWarning, VjpStrategy};
use crate::forward::{jacobian, SeedPlan, Wrt};
use crate::linalg::matvec_transpose;
use crate::ode::{solve, Direction, Dynamics, IntegratorConfig, OdeProblem, OdeSystem, Solution};
use crate::quadrature::{adaptive_vec, DEFAULT_MAX_SUBDIVISIONS};
use crate::reverse::{record, Tape, TapeError};

/// Tolerances of the gradient quadrature on each segment between data
/// points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadTol {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for QuadTol {
    fn default() -> Self {
        QuadTol { rtol: 1e-8, atol: 1e-10 }
    }
}

/// Vector-Jacobian products of the model right-hand side.
struct Vjp<'a, S> {
    sys: &'a S,
    strategy: VjpStrategy,
    tape: RefCell<Option<Tape>>,
}

impl<'a, S: OdeSystem> Vjp<'a, S> {
    fn new(sys: &'a S, strategy: VjpStrategy) -> Self {
        Vjp { sys, strategy, tape: RefCell::new(None) }
    }

    /// Runs `f` on a tape valid at `(u, p, t)`, re-recording when the
    /// cached one took a different branch.
    fn with_tape<R>(&self, u: &[f64], p: &[f64], t: f64, f: impl FnOnce(&Tape) -> R) -> Option<R> {
        let mut slot = self.tape.borrow_mut();
        let fresh = match slot.as_mut() {
            Some(tape) => match tape.reuse(u, p, t) {
                Ok(()) => false,
                Err(TapeError::BranchChanged { .. }) => true,
                Err(_) => return None,
            },
            None => true,
        };
        if fresh {
            *slot = Some(record(self.sys, u, p, t).ok()?);
        }
        slot.as_ref().map(f)
    }

    fn state_jacobian(&self, u: &[f64], p: &[f64], t: f64) -> Option<Vec<f64>> {
        let n = u.len();
        match self.strategy {
            VjpStrategy::UserJacobianTranspose => {
                let mut j = vec![0.0; n * n];
                self.sys.analytic_jacobian(u, p, &t, &mut j).then_some(j)
            }
            VjpStrategy::ForwardJacobianTranspose => {
                jacobian(self.sys, u, p, t, Wrt::State, &SeedPlan::full(n)).ok()
            }
            VjpStrategy::ReverseTape => self
                .with_tape(u, p, t, |tape| {
                    // Row i of ∂f/∂u is e_iᵀ ∂f/∂u.
                    let mut j = Vec::with_capacity(n * n);
                    let mut e = vec![0.0; n];
                    for i in 0..n {
                        e[i] = 1.0;
                        j.extend(tape.vjp(&e).ok()?.0);
                        e[i] = 0.0;
                    }
                    Some(j)
                })
                .flatten(),
        }
    }

    /// `vᵀ ∂f/∂u`.
    fn state(&self, u: &[f64], p: &[f64], t: f64, v: &[f64]) -> Option<Vec<f64>> {
        let n = u.len();
        match self.strategy {
            VjpStrategy::ReverseTape => {
                self.with_tape(u, p, t, |tape| tape.vjp(v).ok().map(|r| r.0)).flatten()
            }
            _ => self.state_jacobian(u, p, t).map(|j| matvec_transpose(&j, n, n, v)),
        }
    }

    /// `vᵀ ∂f/∂p`.
    fn param(&self, u: &[f64], p: &[f64], t: f64, v: &[f64]) -> Option<Vec<f64>> {
        let (n, np) = (u.len(), p.len());
        match self.strategy {
            VjpStrategy::UserJacobianTranspose => {
                let mut j = vec![0.0; n * np];
                self.sys
                    .analytic_param_jacobian(u, p, t, &mut j)
                    .then(|| matvec_transpose(&j, n, np, v))
            }
            VjpStrategy::ForwardJacobianTranspose => {
                jacobian(self.sys, u, p, t, Wrt::Params, &SeedPlan::full(np))
                    .ok()
                    .map(|j| matvec_transpose(&j, n, np, v))
            }
            VjpStrategy::ReverseTape => {
                self.with_tape(u, p, t, |tape| tape.vjp(v).ok().map(|r| r.1)).flatten()
            }
        }
    }
}

/// The adjoint `μ(s) = λ(tf − s)` on one segment `[lo, hi]` of the forward
/// time axis: `dμ/ds = (∂f/∂u)ᵀ μ` along the stored forward solution.
struct AdjointSystem<'a, S> {
    vjp: &'a Vjp<'a, S>,
    fwd: &'a Solution<f64>,
    p: Vec<f64>,
    tf: f64,
    lo: f64,
    hi: f64,
}

impl<S: OdeSystem> AdjointSystem<'_, S> {
    /// Forward state at `t`, seen from inside the segment.
    fn u_at(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(self.lo, self.hi);
        let u = if t > self.lo { self.fwd.interpolate_left(t) } else { self.fwd.interpolate(t) };
        u.unwrap_or_else(|_| vec![f64::NAN; self.fwd.us[0].len()])
    }
}

impl<S: OdeSystem> Dynamics<f64> for AdjointSystem<'_, S> {
    fn dim(&self) -> usize {
        self.fwd.us[0].len()
    }

    fn rhs(&self, mu: &[f64], _p: &[f64], s: &f64, out: &mut [f64]) {
        let t = self.tf - s;
        let u = self.u_at(t);
        match self.vjp.state(&u, &self.p, t, mu) {
            Some(v) => out.copy_from_slice(&v),
            None => out.fill(f64::NAN),
        }
    }

    fn jacobian(&self, _mu: &[f64], _p: &[f64], s: &f64, jac: &mut [f64]) {
        let n = Dynamics::dim(self);
        let t = self.tf - s;
        let u = self.u_at(t);
        match self.vjp.state_jacobian(&u, &self.p, t) {
            Some(j) => {
                for r in 0..n {
                    for c in 0..n {
                        jac[r * n + c] = j[c * n + r];
                    }
                }
            }
            None => jac.fill(f64::NAN),
        }
    }

    fn depends_on_time(&self) -> bool {
        true
    }

    fn tstops(&self) -> Vec<f64> {
        Vec::new()
    }

    fn n_events(&self) -> usize {
        0
    }

    fn event_direction(&self, _index: usize) -> Direction {
        Direction::Any
    }

    fn event_condition(&self, _index: usize, _u: &[f64], _p: &[f64], _t: &f64) -> f64 {
        0.0
    }

    fn apply_event(&self, _index: usize, _u: &mut [f64], _p: &mut [f64], _t: &f64) {}
}

/// Gradient `dC/dp` by the continuous adjoint method.
///
/// One forward solve stores a dense solution. The adjoint
/// `λ' = −(∂f/∂u)ᵀ λ`, `λ(tf) = 0`, is then integrated backward segment by
/// segment, with `λ` jumping by `∂c/∂u` at each data time, and
/// `dC/dp = ∫ λᵀ ∂f/∂p dt` is evaluated by adaptive Gauss–Kronrod
/// quadrature on the stored forward and adjoint interpolants. The initial
/// state does not depend on `p`, so the boundary term `λ(t0)ᵀ ∂u0/∂p`
/// vanishes.
///
/// Events split segments but add no jump conditions; the result then
/// carries [`SensWarning::AdjointIgnoresEvents`].
pub fn casa_adjoint<S: OdeSystem>(
    prob: &OdeProblem<'_, S, f64>,
    cfg: &IntegratorConfig,
    cost: &CostSpec,
    strategy: VjpStrategy,
    quad: QuadTol,
) -> Result<GradientResult, SensError> {
    let sys = prob.system;
    let (n, np) = (prob.u0.len(), prob.p.len());
    cost.validate(prob.tspan, n)?;
    let vjp = Vjp::new(sys, strategy);
    if strategy == VjpStrategy::UserJacobianTranspose {
        if vjp.state_jacobian(&prob.u0, &prob.p, prob.tspan.0).is_none() {
            return Err(SensError::MissingJacobian("state Jacobian"));
        }
        if np > 0 && vjp.param(&prob.u0, &prob.p, prob.tspan.0, &vec![0.0; n]).is_none() {
            return Err(SensError::MissingJacobian("parameter Jacobian"));
        }
    }
    if strategy == VjpStrategy::ReverseTape {
        record(sys, &prob.u0, &prob.p, prob.tspan.0)?;
    }

    let fwd = solve(prob, cfg)?;
    check_success(&fwd)?;
    let mut stats = fwd.stats;
    let mut n_solves = 1;
    let mut states = Vec::with_capacity(cost.times.len());
    for t in &cost.times {
        states.push(fwd.interpolate(*t)?);
    }
    let total = cost.total(&states);

    let (t0, tf) = prob.tspan;
    let mut cuts: Vec<f64> = cost
        .times
        .iter()
        .copied()
        .chain(fwd.events.iter().map(|e| e.t))
        .chain(sys.tstops())
        .filter(|t| *t > t0 && *t < tf)
        .collect();
    cuts.push(t0);
    cuts.push(tf);
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.dedup();

    let mut lam = vec![0.0; n];
    let jump = |t: f64, lam: &mut [f64]| {
        if let Some(i) = cost.times.iter().position(|x| *x == t) {
            for (l, g) in lam.iter_mut().zip(cost.point_grad(i, &states[i])) {
                *l += g;
            }
        }
    };
    jump(tf, &mut lam);

    let mut grad = vec![0.0; np];
    let mut quad_evals = 0;
    for (segment, w) in cuts.windows(2).enumerate() {
        let (hi, lo) = (w[0], w[1]);
        let (s0, s1) = (tf - hi, tf - lo);
        if s0 < s1 {
            let adj = AdjointSystem {
                vjp: &vjp,
                fwd: &fwd,
                p: fwd.params_at(0.5 * (lo + hi)).to_vec(),
                tf,
                lo,
                hi,
            };
            let aprob = OdeProblem::new(&adj, lam.clone(), Vec::new(), (s0, s1))?;
            let asol = solve(&aprob, cfg)?;
            check_success(&asol)?;
            stats += asol.stats;
            n_solves += 1;
            if np > 0 {
                let integrand = |t: f64, out: &mut [f64]| {
                    let u = adj.u_at(t);
                    let l = asol
                        .interpolate((tf - t).clamp(s0, s1))
                        .unwrap_or_else(|_| vec![f64::NAN; n]);
                    match vjp.param(&u, &adj.p, t, &l) {
                        Some(v) => out.copy_from_slice(&v),
                        None => out.fill(f64::NAN),
                    }
                };
                let r = adaptive_vec(integrand, np, lo, hi, quad.rtol, quad.atol, DEFAULT_MAX_SUBDIVISIONS)
                    .map_err(|source| SensError::Quadrature { segment, source })?;
                quad_evals += r.nevals;
                for (g, v) in grad.iter_mut().zip(&r.value) {
                    *g += v;
                }
            }
            lam = asol.final_state().to_vec();
        }
        jump(lo, &mut lam);
    }

    let mut warnings = Vec::new();
    if sys.n_events() > 0 {
        warnings.push(SensWarning::AdjointIgnoresEvents);
    }
    Ok(GradientResult { grad, cost: total, stats, n_solves, quad_evals, warnings })
}
