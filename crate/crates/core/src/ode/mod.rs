//! Adaptive integrators written once over [`Scalar`], so the same code runs
//! on `f64` and on [`Dual`](crate::forward::Dual) states.
//!
//! Two method families are provided: the Tsitouras 5(4) explicit pair with
//! its free fourth-order interpolant ([`Method::Tsit5`]) and the
//! stiffly-accurate Rosenbrock method RODAS4 with third-order dense output
//! ([`Method::Rodas4`]). Both share one driver that handles step control,
//! stop times and event location.

mod driver;
mod events;
mod rodas;
mod solution;
mod tsit5;

use thiserror::Error;

use crate::linalg::Lu;
use crate::scalar::Scalar;

pub use driver::{solve, solve_explicit, solve_stiff};
pub use events::locate_event;
pub use solution::{EventRecord, Retcode, Solution, Stats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("time {t} lies outside the solution interval [{t0}, {tf}]")]
    OutOfRange { t: f64, t0: f64, tf: f64 },
    #[error("event root finding did not converge in [{lo}, {hi}]")]
    EventNonConvergence { lo: f64, hi: f64 },
}

/// Which crossings of an event condition trigger the event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Any,
    Up,
    Down,
}

impl Direction {
    /// Whether the move from `before` to `after` is a crossing this
    /// direction reacts to.
    pub fn crosses(self, before: f64, after: f64) -> bool {
        let up = before < 0.0 && after >= 0.0;
        let down = before > 0.0 && after <= 0.0;
        match self {
            Direction::Any => up || down,
            Direction::Up => up,
            Direction::Down => down,
        }
    }
}

/// A model `u' = f(u, p, t)` written over an abstract scalar, with optional
/// analytic derivatives and events.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn n_params(&self) -> usize;

    fn rhs<T: Scalar>(&self, u: &[T], p: &[T], t: &T, du: &mut [T]);

    /// Fills the row-major `∂f/∂u` and returns true when the model provides
    /// one analytically.
    fn analytic_jacobian<T: Scalar>(&self, _u: &[T], _p: &[T], _t: &T, _jac: &mut [T]) -> bool {
        false
    }

    /// Fills the row-major `∂f/∂p` (`dim × n_params`) and returns true when
    /// the model provides one analytically.
    fn analytic_param_jacobian(&self, _u: &[f64], _p: &[f64], _t: f64, _jac: &mut [f64]) -> bool {
        false
    }

    /// False when `f` has no explicit time dependence apart from jumps
    /// listed in [`OdeSystem::tstops`]; Rosenbrock steps then skip `∂f/∂t`.
    fn depends_on_time(&self) -> bool {
        true
    }

    /// Times the integrator must step onto exactly.
    fn tstops(&self) -> Vec<f64> {
        Vec::new()
    }

    fn n_events(&self) -> usize {
        0
    }

    fn event_direction(&self, _index: usize) -> Direction {
        Direction::Any
    }

    /// Root function `g(u, p, t)` of event `index`.
    fn event_condition<T: Scalar>(&self, _index: usize, _u: &[T], _p: &[T], _t: &T) -> T {
        T::zero()
    }

    /// Effect of event `index`; may change the state and the parameters.
    fn apply_event<T: Scalar>(&self, _index: usize, _u: &mut [T], _p: &mut [T], _t: &T) {}

    /// True when some event's timing or effect depends on the parameters.
    fn events_depend_on_params(&self) -> bool {
        false
    }
}

/// The interface the integrators consume for one scalar type. Every
/// [`OdeSystem`] provides it for every scalar; augmented systems built by
/// the sensitivity module implement it for `f64` only.
pub trait Dynamics<T: Scalar> {
    fn dim(&self) -> usize;
    fn rhs(&self, u: &[T], p: &[T], t: &T, du: &mut [T]);
    /// Row-major `∂f/∂u`.
    fn jacobian(&self, u: &[T], p: &[T], t: &T, jac: &mut [T]);

    /// Factors `shift·I − J`.
    fn factor_w(&self, u: &[T], p: &[T], t: &T, shift: &T) -> Option<Lu<T>> {
        let n = self.dim();
        let mut w = vec![T::zero(); n * n];
        self.jacobian(u, p, t, &mut w);
        for (k, x) in w.iter_mut().enumerate() {
            let neg = -x.clone();
            *x = if k % (n + 1) == 0 { neg + shift } else { neg };
        }
        Lu::factor(n, w).ok()
    }

    /// Solves `(shift·I − J) x = rhs` in place using factors from
    /// [`Dynamics::factor_w`] taken at the same point.
    fn solve_w(&self, w: &Lu<T>, _u: &[T], _p: &[T], _t: &T, rhs: &mut [T]) {
        w.solve(rhs);
    }

    /// Number of leading components that enter the step error norm.
    fn error_dim(&self) -> usize {
        self.dim()
    }

    fn depends_on_time(&self) -> bool;
    fn tstops(&self) -> Vec<f64>;
    fn n_events(&self) -> usize;
    fn event_direction(&self, index: usize) -> Direction;
    fn event_condition(&self, index: usize, u: &[T], p: &[T], t: &T) -> T;
    fn apply_event(&self, index: usize, u: &mut [T], p: &mut [T], t: &T);
}

impl<S: OdeSystem, T: Scalar> Dynamics<T> for S {
    fn dim(&self) -> usize {
        OdeSystem::dim(self)
    }
    fn rhs(&self, u: &[T], p: &[T], t: &T, du: &mut [T]) {
        OdeSystem::rhs(self, u, p, t, du)
    }
    fn jacobian(&self, u: &[T], p: &[T], t: &T, jac: &mut [T]) {
        if !self.analytic_jacobian(u, p, t, jac) {
            T::fallback_jacobian(self, u, p, t, jac);
        }
    }
    fn depends_on_time(&self) -> bool {
        OdeSystem::depends_on_time(self)
    }
    fn tstops(&self) -> Vec<f64> {
        OdeSystem::tstops(self)
    }
    fn n_events(&self) -> usize {
        OdeSystem::n_events(self)
    }
    fn event_direction(&self, index: usize) -> Direction {
        OdeSystem::event_direction(self, index)
    }
    fn event_condition(&self, index: usize, u: &[T], p: &[T], t: &T) -> T {
        OdeSystem::event_condition(self, index, u, p, t)
    }
    fn apply_event(&self, index: usize, u: &mut [T], p: &mut [T], t: &T) {
        OdeSystem::apply_event(self, index, u, p, t)
    }
}

/// Initial value problem: a system, its initial state and parameters, and
/// the time span.
#[derive(Debug, Clone)]
pub struct OdeProblem<'a, D: ?Sized, T> {
    pub system: &'a D,
    pub u0: Vec<T>,
    pub p: Vec<T>,
    pub tspan: (f64, f64),
}

impl<'a, D: ?Sized, T: Scalar> OdeProblem<'a, D, T> {
    pub fn new(system: &'a D, u0: Vec<T>, p: Vec<T>, tspan: (f64, f64)) -> Result<Self, OdeError>
    where
        D: Dynamics<T>,
    {
        if !(tspan.0 < tspan.1) {
            return Err(OdeError::InvalidProblem(format!(
                "time span ({}, {}) must satisfy t0 < tf",
                tspan.0, tspan.1
            )));
        }
        if u0.len() != system.dim() {
            return Err(OdeError::InvalidProblem(format!(
                "initial state has {} entries, system has {}",
                u0.len(),
                system.dim()
            )));
        }
        Ok(OdeProblem { system, u0, p, tspan })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Tsit5,
    Rodas4,
}

impl Method {
    pub fn is_stiff(self) -> bool {
        matches!(self, Method::Rodas4)
    }
}

/// Proportional-integral step size controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    pub beta1: f64,
    pub beta2: f64,
    pub safety: f64,
    /// Smallest allowed ratio of new to old step.
    pub min_factor: f64,
    /// Largest allowed ratio of new to old step.
    pub max_factor: f64,
}

impl PiGains {
    /// Gains for an error estimator of order `q`.
    pub fn for_order(q: usize) -> Self {
        let k = q as f64 + 1.0;
        PiGains { beta1: 0.7 / k, beta2: 0.4 / k, safety: 0.9, min_factor: 0.2, max_factor: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub abstol: f64,
    pub reltol: f64,
    pub dtmin: f64,
    pub dtmax: f64,
    pub max_steps: usize,
    /// `None` picks gains from the method's order.
    pub controller: Option<PiGains>,
    pub method: Method,
    /// Include dual partials in the step error norm.
    pub norm_partials: bool,
    pub dt_init: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            abstol: 1e-6,
            reltol: 1e-6,
            dtmin: 0.0,
            dtmax: f64::INFINITY,
            max_steps: 100_000,
            controller: None,
            method: Method::Tsit5,
            norm_partials: true,
            dt_init: None,
        }
    }
}

impl IntegratorConfig {
    pub fn new(method: Method, tol: f64) -> Self {
        IntegratorConfig { abstol: tol, reltol: tol, method, ..Default::default() }
    }

    pub fn with_tol(mut self, abstol: f64, reltol: f64) -> Self {
        self.abstol = abstol;
        self.reltol = reltol;
        self
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        let bad = |m: String| Err(OdeError::InvalidConfig(m));
        if !(self.abstol > 0.0) {
            return bad(format!("abstol {} must be positive", self.abstol));
        }
        if !(self.reltol > 0.0 && self.reltol < 1.0) {
            return bad(format!("reltol {} must lie in (0, 1)", self.reltol));
        }
        if !(self.dtmin >= 0.0 && self.dtmin < self.dtmax) {
            return bad(format!("need 0 <= dtmin ({}) < dtmax ({})", self.dtmin, self.dtmax));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if let Some(dt) = self.dt_init {
            if !(dt > 0.0) {
                return bad(format!("initial step {dt} must be positive"));
            }
        }
        Ok(())
    }
}

/// Weighted RMS of a step error estimate. With `norm_partials`, dual
/// partials form a second group and the larger of the two group norms is
/// returned, so all-zero partials never change the value-only result.
pub(crate) fn error_norm<T: Scalar>(err: &[T], u0: &[T], u1: &[T], cfg: &IntegratorConfig) -> f64 {
    let (atol, rtol) = (cfg.abstol, cfg.reltol);
    let mut acc = 0.0;
    for ((e, a), b) in err.iter().zip(u0).zip(u1) {
        let sc = atol + rtol * a.value().abs().max(b.value().abs());
        let r = e.value() / sc;
        acc += r * r;
    }
    let value_norm = (acc / err.len().max(1) as f64).sqrt();
    if !cfg.norm_partials {
        return value_norm;
    }
    let mut pacc = 0.0;
    let mut count = 0usize;
    for ((e, a), b) in err.iter().zip(u0).zip(u1) {
        let (pa, pb) = (a.partials(), b.partials());
        for (j, pe) in e.partials().iter().enumerate() {
            let scale = pa.get(j).map_or(0.0, |x| x.abs()).max(pb.get(j).map_or(0.0, |x| x.abs()));
            let r = pe / (atol + rtol * scale);
            pacc += r * r;
            count += 1;
        }
    }
    if count == 0 {
        return value_norm;
    }
    value_norm.max((pacc / count as f64).sqrt())
}
