//! Benchmark models and a registry addressable by name.

mod bruss;
mod hybrid;
mod lv;
mod pkpd;
mod pollu;

use thiserror::Error;

pub use bruss::{bruss_forcing, Brusselator, BRUSS_NODE_PARAMS, FORCING_ON};
pub use hybrid::{hybrid_sensitivities, hybrid_solution, HybridControl};
pub use lv::{LotkaVolterra, LV_PARAMS, LV_U0};
pub use pkpd::{Pkpd, PKPD_PARAMS, PKPD_PARAM_NAMES, PKPD_U0};
pub use pollu::{Pollu, POLLU_PARAMS, POLLU_U0};

use crate::ode::{Direction, Method, OdeSystem};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model `{0}` (expected one of lv, bruss, pollu, pkpd, hybrid)")]
    Unknown(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
}

/// Any of the bundled models behind one type.
#[derive(Debug, Clone)]
pub enum Model {
    Lv(LotkaVolterra),
    Bruss(Brusselator),
    Pollu(Pollu),
    Pkpd(Pkpd),
    Hybrid(HybridControl),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Model::Lv($m) => $e,
            Model::Bruss($m) => $e,
            Model::Pollu($m) => $e,
            Model::Pkpd($m) => $e,
            Model::Hybrid($m) => $e,
        }
    };
}

impl OdeSystem for Model {
    fn dim(&self) -> usize {
        dispatch!(self, m => m.dim())
    }
    fn n_params(&self) -> usize {
        dispatch!(self, m => m.n_params())
    }
    fn rhs<T: Scalar>(&self, u: &[T], p: &[T], t: &T, du: &mut [T]) {
        dispatch!(self, m => m.rhs(u, p, t, du))
    }
    fn analytic_jacobian<T: Scalar>(&self, u: &[T], p: &[T], t: &T, jac: &mut [T]) -> bool {
        dispatch!(self, m => m.analytic_jacobian(u, p, t, jac))
    }
    fn analytic_param_jacobian(&self, u: &[f64], p: &[f64], t: f64, jac: &mut [f64]) -> bool {
        dispatch!(self, m => m.analytic_param_jacobian(u, p, t, jac))
    }
    fn depends_on_time(&self) -> bool {
        dispatch!(self, m => m.depends_on_time())
    }
    fn tstops(&self) -> Vec<f64> {
        dispatch!(self, m => m.tstops())
    }
    fn n_events(&self) -> usize {
        dispatch!(self, m => m.n_events())
    }
    fn event_direction(&self, index: usize) -> Direction {
        dispatch!(self, m => m.event_direction(index))
    }
    fn event_condition<T: Scalar>(&self, index: usize, u: &[T], p: &[T], t: &T) -> T {
        dispatch!(self, m => m.event_condition(index, u, p, t))
    }
    fn apply_event<T: Scalar>(&self, index: usize, u: &mut [T], p: &mut [T], t: &T) {
        dispatch!(self, m => m.apply_event(index, u, p, t))
    }
    fn events_depend_on_params(&self) -> bool {
        dispatch!(self, m => m.events_depend_on_params())
    }
}

/// How the starting point of an estimation is derived from the true
/// parameters: `scale · p + shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuessRule {
    pub scale: f64,
    pub shift: f64,
}

impl GuessRule {
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| self.scale * x + self.shift).collect()
    }
}

/// A model together with its default problem and estimation protocol.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: &'static str,
    pub system: Model,
    pub u0: Vec<f64>,
    pub true_params: Vec<f64>,
    pub tspan: (f64, f64),
    pub method: Method,
    pub n_data_points: usize,
    pub guess: GuessRule,
}

impl ModelSpec {
    pub fn n_states(&self) -> usize {
        self.system.dim()
    }

    pub fn n_params(&self) -> usize {
        self.system.n_params()
    }

    pub fn initial_guess(&self) -> Vec<f64> {
        self.guess.apply(&self.true_params)
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        let n = self.n_states();
        let mut jac = vec![0.0; n * n];
        self.system.analytic_jacobian(&self.u0, &self.true_params, &self.tspan.0, &mut jac)
    }

    pub fn with_tspan(mut self, tspan: (f64, f64)) -> Self {
        self.tspan = tspan;
        self
    }
}

pub fn lv() -> ModelSpec {
    ModelSpec {
        name: "lv",
        system: Model::Lv(LotkaVolterra),
        u0: LV_U0.to_vec(),
        true_params: LV_PARAMS.to_vec(),
        tspan: (0.0, 10.0),
        method: Method::Tsit5,
        n_data_points: 100,
        guess: GuessRule { scale: 0.8, shift: 0.0 },
    }
}

pub fn bruss(n: usize) -> Result<ModelSpec, ModelError> {
    let b = Brusselator::new(n)
        .ok_or_else(|| ModelError::Config(format!("Brusselator grid size {n} must be at least 2")))?;
    Ok(ModelSpec {
        name: "bruss",
        u0: b.initial_state(),
        true_params: b.default_params(),
        system: Model::Bruss(b),
        tspan: (0.0, 10.0),
        method: Method::Rodas4,
        n_data_points: 20,
        guess: GuessRule { scale: 0.9, shift: 0.0 },
    })
}

pub fn pollu() -> ModelSpec {
    ModelSpec {
        name: "pollu",
        system: Model::Pollu(Pollu),
        u0: POLLU_U0.to_vec(),
        true_params: POLLU_PARAMS.to_vec(),
        tspan: (0.0, 60.0),
        method: Method::Rodas4,
        n_data_points: 10,
        guess: GuessRule { scale: 0.9, shift: 0.0 },
    }
}

pub fn pkpd() -> ModelSpec {
    ModelSpec {
        name: "pkpd",
        system: Model::Pkpd(Pkpd::default()),
        u0: PKPD_U0.to_vec(),
        true_params: PKPD_PARAMS.to_vec(),
        tspan: (0.0, 100.0),
        method: Method::Tsit5,
        n_data_points: 41,
        guess: GuessRule { scale: 0.95, shift: 0.001 },
    }
}

pub fn hybrid_control(a: f64, b: f64) -> Result<ModelSpec, ModelError> {
    if !(a > 0.0 && b > 0.0) {
        return Err(ModelError::Config(format!("control parameters must be positive, got a={a}, b={b}")));
    }
    Ok(ModelSpec {
        name: "hybrid",
        system: Model::Hybrid(HybridControl),
        u0: vec![1.0, 0.0],
        true_params: vec![a, b],
        tspan: (0.0, 1.0),
        method: Method::Tsit5,
        n_data_points: 11,
        guess: GuessRule { scale: 0.9, shift: 0.0 },
    })
}

/// Grid size used when the Brusselator is requested by name alone.
pub const DEFAULT_BRUSS_N: usize = 3;

/// Looks a model up by name with its default configuration.
pub fn by_name(name: &str) -> Result<ModelSpec, ModelError> {
    match name {
        "lv" => Ok(lv()),
        "bruss" => bruss(DEFAULT_BRUSS_N),
        "pollu" => Ok(pollu()),
        "pkpd" => Ok(pkpd()),
        "hybrid" => hybrid_control(2.0, 1.0),
        other => Err(ModelError::Unknown(other.to_string())),
    }
}

pub const MODEL_NAMES: [&str; 5] = ["lv", "bruss", "pollu", "pkpd", "hybrid"];
