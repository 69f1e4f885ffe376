//! Parameter estimation: noiseless data from a model's reference
//! parameters, an L² loss, and BFGS driven by any sensitivity method.

mod bfgs;

use thiserror::Error;

use crate::models::ModelSpec;
use std::cell::RefCell;

use crate::ode::{solve, IntegratorConfig, OdeError, OdeProblem, OdeSystem, Stats};
use crate::sensitivity::{loss_gradient, CostSpec, SensError, SensitivityMethod};

pub use bfgs::{bfgs, BfgsOptions, OptResult};

/// Tolerance of the solves that generate data.
pub const DATA_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Sens(#[from] SensError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub times: Vec<f64>,
    /// One row of states per time.
    pub observations: Vec<Vec<f64>>,
    pub source_params: Vec<f64>,
}

impl Dataset {
    pub fn cost(&self) -> Result<CostSpec, SensError> {
        CostSpec::l2(self.times.clone(), self.observations.clone())
    }
}

/// `n` evenly spaced points of `[a, b]`, both ends included.
pub fn even_times(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    ts[n - 1] = b;
    ts
}

/// Observations at `n_points` evenly spaced times over the model's span,
/// taken from a tight-tolerance solve at the model's reference parameters.
pub fn generate_data(model: &ModelSpec, n_points: usize) -> Result<Dataset, EstimationError> {
    generate_data_at(model, &model.true_params, n_points)
}

/// [`generate_data`] with data produced by the parameters `p`.
pub fn generate_data_at(
    model: &ModelSpec,
    p: &[f64],
    n_points: usize,
) -> Result<Dataset, EstimationError> {
    if n_points < 2 {
        return Err(EstimationError::Data(format!("need at least 2 data points, got {n_points}")));
    }
    let prob = OdeProblem::new(&model.system, model.u0.clone(), p.to_vec(), model.tspan)?;
    let sol = solve(&prob, &IntegratorConfig::new(model.method, DATA_TOL))?;
    if !sol.retcode.is_success() {
        return Err(EstimationError::Data(format!(
            "data solve stopped at t = {} ({})",
            sol.tf(),
            sol.retcode.as_str()
        )));
    }
    let times = even_times(model.tspan.0, model.tspan.1, n_points);
    let observations = times.iter().map(|t| sol.interpolate(*t)).collect::<Result<_, _>>()?;
    Ok(Dataset { times, observations, source_params: p.to_vec() })
}

/// `C(p) = Σᵢ ‖u(p, tᵢ) − obsᵢ‖²`, or the reason it could not be computed.
pub fn try_l2_loss(
    model: &ModelSpec,
    p: &[f64],
    data: &Dataset,
    cfg: &IntegratorConfig,
) -> Result<f64, SensError> {
    if p.len() != model.system.n_params() {
        return Err(SensError::Config(format!(
            "{} parameters given, model has {}",
            p.len(),
            model.system.n_params()
        )));
    }
    let cost = data.cost()?;
    cost.validate(model.tspan, model.u0.len())?;
    let prob = OdeProblem::new(&model.system, model.u0.clone(), p.to_vec(), model.tspan)?;
    let sol = solve(&prob, cfg)?;
    if !sol.retcode.is_success() {
        return Err(SensError::Solver { retcode: sol.retcode, t: sol.tf() });
    }
    let states = data.times.iter().map(|t| sol.interpolate(*t)).collect::<Result<Vec<_>, _>>()?;
    Ok(cost.total(&states))
}

/// [`try_l2_loss`] with failures mapped to `+∞`.
pub fn l2_loss(model: &ModelSpec, p: &[f64], data: &Dataset, cfg: &IntegratorConfig) -> f64 {
    try_l2_loss(model, p, data, cfg).unwrap_or(f64::INFINITY)
}

/// Optimiser outcome plus the integrator work spent on gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub opt: OptResult,
    pub stats: Stats,
    pub n_solves: usize,
}

/// Fits the model to `data` from its initial-guess rule, with gradients
/// from `method`.
pub fn estimate(
    model: &ModelSpec,
    method: &SensitivityMethod,
    data: &Dataset,
    cfg: &IntegratorConfig,
) -> Result<Estimate, EstimationError> {
    estimate_from(model, method, data, cfg, &model.initial_guess(), &BfgsOptions::default())
}

/// [`estimate`] from an explicit starting point and optimiser settings.
pub fn estimate_from(
    model: &ModelSpec,
    method: &SensitivityMethod,
    data: &Dataset,
    cfg: &IntegratorConfig,
    p0: &[f64],
    opts: &BfgsOptions,
) -> Result<Estimate, EstimationError> {
    let cost = data.cost()?;
    cost.validate(model.tspan, model.u0.len())?;
    if p0.len() != model.system.n_params() {
        return Err(EstimationError::Data(format!(
            "{} starting parameters, model has {}",
            p0.len(),
            model.system.n_params()
        )));
    }
    // Configuration problems surface here rather than as an infinite cost.
    let prob = OdeProblem::new(&model.system, model.u0.clone(), p0.to_vec(), model.tspan)?;
    loss_gradient(&prob, cfg, &cost, method)?;

    let work = RefCell::new((Stats::default(), 0usize));
    let fg = |p: &[f64]| {
        let prob = OdeProblem { system: &model.system, u0: model.u0.clone(), p: p.to_vec(), tspan: model.tspan };
        match loss_gradient(&prob, cfg, &cost, method) {
            Ok(r) => {
                let mut w = work.borrow_mut();
                w.0 += r.stats;
                w.1 += r.n_solves;
                if r.cost.is_finite() {
                    (r.cost, r.grad)
                } else {
                    (f64::INFINITY, vec![f64::NAN; p.len()])
                }
            }
            Err(_) => (f64::INFINITY, vec![f64::NAN; p.len()]),
        }
    };
    let opt = bfgs(fg, p0, opts);
    let (stats, n_solves) = work.into_inner();
    Ok(Estimate { opt, stats, n_solves })
}
