//! Parameter sensitivities `∂u/∂p` of ODE solutions and gradients of
//! data-fit costs.
//!
//! Four strategies are available:
//! - [`dsaad_forward`] runs the integrator itself on [`Dual`](crate::Dual)
//!   parameters.
//! - [`csa_forward`] integrates the state together with its forward
//!   sensitivity equations.
//! - [`casa_adjoint`] solves a backward adjoint problem and integrates the
//!   gradient by quadrature.
//! - [`numdiff`] differences perturbed solves.
//!
//! [`loss_gradient`] turns any of them into `dC/dp` for a [`CostSpec`].

mod casa;
mod cost;
mod csa;
mod dsaad;
mod numdiff;

use std::fmt;

use thiserror::Error;

use crate::forward::AdError;
use crate::ode::{IntegratorConfig, OdeError, OdeProblem, OdeSystem, Retcode, Stats};
use crate::quadrature::QuadError;
use crate::reverse::TapeError;

pub use casa::{casa_adjoint, QuadTol};
pub use cost::{CostSpec, PointCost};
pub use csa::{csa_forward, csa_forward_with_jacobian_scale, CsaSystem};
pub use dsaad::dsaad_forward;
pub use numdiff::{numdiff, numdiff_step};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("solver stopped at t = {t} with retcode {}", retcode.as_str())]
    Solver { retcode: Retcode, t: f64 },
    #[error("quadrature failed on segment {segment}: {source}")]
    Quadrature { segment: usize, source: QuadError },
    #[error("{0}")]
    Config(String),
    #[error("model provides no analytic {0}")]
    MissingJacobian(&'static str),
}

/// How `∂f/∂u · s` is formed in the forward sensitivity equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacStrategy {
    /// The model's analytic Jacobians.
    User,
    /// Full Jacobians from forward-mode AD.
    AdFull,
    /// Directional derivatives seeded with the current sensitivities, so
    /// no Jacobian is formed.
    AdJv,
}

/// How `λᵀ ∂f/∂u` and `λᵀ ∂f/∂p` are formed in the adjoint pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VjpStrategy {
    UserJacobianTranspose,
    ForwardJacobianTranspose,
    ReverseTape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdScheme {
    Forward,
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityMethod {
    /// `chunk` bounds the dual width; `None` seeds every parameter at once.
    Dsaad { chunk: Option<usize> },
    Csa(JacStrategy),
    Casa(VjpStrategy),
    Numdiff(FdScheme),
}

impl SensitivityMethod {
    pub const NAMES: [&'static str; 9] = [
        "dsaad",
        "csa-user",
        "csa-ad-jac",
        "csa-ad-jv",
        "casa-user",
        "casa-ad-jac",
        "casa-ad-vjp",
        "numdiff-forward",
        "numdiff-central",
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        use SensitivityMethod::*;
        Some(match name {
            "dsaad" => Dsaad { chunk: None },
            "csa-user" => Csa(JacStrategy::User),
            "csa-ad-jac" => Csa(JacStrategy::AdFull),
            "csa-ad-jv" => Csa(JacStrategy::AdJv),
            "casa-user" => Casa(VjpStrategy::UserJacobianTranspose),
            "casa-ad-jac" => Casa(VjpStrategy::ForwardJacobianTranspose),
            "casa-ad-vjp" => Casa(VjpStrategy::ReverseTape),
            "numdiff-forward" => Numdiff(FdScheme::Forward),
            "numdiff-central" => Numdiff(FdScheme::Central),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        use SensitivityMethod::*;
        match self {
            Dsaad { .. } => "dsaad",
            Csa(JacStrategy::User) => "csa-user",
            Csa(JacStrategy::AdFull) => "csa-ad-jac",
            Csa(JacStrategy::AdJv) => "csa-ad-jv",
            Casa(VjpStrategy::UserJacobianTranspose) => "casa-user",
            Casa(VjpStrategy::ForwardJacobianTranspose) => "casa-ad-jac",
            Casa(VjpStrategy::ReverseTape) => "casa-ad-vjp",
            Numdiff(FdScheme::Forward) => "numdiff-forward",
            Numdiff(FdScheme::Central) => "numdiff-central",
        }
    }

    /// Adjoint methods yield gradients only, not trajectories.
    pub fn is_adjoint(&self) -> bool {
        matches!(self, SensitivityMethod::Casa(_))
    }

    pub fn needs_analytic_jacobian(&self) -> bool {
        matches!(
            self,
            SensitivityMethod::Csa(JacStrategy::User)
                | SensitivityMethod::Casa(VjpStrategy::UserJacobianTranspose)
        )
    }
}

impl fmt::Display for SensitivityMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensWarning {
    /// Forward sensitivity equations carried unchanged across events.
    NaiveCsaUnderEvents,
    /// Adjoint pass without jump conditions at events.
    AdjointIgnoresEvents,
}

impl fmt::Display for SensWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensWarning::NaiveCsaUnderEvents => "naive-CSA under events is known-incorrect",
            SensWarning::AdjointIgnoresEvents => "adjoint pass ignores event jumps",
        })
    }
}

/// Sensitivities on an output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    pub times: Vec<f64>,
    /// States at `times`.
    pub states: Vec<Vec<f64>>,
    /// `sens[k][i * n_params + j]` is `∂u_i/∂p_j` at `times[k]`.
    pub sens: Vec<Vec<f64>>,
    pub n_states: usize,
    pub n_params: usize,
    /// Integrator work summed over every solve.
    pub stats: Stats,
    pub n_solves: usize,
    /// Parameters whose column could not be computed; filled with NaN.
    pub invalid_columns: Vec<usize>,
    pub warnings: Vec<SensWarning>,
}

impl SensitivityResult {
    pub fn get(&self, k: usize, state: usize, param: usize) -> f64 {
        self.sens[k][state * self.n_params + param]
    }

    /// Sensitivities at output `k` ordered parameter by parameter:
    /// `[∂u_0/∂p_0, ∂u_1/∂p_0, …, ∂u_0/∂p_1, …]`.
    pub fn by_param(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_states * self.n_params);
        for j in 0..self.n_params {
            for i in 0..self.n_states {
                out.push(self.get(k, i, j));
            }
        }
        out
    }

    /// Largest absolute entrywise difference over the whole grid.
    pub fn max_abs_diff(&self, other: &SensitivityResult) -> f64 {
        assert_eq!(self.sens.len(), other.sens.len(), "different output grids");
        self.sens
            .iter()
            .zip(&other.sens)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, |m, d| if d.is_nan() { f64::NAN } else { m.max(d) })
    }

    fn zeros(times: &[f64], n: usize, np: usize) -> Self {
        SensitivityResult {
            times: times.to_vec(),
            states: vec![vec![0.0; n]; times.len()],
            sens: vec![vec![0.0; n * np]; times.len()],
            n_states: n,
            n_params: np,
            stats: Stats::default(),
            n_solves: 0,
            invalid_columns: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    /// `dC/dp`.
    pub grad: Vec<f64>,
    pub cost: f64,
    pub stats: Stats,
    pub n_solves: usize,
    /// Integrand evaluations spent in adjoint quadrature.
    pub quad_evals: usize,
    pub warnings: Vec<SensWarning>,
}

/// Sensitivity trajectories at `out_times` with a forward method.
pub fn sensitivities<S: OdeSystem>(
    prob: &OdeProblem<'_, S, f64>,
    cfg: &IntegratorConfig,
    out_times: &[f64],
    method: &SensitivityMethod,
) -> Result<SensitivityResult, SensError> {
    match *method {
        SensitivityMethod::Dsaad { chunk } => dsaad_forward(prob, cfg, out_times, chunk),
        SensitivityMethod::Csa(jac) => csa_forward(prob, cfg, out_times, jac),
        SensitivityMethod::Numdiff(scheme) => numdiff(prob, cfg, out_times, scheme),
        SensitivityMethod::Casa(_) => Err(SensError::Config(format!(
            "{method} computes gradients only; no sensitivity trajectory is available"
        ))),
    }
}

/// `dC/dp` for the cost `C = Σᵢ c(u(tᵢ))`. Forward methods contract
/// `∂c/∂u` with the sensitivities at the data times; adjoint methods
/// delegate to [`casa_adjoint`] with default quadrature tolerances.
pub fn loss_gradient<S: OdeSystem>(
    prob: &OdeProblem<'_, S, f64>,
    cfg: &IntegratorConfig,
    cost: &CostSpec,
    method: &SensitivityMethod,
) -> Result<GradientResult, SensError> {
    cost.validate(prob.tspan, prob.u0.len())?;
    if let SensitivityMethod::Casa(vjp) = *method {
        return casa_adjoint(prob, cfg, cost, vjp, QuadTol::default());
    }
    let sr = sensitivities(prob, cfg, &cost.times, method)?;
    let np = sr.n_params;
    let mut grad = vec![0.0; np];
    let mut total = 0.0;
    for (k, u) in sr.states.iter().enumerate() {
        total += cost.point_value(k, u);
        let g = cost.point_grad(k, u);
        for (i, gi) in g.iter().enumerate() {
            if *gi == 0.0 {
                continue;
            }
            for (j, dj) in grad.iter_mut().enumerate() {
                *dj += gi * sr.sens[k][i * np + j];
            }
        }
    }
    for &j in &sr.invalid_columns {
        grad[j] = f64::NAN;
    }
    Ok(GradientResult {
        grad,
        cost: total,
        stats: sr.stats,
        n_solves: sr.n_solves,
        quad_evals: 0,
        warnings: sr.warnings,
    })
}

pub(crate) fn check_times(times: &[f64], tspan: (f64, f64)) -> Result<(), SensError> {
    for &t in times {
        if !(t >= tspan.0 && t <= tspan.1) {
            return Err(SensError::Config(format!(
                "output time {t} lies outside [{}, {}]",
                tspan.0, tspan.1
            )));
        }
    }
    Ok(())
}

pub(crate) fn check_success<T: crate::Scalar>(
    sol: &crate::ode::Solution<T>,
) -> Result<(), SensError> {
    if sol.retcode.is_success() {
        Ok(())
    } else {
        Err(SensError::Solver { retcode: sol.retcode, t: sol.tf() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for name in SensitivityMethod::NAMES {
            assert_eq!(SensitivityMethod::from_name(name).unwrap().name(), name);
        }
        assert!(SensitivityMethod::from_name("adjoint").is_none());
    }
}
