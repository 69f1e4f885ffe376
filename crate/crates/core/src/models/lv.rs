use crate::ode::OdeSystem;
use crate::scalar::Scalar;

/// Lotka–Volterra predator–prey system, `p = [α, β, δ]`:
/// `x' = α x − β x y`, `y' = −δ y + x y`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LotkaVolterra;

pub const LV_PARAMS: [f64; 3] = [1.5, 1.0, 3.0];
pub const LV_U0: [f64; 2] = [1.0, 1.0];

impl OdeSystem for LotkaVolterra {
    fn dim(&self) -> usize {
        2
    }

    fn n_params(&self) -> usize {
        3
    }

    fn rhs<T: Scalar>(&self, u: &[T], p: &[T], _t: &T, du: &mut [T]) {
        let xy = u[0].clone() * &u[1];
        du[0] = p[0].clone() * &u[0] - p[1].clone() * &xy;
        du[1] = xy - p[2].clone() * &u[1];
    }

    fn analytic_jacobian<T: Scalar>(&self, u: &[T], p: &[T], _t: &T, jac: &mut [T]) -> bool {
        jac[0] = p[0].clone() - p[1].clone() * &u[1];
        jac[1] = -(p[1].clone() * &u[0]);
        jac[2] = u[1].clone();
        jac[3] = u[0].clone() - &p[2];
        true
    }

    fn analytic_param_jacobian(&self, u: &[f64], _p: &[f64], _t: f64, jac: &mut [f64]) -> bool {
        jac.copy_from_slice(&[u[0], -u[0] * u[1], 0.0, 0.0, 0.0, -u[1]]);
        true
    }

    fn depends_on_time(&self) -> bool {
        false
    }
}
