use crate::ode::{Direction, OdeSystem};
use crate::scalar::Scalar;

/// Linear control problem `x' = −a`, `y' = b` with `p = [a, b]`. When `x`
/// crosses zero the control is switched off by setting `b` to zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct HybridControl;

impl OdeSystem for HybridControl {
    fn dim(&self) -> usize {
        2
    }

    fn n_params(&self) -> usize {
        2
    }

    fn rhs<T: Scalar>(&self, _u: &[T], p: &[T], _t: &T, du: &mut [T]) {
        du[0] = -p[0].clone();
        du[1] = p[1].clone();
    }

    fn analytic_jacobian<T: Scalar>(&self, _u: &[T], _p: &[T], _t: &T, jac: &mut [T]) -> bool {
        jac.iter_mut().for_each(|j| *j = T::zero());
        true
    }

    fn analytic_param_jacobian(&self, _u: &[f64], _p: &[f64], _t: f64, jac: &mut [f64]) -> bool {
        jac.copy_from_slice(&[-1.0, 0.0, 0.0, 1.0]);
        true
    }

    fn depends_on_time(&self) -> bool {
        false
    }

    fn n_events(&self) -> usize {
        1
    }

    fn event_direction(&self, _index: usize) -> Direction {
        Direction::Any
    }

    fn event_condition<T: Scalar>(&self, _index: usize, u: &[T], _p: &[T], _t: &T) -> T {
        u[0].clone()
    }

    fn apply_event<T: Scalar>(&self, _index: usize, _u: &mut [T], p: &mut [T], _t: &T) {
        p[1] = T::zero();
    }

    fn events_depend_on_params(&self) -> bool {
        true
    }
}

/// Closed-form state `[x, y]` at time `t` from `(x, y)(0) = (1, 0)`.
pub fn hybrid_solution(a: f64, b: f64, t: f64) -> [f64; 2] {
    let t_star = 1.0 / a;
    let y = if t < t_star { b * t } else { b * t_star };
    [1.0 - a * t, y]
}

/// Closed-form sensitivities `[∂x/∂a, ∂y/∂a, ∂x/∂b, ∂y/∂b]` at time `t`.
pub fn hybrid_sensitivities(a: f64, b: f64, t: f64) -> [f64; 4] {
    let t_star = 1.0 / a;
    if t < t_star {
        [-t, 0.0, 0.0, t]
    } else {
        [-t, -b / (a * a), 0.0, 1.0 / a]
    }
}
