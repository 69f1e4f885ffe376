//! Sensitivity analysis for ordinary differential equations.
//!
//! The crate provides adaptive integrators that are generic over the scalar
//! type, forward- and reverse-mode differentiation of model right-hand
//! sides, and four ways to obtain parameter sensitivities and cost
//! gradients: differentiating the solver itself with dual numbers, forward
//! sensitivity equations, the adjoint method, and finite differences.

pub mod estimation;
pub mod forward;
pub mod linalg;
pub mod models;
pub mod ode;
pub mod quadrature;
pub mod reverse;
pub mod scalar;
pub mod sensitivity;

pub use forward::Dual;
pub use scalar::Scalar;
