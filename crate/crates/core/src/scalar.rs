//! The abstract scalar that model right-hand sides and the integrators are
//! written against.
//!
//! Three types implement it: `f64`, [`Dual`](crate::forward::Dual) for
//! forward-mode differentiation and [`Var`](crate::reverse::Var) for taping a
//! single right-hand-side call. Comparisons between scalars look at values
//! only, so integrator control flow is the same whichever scalar flows
//! through it.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::ode::OdeSystem;

/// Arithmetic and elementary functions required by generic model code.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + From<f64>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// The primal value.
    fn value(&self) -> f64;

    /// Derivative components carried along with the value. Empty for
    /// scalars that carry none, and for constant duals.
    fn partials(&self) -> &[f64] {
        &[]
    }

    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    /// `self^n` for a constant exponent.
    fn powf(&self, n: f64) -> Self;
    /// `self^e` where the exponent is itself a scalar. The derivative with
    /// respect to the exponent is taken as zero when the base is not positive.
    fn powv(&self, e: &Self) -> Self;

    /// An elementary function outside the built-in set. `deriv` is its
    /// derivative; scalars that need it and find `None` report the op as
    /// unsupported.
    fn custom(&self, name: &'static str, f: fn(f64) -> f64, deriv: Option<fn(f64) -> f64>) -> Self;

    /// True when the scalar is an exact zero, including all partials.
    fn is_exact_zero(&self) -> bool;

    fn zero() -> Self {
        Self::from(0.0)
    }

    fn one() -> Self {
        Self::from(1.0)
    }

    fn square(&self) -> Self {
        self.clone() * self
    }

    /// State Jacobian `∂f/∂u` (row-major, `n × n`) for systems without an
    /// analytic one. The default uses forward differences carried out in
    /// `Self` arithmetic, so partials of the Jacobian entries are retained.
    fn fallback_jacobian<S: OdeSystem + ?Sized>(
        sys: &S,
        u: &[Self],
        p: &[Self],
        t: &Self,
        jac: &mut [Self],
    ) {
        finite_difference_jacobian(sys, u, p, t, jac);
    }
}

pub(crate) fn finite_difference_jacobian<S: OdeSystem + ?Sized, T: Scalar>(
    sys: &S,
    u: &[T],
    p: &[T],
    t: &T,
    jac: &mut [T],
) {
    let n = u.len();
    let mut f0 = vec![T::zero(); n];
    let mut f1 = vec![T::zero(); n];
    sys.rhs(u, p, t, &mut f0);
    let mut up = u.to_vec();
    for j in 0..n {
        let delta = f64::EPSILON.sqrt() * u[j].value().abs().max(1.0);
        up[j] = u[j].clone() + delta;
        sys.rhs(&up, p, t, &mut f1);
        for i in 0..n {
            jac[i * n + j] = (f1[i].clone() - &f0[i]) / delta;
        }
        up[j] = u[j].clone();
    }
}

impl Scalar for f64 {
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    #[inline]
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    #[inline]
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    #[inline]
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    #[inline]
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    #[inline]
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    #[inline]
    fn powf(&self, n: f64) -> Self {
        f64::powf(*self, n)
    }
    #[inline]
    fn powv(&self, e: &Self) -> Self {
        f64::powf(*self, *e)
    }
    fn custom(&self, _name: &'static str, f: fn(f64) -> f64, _deriv: Option<fn(f64) -> f64>) -> Self {
        f(*self)
    }
    #[inline]
    fn is_exact_zero(&self) -> bool {
        *self == 0.0
    }

    fn fallback_jacobian<S: OdeSystem + ?Sized>(
        sys: &S,
        u: &[Self],
        p: &[Self],
        t: &Self,
        jac: &mut [Self],
    ) {
        let n = u.len();
        let plan = crate::forward::SeedPlan::full(n);
        match crate::forward::jacobian(sys, u, p, *t, crate::forward::Wrt::State, &plan) {
            Ok(m) => jac[..n * n].copy_from_slice(&m),
            // A non-finite entry: let the integrator see it and reject the step.
            Err(_) => jac[..n * n].fill(f64::NAN),
        }
    }
}
