//! Forward-mode automatic differentiation.
//!
//! [`Dual`] carries a value and a vector of partial derivatives whose width
//! is chosen per differentiation call. A dual with an empty partials vector
//! is a constant and mixes with duals of any width; two non-empty vectors of
//! different widths may not be combined.
//!
//! [`jvp`] and [`jacobian`] evaluate an [`OdeSystem`] right-hand side on
//! seeded duals to obtain Jacobian actions and full Jacobians.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Range, Sub};

use thiserror::Error;

use crate::ode::OdeSystem;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("partials width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("division by a dual with zero value")]
    DivisionByZero,
    #[error("{op} is undefined at {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid seed plan: {0}")]
    SeedPlan(String),
    #[error("right-hand side produced a non-finite value in output {index}")]
    NonFinite { index: usize },
}

/// Set when `abs` was differentiated at exactly zero.
pub const FLAG_ABS_AT_ZERO: u8 = 1;

/// `d · x` for a local derivative `d` and a tangent component `x`. A zero
/// component stays zero even where `d` is infinite, as for `√u` or `u^γ`
/// with `γ < 1` at `u = 0` along a direction that does not move `u`.
#[inline]
fn tangent(d: f64, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        d * x
    }
}

/// A value together with partial derivatives.
#[derive(Clone, Default)]
pub struct Dual {
    value: f64,
    partials: Vec<f64>,
    flags: u8,
}

impl Dual {
    pub fn new(value: f64, partials: Vec<f64>) -> Self {
        Dual { value, partials, flags: 0 }
    }

    /// A constant; combines with duals of any width.
    pub fn constant(value: f64) -> Self {
        Dual { value, partials: Vec::new(), flags: 0 }
    }

    /// A variable seeded with a one-hot partial at `index` out of `width`.
    pub fn variable(value: f64, index: usize, width: usize) -> Self {
        let mut partials = vec![0.0; width];
        partials[index] = 1.0;
        Dual { value, partials, flags: 0 }
    }

    pub fn width(&self) -> usize {
        self.partials.len()
    }

    /// Partial `i`, reading zero for constants.
    pub fn partial(&self, i: usize) -> f64 {
        self.partials.get(i).copied().unwrap_or(0.0)
    }

    /// Diagnostic flags accumulated through the expression (see
    /// [`FLAG_ABS_AT_ZERO`]).
    pub fn flags(&self) -> u8 {
        self.flags
    }

    pub fn hit_nondifferentiable_point(&self) -> bool {
        self.flags & FLAG_ABS_AT_ZERO != 0
    }

    fn check_width(&self, other: &Dual) -> Result<(), AdError> {
        if !self.partials.is_empty()
            && !other.partials.is_empty()
            && self.partials.len() != other.partials.len()
        {
            return Err(AdError::WidthMismatch {
                left: self.partials.len(),
                right: other.partials.len(),
            });
        }
        Ok(())
    }

    /// `value` with partials `da·a + db·b`, reusing `a`'s buffer.
    fn combine(mut a: Dual, da: f64, b: &Dual, db: f64, value: f64) -> Dual {
        if let Err(e) = a.check_width(b) {
            panic!("{e}");
        }
        a.flags |= b.flags;
        a.value = value;
        match (a.partials.is_empty(), b.partials.is_empty()) {
            (true, true) => {}
            (true, false) => {
                a.partials = b.partials.iter().map(|x| tangent(db, *x)).collect();
            }
            (false, true) => a.partials.iter_mut().for_each(|x| *x = tangent(da, *x)),
            (false, false) => {
                for (x, y) in a.partials.iter_mut().zip(&b.partials) {
                    *x = tangent(da, *x) + tangent(db, *y);
                }
            }
        }
        a
    }

    fn scale(mut self, value: f64, d: f64) -> Dual {
        self.value = value;
        self.partials.iter_mut().for_each(|x| *x = tangent(d, *x));
        self
    }

    fn mul_dual(a: Dual, b: &Dual) -> Dual {
        let (av, bv) = (a.value, b.value);
        Dual::combine(a, bv, b, av, av * bv)
    }

    fn div_dual(a: Dual, b: &Dual) -> Dual {
        let v = a.value / b.value;
        let inv = 1.0 / b.value;
        Dual::combine(a, inv, b, -v * inv, v)
    }
}

impl fmt::Debug for Dual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dual({}, {:?})", self.value, self.partials)
    }
}

impl From<f64> for Dual {
    fn from(v: f64) -> Self {
        Dual::constant(v)
    }
}

// Comparisons look at values only so that solver control flow does not
// depend on the derivative payload.
impl PartialEq for Dual {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl PartialOrd for Dual {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl Add<&Dual> for Dual {
    type Output = Dual;
    fn add(self, rhs: &Dual) -> Dual {
        let v = self.value + rhs.value;
        Dual::combine(self, 1.0, rhs, 1.0, v)
    }
}

impl Sub<&Dual> for Dual {
    type Output = Dual;
    fn sub(self, rhs: &Dual) -> Dual {
        let v = self.value - rhs.value;
        Dual::combine(self, 1.0, rhs, -1.0, v)
    }
}

impl Mul<&Dual> for Dual {
    type Output = Dual;
    fn mul(self, rhs: &Dual) -> Dual {
        Dual::mul_dual(self, rhs)
    }
}

impl Div<&Dual> for Dual {
    type Output = Dual;
    fn div(self, rhs: &Dual) -> Dual {
        Dual::div_dual(self, rhs)
    }
}

macro_rules! owned_rhs {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<Dual> for Dual {
            type Output = Dual;
            #[inline]
            fn $m(self, rhs: Dual) -> Dual {
                $tr::<&Dual>::$m(self, &rhs)
            }
        }
        impl<'a> $tr<&'a Dual> for &'a Dual {
            type Output = Dual;
            #[inline]
            fn $m(self, rhs: &'a Dual) -> Dual {
                $tr::<&Dual>::$m(self.clone(), rhs)
            }
        }
    )*};
}
owned_rhs!(Add add, Sub sub, Mul mul, Div div);

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(mut self, rhs: f64) -> Dual {
        self.value += rhs;
        self
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(mut self, rhs: f64) -> Dual {
        self.value -= rhs;
        self
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, rhs: f64) -> Dual {
        let v = self.value * rhs;
        self.scale(v, rhs)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    fn div(mut self, rhs: f64) -> Dual {
        self.value /= rhs;
        self.partials.iter_mut().for_each(|x| *x /= rhs);
        self
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(mut self) -> Dual {
        self.value = -self.value;
        self.partials.iter_mut().for_each(|x| *x = -*x);
        self
    }
}

impl Scalar for Dual {
    #[inline]
    fn value(&self) -> f64 {
        self.value
    }

    fn partials(&self) -> &[f64] {
        &self.partials
    }

    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.clone().scale(e, e)
    }

    fn ln(&self) -> Self {
        self.clone().scale(self.value.ln(), 1.0 / self.value)
    }

    fn sin(&self) -> Self {
        self.clone().scale(self.value.sin(), self.value.cos())
    }

    fn cos(&self) -> Self {
        self.clone().scale(self.value.cos(), -self.value.sin())
    }

    fn sqrt(&self) -> Self {
        let s = self.value.sqrt();
        self.clone().scale(s, 0.5 / s)
    }

    fn abs(&self) -> Self {
        if self.value == 0.0 {
            let mut out = self.clone().scale(0.0, 0.0);
            out.flags |= FLAG_ABS_AT_ZERO;
            out
        } else {
            self.clone().scale(self.value.abs(), self.value.signum())
        }
    }

    fn powf(&self, n: f64) -> Self {
        let d = if n == 0.0 { 0.0 } else { n * self.value.powf(n - 1.0) };
        self.clone().scale(self.value.powf(n), d)
    }

    fn powv(&self, e: &Self) -> Self {
        let v = self.value.powf(e.value);
        let d_base = if e.value == 0.0 { 0.0 } else { e.value * self.value.powf(e.value - 1.0) };
        let d_exp = if self.value > 0.0 { v * self.value.ln() } else { 0.0 };
        Dual::combine(self.clone(), d_base, e, d_exp, v)
    }

    fn custom(&self, _name: &'static str, f: fn(f64) -> f64, deriv: Option<fn(f64) -> f64>) -> Self {
        let d = deriv.map_or(f64::NAN, |df| df(self.value));
        self.clone().scale(f(self.value), d)
    }

    fn is_exact_zero(&self) -> bool {
        self.value == 0.0 && self.partials.iter().all(|x| *x == 0.0)
    }

    /// Values come from an exact forward sweep on the primal point, so they
    /// equal what an `f64` solve sees; partials of the entries come from
    /// forward differences in dual arithmetic.
    fn fallback_jacobian<S: OdeSystem + ?Sized>(
        sys: &S,
        u: &[Self],
        p: &[Self],
        t: &Self,
        jac: &mut [Self],
    ) {
        crate::scalar::finite_difference_jacobian(sys, u, p, t, jac);
        let uv: Vec<f64> = u.iter().map(|x| x.value).collect();
        let pv: Vec<f64> = p.iter().map(|x| x.value).collect();
        let mut exact = vec![0.0; jac.len()];
        f64::fallback_jacobian(sys, &uv, &pv, &t.value, &mut exact);
        for (d, v) in jac.iter_mut().zip(exact) {
            d.value = v;
        }
    }
}

/// Binary arithmetic operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Unary elementary functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementary {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Pow(f64),
    Abs,
}

/// Checked binary operation: width mismatch and division by a zero value
/// are reported instead of panicking or producing infinities.
pub fn dual_arith(a: &Dual, b: &Dual, op: ArithOp) -> Result<Dual, AdError> {
    a.check_width(b)?;
    Ok(match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
        ArithOp::Div => {
            if b.value == 0.0 {
                return Err(AdError::DivisionByZero);
            }
            a / b
        }
    })
}

/// Checked elementary function. `abs` at zero succeeds with derivative zero
/// and sets [`FLAG_ABS_AT_ZERO`].
pub fn dual_elementary(a: &Dual, f: Elementary) -> Result<Dual, AdError> {
    Ok(match f {
        Elementary::Exp => a.exp(),
        Elementary::Log => {
            if a.value <= 0.0 {
                return Err(AdError::Domain { op: "log", value: a.value });
            }
            a.ln()
        }
        Elementary::Sin => a.sin(),
        Elementary::Cos => a.cos(),
        Elementary::Sqrt => {
            if a.value < 0.0 {
                return Err(AdError::Domain { op: "sqrt", value: a.value });
            }
            a.sqrt()
        }
        Elementary::Pow(n) => {
            if a.value < 0.0 && n.fract() != 0.0 {
                return Err(AdError::Domain { op: "pow", value: a.value });
            }
            a.powf(n)
        }
        Elementary::Abs => a.abs(),
    })
}

/// Splits `total_params` differentiation columns into chunks of at most
/// `chunk_size`, so that dual width (and memory) is bounded by the chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlan {
    total_params: usize,
    chunk_size: usize,
    chunk_index: usize,
}

impl SeedPlan {
    pub fn new(total_params: usize, chunk_size: usize) -> Result<Self, AdError> {
        Self::at(total_params, chunk_size, 0)
    }

    pub fn at(total_params: usize, chunk_size: usize, chunk_index: usize) -> Result<Self, AdError> {
        if total_params == 0 {
            return Err(AdError::SeedPlan("no columns to seed".into()));
        }
        if chunk_size == 0 || chunk_size > total_params {
            return Err(AdError::SeedPlan(format!(
                "chunk size {chunk_size} must lie in 1..={total_params}"
            )));
        }
        if chunk_index * chunk_size >= total_params {
            return Err(AdError::SeedPlan(format!(
                "chunk {chunk_index} starts past the last column"
            )));
        }
        Ok(SeedPlan { total_params, chunk_size, chunk_index })
    }

    /// A single chunk covering every column.
    pub fn full(total_params: usize) -> Self {
        SeedPlan { total_params, chunk_size: total_params.max(1), chunk_index: 0 }
    }

    pub fn total_params(&self) -> usize {
        self.total_params
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn chunk_index(&self) -> usize {
        self.chunk_index
    }

    pub fn n_chunks(&self) -> usize {
        self.total_params.div_ceil(self.chunk_size)
    }

    /// Columns covered by this plan's chunk.
    pub fn columns(&self) -> Range<usize> {
        let start = self.chunk_index * self.chunk_size;
        start..(start + self.chunk_size).min(self.total_params)
    }

    /// Every chunk of the plan, in order.
    pub fn chunks(&self) -> impl Iterator<Item = SeedPlan> + '_ {
        (0..self.n_chunks()).map(move |chunk_index| SeedPlan { chunk_index, ..*self })
    }
}

/// What a Jacobian is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrt {
    State,
    Params,
}

/// Evaluates `f` once on duals of width `width`, with seeds written by the
/// two closures, and returns `(values, partials)` where partials are
/// row-major `n × width`.
pub fn push_forward<S, FU, FP>(
    sys: &S,
    u: &[f64],
    p: &[f64],
    t: f64,
    width: usize,
    seed_u: FU,
    seed_p: FP,
) -> Result<(Vec<f64>, Vec<f64>), AdError>
where
    S: OdeSystem + ?Sized,
    FU: Fn(usize, &mut [f64]) -> bool,
    FP: Fn(usize, &mut [f64]) -> bool,
{
    let n = sys.dim();
    check_dim(n, u.len())?;
    check_dim(sys.n_params(), p.len())?;
    let seed = |vals: &[f64], f: &dyn Fn(usize, &mut [f64]) -> bool| -> Vec<Dual> {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut buf = vec![0.0; width];
                if f(i, &mut buf) {
                    Dual::new(v, buf)
                } else {
                    Dual::constant(v)
                }
            })
            .collect()
    };
    let ud = seed(u, &seed_u);
    let pd = seed(p, &seed_p);
    let mut out = vec![Dual::zero(); n];
    sys.rhs(&ud, &pd, &Dual::constant(t), &mut out);
    let mut values = Vec::with_capacity(n);
    let mut partials = vec![0.0; n * width];
    for (i, d) in out.iter().enumerate() {
        if !d.value.is_finite() || d.partials.iter().any(|x| !x.is_finite()) {
            return Err(AdError::NonFinite { index: i });
        }
        values.push(d.value);
        for k in 0..width {
            partials[i * width + k] = d.partial(k);
        }
    }
    Ok((values, partials))
}

fn check_dim(expected: usize, got: usize) -> Result<(), AdError> {
    if expected != got {
        return Err(AdError::Dimension { expected, got });
    }
    Ok(())
}

/// `(∂f/∂u)·v` from one seeded evaluation.
pub fn jvp<S: OdeSystem + ?Sized>(
    sys: &S,
    u: &[f64],
    p: &[f64],
    t: f64,
    v: &[f64],
) -> Result<Vec<f64>, AdError> {
    check_dim(u.len(), v.len())?;
    let (_, d) = push_forward(
        sys,
        u,
        p,
        t,
        1,
        |i, buf| {
            buf[0] = v[i];
            true
        },
        |_, _| false,
    )?;
    Ok(d)
}

/// Full `∂f/∂u` (`n × n`) or `∂f/∂p` (`n × n_params`), row-major, assembled
/// from one seeded sweep per chunk of `plan`.
pub fn jacobian<S: OdeSystem + ?Sized>(
    sys: &S,
    u: &[f64],
    p: &[f64],
    t: f64,
    wrt: Wrt,
    plan: &SeedPlan,
) -> Result<Vec<f64>, AdError> {
    let n = sys.dim();
    let cols = match wrt {
        Wrt::State => n,
        Wrt::Params => sys.n_params(),
    };
    check_dim(cols, plan.total_params())?;
    let mut jac = vec![0.0; n * cols];
    for chunk in plan.chunks() {
        let range = chunk.columns();
        let width = range.len();
        // Columns outside the chunk are zero-tangent duals rather than
        // constants so every chunk takes the same arithmetic paths.
        let seed = |i: usize, buf: &mut [f64]| {
            if range.contains(&i) {
                buf[i - range.start] = 1.0;
            }
            true
        };
        let none = |_: usize, _: &mut [f64]| false;
        let (_, d) = match wrt {
            Wrt::State => push_forward(sys, u, p, t, width, seed, none)?,
            Wrt::Params => push_forward(sys, u, p, t, width, none, seed)?,
        };
        for i in 0..n {
            for (k, j) in range.clone().enumerate() {
                jac[i * cols + j] = d[i * width + k];
            }
        }
    }
    Ok(jac)
}
