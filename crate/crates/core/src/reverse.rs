//! Tape-based reverse-mode differentiation of a single right-hand-side call.
//!
//! [`record`] evaluates `f(u, p, t)` on [`Var`] scalars, which append one
//! node per operation to a thread-local tape. [`Tape::vjp`] then returns
//! `vᵀ ∂f/∂u` and `vᵀ ∂f/∂p` in one backward sweep. Comparisons between
//! `Var`s are recorded as branch guards so that [`reuse_tape`] can refuse
//! to refresh a tape whose control flow would differ at the new point.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

use crate::ode::OdeSystem;
use crate::scalar::Scalar;

const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("operation `{op}` has no derivative and cannot be recorded")]
    Unsupported { op: &'static str },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("branch guard {guard} changed outcome; the tape must be re-recorded")]
    BranchChanged { guard: usize },
    #[error("a recording is already in progress on this thread")]
    Nested,
}

#[derive(Clone, Copy)]
enum Kind {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Powf(f64),
    Powv,
    Custom(fn(f64) -> f64, Option<fn(f64) -> f64>),
}

impl std::fmt::Debug for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Kind::Input => "input",
            Kind::Const => "const",
            Kind::Add => "add",
            Kind::Sub => "sub",
            Kind::Mul => "mul",
            Kind::Div => "div",
            Kind::Neg => "neg",
            Kind::Exp => "exp",
            Kind::Ln => "ln",
            Kind::Sin => "sin",
            Kind::Cos => "cos",
            Kind::Sqrt => "sqrt",
            Kind::Abs => "abs",
            Kind::Powf(_) => "powf",
            Kind::Powv => "powv",
            Kind::Custom(..) => "custom",
        };
        f.write_str(s)
    }
}

/// Value and local partials of a node given its operand values.
fn eval(kind: Kind, a: f64, b: f64) -> (f64, f64, f64) {
    match kind {
        Kind::Input | Kind::Const => (a, 0.0, 0.0),
        Kind::Add => (a + b, 1.0, 1.0),
        Kind::Sub => (a - b, 1.0, -1.0),
        Kind::Mul => (a * b, b, a),
        Kind::Div => (a / b, 1.0 / b, -(a / b) / b),
        Kind::Neg => (-a, -1.0, 0.0),
        Kind::Exp => {
            let e = a.exp();
            (e, e, 0.0)
        }
        Kind::Ln => (a.ln(), 1.0 / a, 0.0),
        Kind::Sin => (a.sin(), a.cos(), 0.0),
        Kind::Cos => (a.cos(), -a.sin(), 0.0),
        Kind::Sqrt => {
            let s = a.sqrt();
            (s, 0.5 / s, 0.0)
        }
        Kind::Abs => (a.abs(), if a == 0.0 { 0.0 } else { a.signum() }, 0.0),
        Kind::Powf(n) => (a.powf(n), if n == 0.0 { 0.0 } else { n * a.powf(n - 1.0) }, 0.0),
        Kind::Powv => {
            let v = a.powf(b);
            let da = if b == 0.0 { 0.0 } else { b * a.powf(b - 1.0) };
            let db = if a > 0.0 { v * a.ln() } else { 0.0 };
            (v, da, db)
        }
        Kind::Custom(f, df) => (f(a), df.map_or(f64::NAN, |d| d(a)), 0.0),
    }
}

#[derive(Debug, Clone)]
struct Node {
    kind: Kind,
    a: u32,
    b: u32,
    value: f64,
    da: f64,
    db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Operand {
    Node(u32),
    Const(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Ord(Option<Ordering>),
    Eq(bool),
}

#[derive(Debug, Clone)]
struct Guard {
    a: Operand,
    b: Operand,
    outcome: Outcome,
}

#[derive(Default)]
struct Recording {
    nodes: Vec<Node>,
    guards: Vec<Guard>,
    ops: usize,
    unsupported: Option<&'static str>,
}

thread_local! {
    static ACTIVE: RefCell<Option<Recording>> = const { RefCell::new(None) };
}

fn with_rec<R>(f: impl FnOnce(&mut Recording) -> R) -> R {
    ACTIVE.with(|r| {
        let mut r = r.borrow_mut();
        let rec = r.as_mut().expect("Var arithmetic outside of a tape recording");
        f(rec)
    })
}

/// A scalar that records its operations on the active tape. Values made
/// with `From<f64>` are constants and record nothing until combined with a
/// recorded value.
#[derive(Debug, Clone, Copy)]
pub struct Var {
    value: f64,
    idx: u32,
}

impl Var {
    fn constant(value: f64) -> Self {
        Var { value, idx: NONE }
    }

    fn is_const(&self) -> bool {
        self.idx == NONE
    }

    fn operand(&self) -> Operand {
        if self.is_const() {
            Operand::Const(self.value)
        } else {
            Operand::Node(self.idx)
        }
    }

    fn push(rec: &mut Recording, kind: Kind, a: u32, b: u32, value: f64, da: f64, db: f64) -> u32 {
        rec.nodes.push(Node { kind, a, b, value, da, db });
        (rec.nodes.len() - 1) as u32
    }

    fn node_of(rec: &mut Recording, v: &Var) -> u32 {
        if v.is_const() {
            Var::push(rec, Kind::Const, NONE, NONE, v.value, 0.0, 0.0)
        } else {
            v.idx
        }
    }

    fn unary(&self, kind: Kind) -> Var {
        let (value, da, _) = eval(kind, self.value, 0.0);
        if self.is_const() {
            return Var::constant(value);
        }
        with_rec(|rec| {
            rec.ops += 1;
            if let Kind::Custom(_, None) = kind {
                rec.unsupported.get_or_insert("custom");
            }
            let idx = Var::push(rec, kind, self.idx, NONE, value, da, 0.0);
            Var { value, idx }
        })
    }

    fn binary(&self, other: &Var, kind: Kind) -> Var {
        let (value, da, db) = eval(kind, self.value, other.value);
        if self.is_const() && other.is_const() {
            return Var::constant(value);
        }
        with_rec(|rec| {
            rec.ops += 1;
            let a = Var::node_of(rec, self);
            let b = Var::node_of(rec, other);
            let idx = Var::push(rec, kind, a, b, value, da, db);
            Var { value, idx }
        })
    }

    fn guard(&self, other: &Var, outcome: Outcome) {
        if self.is_const() && other.is_const() {
            return;
        }
        ACTIVE.with(|r| {
            if let Some(rec) = r.borrow_mut().as_mut() {
                rec.guards.push(Guard { a: self.operand(), b: other.operand(), outcome });
            }
        });
    }
}

impl From<f64> for Var {
    fn from(v: f64) -> Self {
        Var::constant(v)
    }
}

impl PartialEq for Var {
    fn eq(&self, other: &Self) -> bool {
        let r = self.value == other.value;
        self.guard(other, Outcome::Eq(r));
        r
    }
}

impl PartialOrd for Var {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let r = self.value.partial_cmp(&other.value);
        self.guard(other, Outcome::Ord(r));
        r
    }
}

macro_rules! var_binops {
    ($($tr:ident $m:ident $kind:ident),*) => {$(
        impl $tr<Var> for Var {
            type Output = Var;
            fn $m(self, rhs: Var) -> Var {
                self.binary(&rhs, Kind::$kind)
            }
        }
        impl<'a> $tr<&'a Var> for Var {
            type Output = Var;
            fn $m(self, rhs: &'a Var) -> Var {
                self.binary(rhs, Kind::$kind)
            }
        }
        impl $tr<f64> for Var {
            type Output = Var;
            fn $m(self, rhs: f64) -> Var {
                self.binary(&Var::constant(rhs), Kind::$kind)
            }
        }
    )*};
}

var_binops!(Add add Add, Sub sub Sub, Mul mul Mul, Div div Div);

impl Neg for Var {
    type Output = Var;
    fn neg(self) -> Var {
        self.unary(Kind::Neg)
    }
}

impl Scalar for Var {
    fn value(&self) -> f64 {
        self.value
    }
    fn exp(&self) -> Self {
        self.unary(Kind::Exp)
    }
    fn ln(&self) -> Self {
        self.unary(Kind::Ln)
    }
    fn sin(&self) -> Self {
        self.unary(Kind::Sin)
    }
    fn cos(&self) -> Self {
        self.unary(Kind::Cos)
    }
    fn sqrt(&self) -> Self {
        self.unary(Kind::Sqrt)
    }
    fn abs(&self) -> Self {
        self.unary(Kind::Abs)
    }
    fn powf(&self, n: f64) -> Self {
        self.unary(Kind::Powf(n))
    }
    fn powv(&self, e: &Self) -> Self {
        self.binary(e, Kind::Powv)
    }
    fn custom(&self, name: &'static str, f: fn(f64) -> f64, deriv: Option<fn(f64) -> f64>) -> Self {
        if deriv.is_none() && !self.is_const() {
            with_rec(|rec| {
                rec.unsupported.get_or_insert(name);
            });
        }
        self.unary(Kind::Custom(f, deriv))
    }
    fn is_exact_zero(&self) -> bool {
        self.is_const() && self.value == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Output {
    Node(u32),
    Const(f64),
}

/// A recorded right-hand-side evaluation.
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    n_u: usize,
    n_p: usize,
    outputs: Vec<Output>,
    guards: Vec<Guard>,
    ops: usize,
}

struct ActiveGuard;

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        ACTIVE.with(|r| *r.borrow_mut() = None);
    }
}

/// Records one evaluation of the system's right-hand side at `(u, p, t)`.
pub fn record<S: OdeSystem + ?Sized>(sys: &S, u: &[f64], p: &[f64], t: f64) -> Result<Tape, TapeError> {
    let n = sys.dim();
    if u.len() != n {
        return Err(TapeError::Dimension { expected: n, got: u.len() });
    }
    if p.len() != sys.n_params() {
        return Err(TapeError::Dimension { expected: sys.n_params(), got: p.len() });
    }
    let busy = ACTIVE.with(|r| {
        let mut r = r.borrow_mut();
        if r.is_some() {
            return true;
        }
        *r = Some(Recording::default());
        false
    });
    if busy {
        return Err(TapeError::Nested);
    }
    let _reset = ActiveGuard;
    let inputs: Vec<Var> = with_rec(|rec| {
        u.iter()
            .chain(p)
            .chain(std::iter::once(&t))
            .map(|&v| Var { value: v, idx: Var::push(rec, Kind::Input, NONE, NONE, v, 0.0, 0.0) })
            .collect()
    });
    let (uv, rest) = inputs.split_at(n);
    let (pv, tv) = rest.split_at(p.len());
    let mut out = vec![Var::constant(0.0); n];
    sys.rhs(uv, pv, &tv[0], &mut out);
    let rec = ACTIVE.with(|r| r.borrow_mut().take()).expect("recording vanished");
    if let Some(op) = rec.unsupported {
        return Err(TapeError::Unsupported { op });
    }
    let outputs = out
        .iter()
        .map(|v| if v.is_const() { Output::Const(v.value) } else { Output::Node(v.idx) })
        .collect();
    Ok(Tape { nodes: rec.nodes, n_u: n, n_p: p.len(), outputs, guards: rec.guards, ops: rec.ops })
}

/// Refreshes `tape` at a new point without re-recording its structure.
pub fn reuse_tape(mut tape: Tape, u: &[f64], p: &[f64], t: f64) -> Result<Tape, TapeError> {
    tape.reuse(u, p, t)?;
    Ok(tape)
}

impl Tape {
    /// Output values of the recorded evaluation.
    pub fn values(&self) -> Vec<f64> {
        self.outputs
            .iter()
            .map(|o| match o {
                Output::Node(i) => self.nodes[*i as usize].value,
                Output::Const(c) => *c,
            })
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of scalar operations executed while recording.
    pub fn op_count(&self) -> usize {
        self.ops
    }

    /// True when no value-dependent comparison was recorded.
    pub fn is_branch_free(&self) -> bool {
        self.guards.is_empty()
    }

    fn operand_value(&self, o: Operand) -> f64 {
        match o {
            Operand::Node(i) => self.nodes[i as usize].value,
            Operand::Const(c) => c,
        }
    }

    /// Recomputes values and local partials at `(u, p, t)` in place. Fails
    /// when a recorded comparison would now come out differently; the tape
    /// is then stale and must be recorded again.
    pub fn reuse(&mut self, u: &[f64], p: &[f64], t: f64) -> Result<(), TapeError> {
        if u.len() != self.n_u {
            return Err(TapeError::Dimension { expected: self.n_u, got: u.len() });
        }
        if p.len() != self.n_p {
            return Err(TapeError::Dimension { expected: self.n_p, got: p.len() });
        }
        let mut inputs = u.iter().chain(p).chain(std::iter::once(&t));
        for i in 0..self.nodes.len() {
            let node = &self.nodes[i];
            let (kind, a, b) = (node.kind, node.a, node.b);
            let (value, da, db) = match kind {
                Kind::Input => (*inputs.next().expect("input count is fixed"), 0.0, 0.0),
                Kind::Const => (node.value, 0.0, 0.0),
                _ => {
                    let va = self.nodes[a as usize].value;
                    let vb = if b == NONE { 0.0 } else { self.nodes[b as usize].value };
                    eval(kind, va, vb)
                }
            };
            let node = &mut self.nodes[i];
            node.value = value;
            node.da = da;
            node.db = db;
        }
        for (g, guard) in self.guards.iter().enumerate() {
            let (a, b) = (self.operand_value(guard.a), self.operand_value(guard.b));
            let now = match guard.outcome {
                Outcome::Ord(_) => Outcome::Ord(a.partial_cmp(&b)),
                Outcome::Eq(_) => Outcome::Eq(a == b),
            };
            if now != guard.outcome {
                return Err(TapeError::BranchChanged { guard: g });
            }
        }
        Ok(())
    }

    fn sweep(&self, v: &[f64]) -> Result<Vec<f64>, TapeError> {
        if v.len() != self.outputs.len() {
            return Err(TapeError::Dimension { expected: self.outputs.len(), got: v.len() });
        }
        let mut adj = vec![0.0; self.nodes.len()];
        for (o, w) in self.outputs.iter().zip(v) {
            if let Output::Node(i) = o {
                adj[*i as usize] += w;
            }
        }
        for i in (0..self.nodes.len()).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let node = &self.nodes[i];
            if node.a != NONE {
                adj[node.a as usize] += g * node.da;
            }
            if node.b != NONE {
                adj[node.b as usize] += g * node.db;
            }
        }
        Ok(adj)
    }

    /// `(vᵀ ∂f/∂u, vᵀ ∂f/∂p)` from one backward sweep.
    pub fn vjp(&self, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>), TapeError> {
        let adj = self.sweep(v)?;
        // Inputs are the first n_u + n_p + 1 nodes, in order.
        let vu = adj[..self.n_u].to_vec();
        let vp = adj[self.n_u..self.n_u + self.n_p].to_vec();
        Ok((vu, vp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Product;
    impl OdeSystem for Product {
        fn dim(&self) -> usize {
            2
        }
        fn n_params(&self) -> usize {
            0
        }
        fn rhs<T: Scalar>(&self, u: &[T], _p: &[T], _t: &T, du: &mut [T]) {
            du[0] = u[0].clone() * &u[1];
            du[1] = T::zero();
        }
    }

    struct Identity;
    impl OdeSystem for Identity {
        fn dim(&self) -> usize {
            3
        }
        fn n_params(&self) -> usize {
            1
        }
        fn rhs<T: Scalar>(&self, u: &[T], _p: &[T], _t: &T, du: &mut [T]) {
            du.clone_from_slice(u);
        }
    }

    struct Constant;
    impl OdeSystem for Constant {
        fn dim(&self) -> usize {
            1
        }
        fn n_params(&self) -> usize {
            1
        }
        fn rhs<T: Scalar>(&self, _u: &[T], _p: &[T], _t: &T, du: &mut [T]) {
            du[0] = T::from(4.0);
        }
    }

    struct Switch;
    impl OdeSystem for Switch {
        fn dim(&self) -> usize {
            1
        }
        fn n_params(&self) -> usize {
            0
        }
        fn rhs<T: Scalar>(&self, u: &[T], _p: &[T], t: &T, du: &mut [T]) {
            du[0] = if *t >= T::from(1.0) { u[0].clone() * 2.0 } else { u[0].clone() };
        }
    }

    struct Opaque;
    impl OdeSystem for Opaque {
        fn dim(&self) -> usize {
            1
        }
        fn n_params(&self) -> usize {
            0
        }
        fn rhs<T: Scalar>(&self, u: &[T], _p: &[T], _t: &T, du: &mut [T]) {
            du[0] = u[0].custom("erf_like", f64::tanh, None);
        }
    }

    #[test]
    fn product_tape() {
        let tape = record(&Product, &[2.0, 3.0], &[], 0.0).unwrap();
        assert_eq!(tape.values(), vec![6.0, 0.0]);
        // Two inputs, one parameterless time input, one multiplication.
        assert_eq!(tape.node_count(), 4);
        let (vu, vp) = tape.vjp(&[1.0, 5.0]).unwrap();
        assert_eq!(vu, vec![3.0, 2.0]);
        assert!(vp.is_empty());
    }

    #[test]
    fn identity_and_constant() {
        let tape = record(&Identity, &[1.0, 2.0, 3.0], &[0.5], 0.0).unwrap();
        let (vu, vp) = tape.vjp(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(vu, vec![0.3, -1.0, 2.0]);
        assert_eq!(vp, vec![0.0]);
        let tape = record(&Constant, &[1.0], &[2.0], 0.0).unwrap();
        assert_eq!(tape.values(), vec![4.0]);
        assert_eq!(tape.vjp(&[1.0]).unwrap(), (vec![0.0], vec![0.0]));
        assert_eq!(tape.vjp(&[0.0]).unwrap(), (vec![0.0], vec![0.0]));
        assert!(tape.vjp(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn guards_block_reuse_across_branches() {
        let tape = record(&Switch, &[1.0], &[], 0.5).unwrap();
        assert!(!tape.is_branch_free());
        let same = reuse_tape(tape.clone(), &[2.0], &[], 0.7).unwrap();
        assert_eq!(same.values(), vec![2.0]);
        assert_eq!(
            reuse_tape(tape, &[2.0], &[], 1.5).unwrap_err(),
            TapeError::BranchChanged { guard: 0 }
        );
    }

    #[test]
    fn missing_derivative_names_the_op() {
        assert_eq!(
            record(&Opaque, &[0.1], &[], 0.0).unwrap_err(),
            TapeError::Unsupported { op: "erf_like" }
        );
        // The thread is usable again afterwards.
        assert!(record(&Product, &[1.0, 1.0], &[], 0.0).is_ok());
    }
}
