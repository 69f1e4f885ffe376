use super::{tsit5, Method, OdeError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retcode {
    Success,
    MaxIters,
    DtMin,
    DomainError,
}

impl Retcode {
    pub fn is_success(self) -> bool {
        self == Retcode::Success
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Retcode::Success => "success",
            Retcode::MaxIters => "maxiters",
            Retcode::DtMin => "dtmin",
            Retcode::DomainError => "domain_error",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    /// Right-hand-side evaluations.
    pub nf: usize,
    /// Jacobian evaluations.
    pub nj: usize,
    /// Linear-system factorizations.
    pub nw: usize,
    pub naccept: usize,
    pub nreject: usize,
}

impl std::ops::AddAssign for Stats {
    fn add_assign(&mut self, o: Stats) {
        self.nf += o.nf;
        self.nj += o.nj;
        self.nw += o.nw;
        self.naccept += o.naccept;
        self.nreject += o.nreject;
    }
}

#[derive(Debug, Clone)]
pub struct EventRecord<T> {
    pub t: T,
    pub index: usize,
    pub u_pre: Vec<T>,
    pub u_post: Vec<T>,
}

/// Interpolation data of one accepted step.
#[derive(Debug, Clone)]
pub(crate) enum Dense<T> {
    /// The seven Tsitouras stages.
    Tsit5(Vec<Vec<T>>),
    /// Rosenbrock end point and the two correction polynomials.
    Rosenbrock { y1: Vec<T>, c1: Vec<T>, c2: Vec<T> },
}

/// One step as taken: it starts at `ts[k]` with state `us[k]` and has
/// length `h`. A step cut short by an event ends before `ts[k] + h`.
#[derive(Debug, Clone)]
pub(crate) struct Segment<T> {
    pub h: T,
    pub dense: Dense<T>,
}

#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub ts: Vec<T>,
    pub us: Vec<Vec<T>>,
    pub(crate) segments: Vec<Segment<T>>,
    pub events: Vec<EventRecord<T>>,
    /// Parameter vectors in force from the given time on; events may
    /// change parameters.
    pub params: Vec<(f64, Vec<T>)>,
    pub stats: Stats,
    pub retcode: Retcode,
    pub method: Method,
}

impl<T: Scalar> Solution<T> {
    pub fn t0(&self) -> f64 {
        self.ts[0].value()
    }

    pub fn tf(&self) -> f64 {
        self.ts[self.ts.len() - 1].value()
    }

    pub fn final_state(&self) -> &[T] {
        &self.us[self.us.len() - 1]
    }

    /// Number of dense-output segments (accepted steps, counting steps cut
    /// short by events).
    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn time_values(&self) -> Vec<f64> {
        self.ts.iter().map(|t| t.value()).collect()
    }

    /// Parameters in force at time `t` (right-continuous at events).
    pub fn params_at(&self, t: f64) -> &[T] {
        let mut cur = &self.params[0].1;
        for (t0, p) in &self.params[1..] {
            if t >= *t0 {
                cur = p;
            }
        }
        cur
    }

    /// State at time `t`. At an accepted time the stored state is returned
    /// unchanged; at an event time that is the post-event state.
    pub fn interpolate(&self, t: f64) -> Result<Vec<T>, OdeError> {
        let (lo, hi) = (self.t0(), self.tf());
        if !(t >= lo && t <= hi) {
            return Err(OdeError::OutOfRange { t, t0: lo, tf: hi });
        }
        let k = self.ts.partition_point(|s| s.value() <= t) - 1;
        if self.ts[k].value() == t {
            return Ok(self.us[k].clone());
        }
        Ok(self.eval_segment(k, &T::from(t)))
    }

    /// Evaluates the dense polynomial of segment `k` at a possibly dual time.
    pub(crate) fn eval_segment(&self, k: usize, t: &T) -> Vec<T> {
        let seg = &self.segments[k];
        eval_dense(&self.us[k], &self.ts[k], &seg.h, &seg.dense, t)
    }

    /// Index of the segment containing `t` (segments are half-open on the
    /// right, except the last one).
    pub fn segment_index(&self, t: f64) -> usize {
        let k = self.ts.partition_point(|s| s.value() <= t);
        k.saturating_sub(1).min(self.segments.len().saturating_sub(1))
    }

    /// State at time `t` as seen from the left, so an event time gives the
    /// pre-event state.
    pub fn interpolate_left(&self, t: f64) -> Result<Vec<T>, OdeError> {
        let (lo, hi) = (self.t0(), self.tf());
        if !(t >= lo && t <= hi) {
            return Err(OdeError::OutOfRange { t, t0: lo, tf: hi });
        }
        let k = self.ts.partition_point(|s| s.value() < t);
        if k == 0 {
            return Ok(self.us[0].clone());
        }
        Ok(self.eval_segment(k - 1, &T::from(t)))
    }
}

pub(crate) fn eval_dense<T: Scalar>(y0: &[T], t0: &T, h: &T, dense: &Dense<T>, t: &T) -> Vec<T> {
    let theta = (t.clone() - t0) / h;
    match dense {
        Dense::Tsit5(k) => {
            let b = tsit5::interp_weights(&theta);
            (0..y0.len())
                .map(|i| {
                    let mut acc = T::zero();
                    for (bj, kj) in b.iter().zip(k) {
                        acc = acc + bj.clone() * &kj[i];
                    }
                    y0[i].clone() + h.clone() * acc
                })
                .collect()
        }
        Dense::Rosenbrock { y1, c1, c2 } => {
            let one_m = T::one() - &theta;
            (0..y0.len())
                .map(|i| {
                    let inner = c1[i].clone() + theta.clone() * &c2[i];
                    let corr = (y1[i].clone() - &y0[i]) + one_m.clone() * inner;
                    y0[i].clone() + theta.clone() * corr
                })
                .collect()
        }
    }
}
