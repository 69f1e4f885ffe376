//! RODAS4: stiffly accurate Rosenbrock method of order 4(3) with
//! third-order dense output, in the `(1/(hγ) − J) k = …` formulation.

use super::{Dynamics, Stats};
use crate::scalar::Scalar;

pub(crate) const GAMMA: f64 = 0.25;

const C: [f64; 5] = [0.0, 0.386, 0.21, 0.63, 1.0];
const D: [f64; 4] = [0.25, -0.1043, 0.1035, -0.0362];

const A: [&[f64]; 4] = [
    &[1.544],
    &[0.9466785280815826, 0.2557011698983284],
    &[3.314825187068521, 2.896124015972201, 0.9986419139977817],
    &[1.221224509226641, 6.019134481288629, 12.53708332932087, -0.6878860361058950],
];

const CC: [&[f64]; 5] = [
    &[-5.6688],
    &[-2.430093356833875, -0.2063599157091915],
    &[-0.1073529058151375, -9.594562251023355, -20.47028614809616],
    &[7.496443313967647, -10.24680431464352, -33.99990352819905, 11.70890893206160],
    &[
        8.083246795921522,
        -7.981132988064893,
        -31.52159432874371,
        16.31930543123136,
        -6.058818238834054,
    ],
];

const D2: [f64; 5] = [
    10.12623508344586,
    -7.487995877610167,
    -34.80091861555747,
    -7.992771707568823,
    1.025137723295662,
];
const D3: [f64; 5] = [
    -0.6762803392801253,
    6.087714651680015,
    16.43084320892478,
    24.76722511418386,
    -6.594389125716872,
];

pub(crate) struct Step<T> {
    pub y1: Vec<T>,
    pub err: Vec<T>,
    pub c1: Vec<T>,
    pub c2: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Failure {
    Singular,
    NonFinite,
}

fn lin<T: Scalar>(base: Option<&[T]>, coeffs: &[f64], k: &[Vec<T>], scale: Option<&T>, n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            let mut acc = T::zero();
            for (c, kj) in coeffs.iter().zip(k) {
                if *c != 0.0 && !kj[i].is_exact_zero() {
                    acc = acc + kj[i].clone() * *c;
                }
            }
            if let Some(s) = scale {
                acc = acc * s;
            }
            match base {
                Some(b) => b[i].clone() + acc,
                None => acc,
            }
        })
        .collect()
}

fn finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.value().is_finite() && x.partials().iter().all(|d| d.is_finite()))
}

/// One attempted step of length `h` from `(t, y0)`, ending at `t_end`.
/// `f0` is `f(t, y0)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step<T: Scalar, D: Dynamics<T> + ?Sized>(
    sys: &D,
    y0: &[T],
    p: &[T],
    t: &T,
    h: &T,
    t_end: &T,
    f0: &[T],
    stats: &mut Stats,
) -> Result<Step<T>, Failure> {
    let n = y0.len();
    let shift = T::one() / (h.clone() * GAMMA);
    let w = sys.factor_w(y0, p, t, &shift).ok_or(Failure::Singular)?;
    stats.nj += 1;
    stats.nw += 1;

    let ft = if sys.depends_on_time() {
        let delta = (f64::EPSILON * t.value().abs().max(1e-5)).sqrt();
        let mut f1 = vec![T::zero(); n];
        sys.rhs(y0, p, &(t.clone() + delta), &mut f1);
        stats.nf += 1;
        Some(f1.into_iter().zip(f0).map(|(a, b)| (a - b) / delta).collect::<Vec<T>>())
    } else {
        None
    };
    let inv_h = T::one() / h;
    let add_ft = |r: &mut [T], d: f64| {
        if let Some(ft) = &ft {
            if d != 0.0 {
                let hd = h.clone() * d;
                for (ri, fi) in r.iter_mut().zip(ft) {
                    *ri = ri.clone() + hd.clone() * fi;
                }
            }
        }
    };

    let mut k: Vec<Vec<T>> = Vec::with_capacity(6);
    let mut r = f0.to_vec();
    add_ft(&mut r, D[0]);
    sys.solve_w(&w, y0, p, t, &mut r);
    k.push(r);

    let mut ystage = Vec::new();
    for s in 1..5 {
        ystage = lin(Some(y0), A[s - 1], &k, None, n);
        let ts = if C[s] == 1.0 { t_end.clone() } else { t.clone() + h.clone() * C[s] };
        let mut r = vec![T::zero(); n];
        sys.rhs(&ystage, p, &ts, &mut r);
        stats.nf += 1;
        let corr = lin(None, CC[s - 1], &k, Some(&inv_h), n);
        for (ri, ci) in r.iter_mut().zip(corr) {
            *ri = ri.clone() + ci;
        }
        if s < 4 {
            add_ft(&mut r, D[s]);
        }
        sys.solve_w(&w, y0, p, t, &mut r);
        if !finite(&r) {
            return Err(Failure::NonFinite);
        }
        k.push(r);
    }
    // Embedded solution y5 + k5, then the last stage.
    let yhat: Vec<T> = ystage.iter().zip(&k[4]).map(|(a, b)| a.clone() + b).collect();
    let mut r = vec![T::zero(); n];
    sys.rhs(&yhat, p, t_end, &mut r);
    stats.nf += 1;
    let corr = lin(None, CC[4], &k, Some(&inv_h), n);
    for (ri, ci) in r.iter_mut().zip(corr) {
        *ri = ri.clone() + ci;
    }
    sys.solve_w(&w, y0, p, t, &mut r);
    let y1: Vec<T> = yhat.iter().zip(&r).map(|(a, b)| a.clone() + b).collect();
    if !finite(&y1) {
        return Err(Failure::NonFinite);
    }
    let c1 = lin(None, &D2, &k, None, n);
    let c2 = lin(None, &D3, &k, None, n);
    Ok(Step { y1, err: r, c1, c2 })
}
