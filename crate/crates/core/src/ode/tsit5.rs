//! Tsitouras 5(4) explicit Runge–Kutta pair.

use super::{Dynamics, Stats};
use crate::scalar::Scalar;

const C: [f64; 6] = [0.161, 0.327, 0.9, 0.9800255409045097, 1.0, 1.0];

const A32: f64 = 0.335480655492357;
const A42: f64 = -6.359448489975075;
const A43: f64 = 4.362295432869581;
const A52: f64 = -11.74888356406283;
const A53: f64 = 7.495539342889836;
const A54: f64 = -0.09249506636175525;
const A62: f64 = -12.92096931784711;
const A63: f64 = 8.159367898576159;
const A64: f64 = -0.071584973281401;
const A65: f64 = -0.02826905039406838;

// First column from the row-sum condition.
const A31: f64 = C[1] - A32;
const A41: f64 = C[2] - A42 - A43;
const A51: f64 = C[3] - A52 - A53 - A54;
const A61: f64 = C[4] - A62 - A63 - A64 - A65;

const B: [f64; 6] = [
    0.09646076681806523,
    0.01,
    0.4798896504144996,
    1.379008574103742,
    -3.290069515436081,
    2.324710524099774,
];

/// Difference between the fifth- and fourth-order weights.
const BTILDE: [f64; 7] = [
    -0.00178001105222577714,
    -0.0008164344596567469,
    0.007880878010261995,
    -0.1447110071732629,
    0.5823571654525552,
    -0.45808210592918697,
    1.0 / 66.0,
];

/// Coefficients of θ², θ³, θ⁴ in the interpolation weights; the first
/// weight also carries a linear θ term.
const R: [[f64; 3]; 7] = [
    [-2.763706197274826, 2.9132554618219126, -1.0530884977290216],
    [0.13169999999999998, -0.2234, 0.1017],
    [3.9302962368947516, -5.941033872131505, 2.490627285651253],
    [-12.411077166933676, 30.33818863028232, -16.548102889244902],
    [37.50931341651104, -88.1789048947664, 47.37952196281928],
    [-27.896526289197286, 65.09189467479366, -34.87065786149661],
    [1.5, -4.0, 2.5],
];

pub(crate) fn interp_weights<T: Scalar>(theta: &T) -> [T; 7] {
    let t2 = theta.square();
    let t3 = t2.clone() * theta;
    let t4 = t2.square();
    std::array::from_fn(|i| {
        let r = R[i];
        let w = t2.clone() * r[0] + t3.clone() * r[1] + t4.clone() * r[2];
        if i == 0 {
            w + theta
        } else {
            w
        }
    })
}

pub(crate) struct Step<T> {
    pub y1: Vec<T>,
    pub err: Vec<T>,
    /// All seven stages; the last is `f(y1)` and seeds the next step.
    pub k: Vec<Vec<T>>,
}

fn combo<T: Scalar>(y0: &[T], h: &T, coeffs: &[f64], k: &[Vec<T>]) -> Vec<T> {
    (0..y0.len())
        .map(|i| {
            let mut acc = T::zero();
            for (c, kj) in coeffs.iter().zip(k) {
                if *c != 0.0 {
                    acc = acc + kj[i].clone() * *c;
                }
            }
            y0[i].clone() + h.clone() * acc
        })
        .collect()
}

fn finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.value().is_finite() && x.partials().iter().all(|d| d.is_finite()))
}

/// One attempted step from `(t, y0)` of length `h`, ending at `t_end`.
/// `k1` is `f(t, y0)`. Returns `None` when a stage is not finite.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step<T: Scalar, D: Dynamics<T> + ?Sized>(
    sys: &D,
    y0: &[T],
    p: &[T],
    t: &T,
    h: &T,
    t_end: &T,
    k1: &[T],
    stats: &mut Stats,
) -> Option<Step<T>> {
    let n = y0.len();
    let rows: [&[f64]; 5] = [
        &[A31, A32],
        &[A41, A42, A43],
        &[A51, A52, A53, A54],
        &[A61, A62, A63, A64, A65],
        &B,
    ];
    let mut k: Vec<Vec<T>> = Vec::with_capacity(7);
    k.push(k1.to_vec());
    // Stage 2 separately: a21 = c2.
    let y = combo(y0, h, &[C[0]], &k);
    let mut f = vec![T::zero(); n];
    sys.rhs(&y, p, &(t.clone() + h.clone() * C[0]), &mut f);
    k.push(f);
    for (s, row) in rows.iter().enumerate().take(4) {
        let y = combo(y0, h, row, &k);
        let ts = if C[s + 1] == 1.0 { t_end.clone() } else { t.clone() + h.clone() * C[s + 1] };
        let mut f = vec![T::zero(); n];
        sys.rhs(&y, p, &ts, &mut f);
        k.push(f);
    }
    let y1 = combo(y0, h, rows[4], &k);
    let mut f = vec![T::zero(); n];
    sys.rhs(&y1, p, t_end, &mut f);
    k.push(f);
    stats.nf += 6;
    if !finite(&y1) || !finite(&k[6]) {
        return None;
    }
    let zero = vec![T::zero(); n];
    let err = combo(&zero, h, &BTILDE, &k);
    Some(Step { y1, err, k })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_consistency() {
        let sum_b: f64 = B.iter().sum();
        assert!((sum_b - 1.0).abs() < 1e-14);
        let sum_bt: f64 = BTILDE.iter().sum();
        assert!(sum_bt.abs() < 1e-14);
        // Interpolant reproduces the step weights at θ = 1 and vanishes at 0.
        let w = interp_weights(&1.0f64);
        for i in 0..6 {
            assert!((w[i] - B[i]).abs() < 1e-12, "weight {i}");
        }
        assert!(w[6].abs() < 1e-12);
        assert!(interp_weights(&0.0f64).iter().all(|x| *x == 0.0));
    }
}
