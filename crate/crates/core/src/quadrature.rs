//! Adaptive Gauss–Kronrod (7/15) quadrature for scalar and vector
//! integrands.

use std::collections::BinaryHeap;

use thiserror::Error;

/// Kronrod abscissae on [-1, 1], descending; the last is the centre.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Gauss weights for the abscissae XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

pub const DEFAULT_MAX_SUBDIVISIONS: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("subdivision limit reached with error estimate {err_est:e}")]
    SubdivisionLimit { best: Vec<f64>, err_est: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadResult<V> {
    pub value: V,
    pub err_est: f64,
    pub nevals: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One 15-point Kronrod rule with its embedded 7-point Gauss estimate on
/// `[a, b]` for a `dim`-component integrand. Returns the Kronrod value and
/// `‖K15 − G7‖∞`, floored at the rounding level of the rule.
fn rule<F>(f: &mut F, dim: usize, a: f64, b: f64) -> Result<(Vec<f64>, f64), QuadError>
where
    F: FnMut(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let mut k = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut abs_k = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    let mut eval = |x: f64, buf: &mut [f64]| -> Result<(), QuadError> {
        f(x, buf);
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(QuadError::NonFinite { x });
        }
        Ok(())
    };
    eval(c, &mut buf)?;
    for i in 0..dim {
        k[i] = WGK[7] * buf[i];
        g[i] = WG[3] * buf[i];
        abs_k[i] = WGK[7] * buf[i].abs();
    }
    let mut buf2 = vec![0.0; dim];
    for j in 0..7 {
        let dx = hl * XGK[j];
        eval(c - dx, &mut buf)?;
        eval(c + dx, &mut buf2)?;
        for i in 0..dim {
            let s = buf[i] + buf2[i];
            k[i] += WGK[j] * s;
            abs_k[i] += WGK[j] * (buf[i].abs() + buf2[i].abs());
            if j % 2 == 1 {
                g[i] += WG[j / 2] * s;
            }
        }
    }
    let scale = hl.abs();
    let mut err = 0.0f64;
    for i in 0..dim {
        k[i] *= scale;
        g[i] *= scale;
        let floor = 50.0 * f64::EPSILON * abs_k[i] * scale;
        err = err.max((k[i] - g[i]).abs().max(floor));
    }
    Ok((k, err))
}

fn check_interval(a: f64, b: f64) -> Result<(), QuadError> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(QuadError::InvalidInterval { a, b });
    }
    Ok(())
}

/// Single 15-point Gauss–Kronrod rule. The error estimate is `|K15 − G7|`.
pub fn gk15<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> Result<QuadResult<f64>, QuadError> {
    check_interval(a, b)?;
    let (v, err) = rule(&mut |x, out: &mut [f64]| out[0] = f(x), 1, a, b)?;
    Ok(QuadResult { value: v[0], err_est: err, nevals: 15 })
}

/// Single rule for a `dim`-component integrand writing into its slice.
pub fn gk15_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    dim: usize,
    a: f64,
    b: f64,
) -> Result<QuadResult<Vec<f64>>, QuadError> {
    check_interval(a, b)?;
    let (v, err) = rule(&mut f, dim, a, b)?;
    Ok(QuadResult { value: v, err_est: err, nevals: 15 })
}

/// Adaptive integration of a scalar integrand until the summed error
/// estimate is at most `max(atol, rtol·|value|)`.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rtol: f64,
    atol: f64,
) -> Result<QuadResult<f64>, QuadError> {
    let r = adaptive_vec(|x, out: &mut [f64]| out[0] = f(x), 1, a, b, rtol, atol, DEFAULT_MAX_SUBDIVISIONS)?;
    Ok(QuadResult { value: r.value[0], err_est: r.err_est, nevals: r.nevals })
}

struct Piece {
    err: f64,
    a: f64,
    b: f64,
    value: Vec<f64>,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Adaptive integration of a vector integrand. All components share one
/// subdivision tree; a subinterval's error is the largest component error.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    dim: usize,
    a: f64,
    b: f64,
    rtol: f64,
    atol: f64,
    max_subdivisions: usize,
) -> Result<QuadResult<Vec<f64>>, QuadError> {
    check_interval(a, b)?;
    let (v, e) = rule(&mut f, dim, a, b)?;
    let mut nevals = 15;
    let mut total = v.clone();
    let mut total_err = e;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { err: e, a, b, value: v });
    let mut pieces = 1;
    loop {
        let tol = atol.max(rtol * inf_norm(&total));
        if total_err <= tol {
            break;
        }
        if pieces >= max_subdivisions {
            return Err(QuadError::SubdivisionLimit { best: total, err_est: total_err });
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            // Interval cannot be split further in floating point.
            return Err(QuadError::SubdivisionLimit { best: total, err_est: total_err });
        }
        let (vl, el) = rule(&mut f, dim, worst.a, m)?;
        let (vr, er) = rule(&mut f, dim, m, worst.b)?;
        nevals += 30;
        for i in 0..dim {
            total[i] += vl[i] + vr[i] - worst.value[i];
        }
        total_err += el + er - worst.err;
        heap.push(Piece { err: el, a: worst.a, b: m, value: vl });
        heap.push(Piece { err: er, a: m, b: worst.b, value: vr });
        pieces += 1;
    }
    // Re-sum from the pieces to shed accumulated update rounding.
    let mut value = vec![0.0; dim];
    let mut err = 0.0;
    for p in heap.iter() {
        for i in 0..dim {
            value[i] += p.value[i];
        }
        err += p.err;
    }
    Ok(QuadResult { value, err_est: err, nevals })
}
