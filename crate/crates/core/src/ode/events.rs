use super::OdeError;

const MAX_ITERS: usize = 200;

/// Finds a root of `g` in `bracket` by bisection accelerated with inverse
/// quadratic interpolation.
///
/// Returns `Ok(None)` when `g` has the same strict sign at both ends. The
/// returned time is the end of the final bracket on the `hi` side, so `g`
/// there already has the sign (or zero) it has at `bracket.1`. The default
/// tolerance is `10·ε·|t|`.
pub fn locate_event<G: FnMut(f64) -> f64>(
    mut g: G,
    bracket: (f64, f64),
    root_tol: Option<f64>,
) -> Result<Option<f64>, OdeError> {
    let (mut a, mut b) = bracket;
    let (mut ga, mut gb) = (g(a), g(b));
    if !(ga.is_finite() && gb.is_finite()) {
        return Err(OdeError::EventNonConvergence { lo: a, hi: b });
    }
    if gb == 0.0 {
        return Ok(Some(b));
    }
    if ga == 0.0 {
        return Ok(Some(a));
    }
    if ga.signum() == gb.signum() {
        return Ok(None);
    }
    let tol = root_tol.unwrap_or(10.0 * f64::EPSILON * a.abs().max(b.abs()));
    // Third point for the quadratic model: the previously discarded end.
    let mut prev: Option<(f64, f64)> = None;
    for _ in 0..MAX_ITERS {
        let width = b - a;
        if width <= tol {
            return Ok(Some(b));
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return Ok(Some(b));
        }
        let mut x = match prev {
            Some((c, gc)) if gc != ga && gc != gb => {
                a * gb * gc / ((ga - gb) * (ga - gc))
                    + b * ga * gc / ((gb - ga) * (gb - gc))
                    + c * ga * gb / ((gc - ga) * (gc - gb))
            }
            _ => a - ga * (b - a) / (gb - ga),
        };
        // Keep the interpolated point safely inside and fall back to the
        // midpoint when it would not at least quarter the bracket.
        let margin = 0.25 * width;
        if !x.is_finite() || x <= a || x >= b {
            x = mid;
        } else {
            x = x.clamp(a + 0.5 * tol.min(margin), b - 0.5 * tol.min(margin));
        }
        let gx = g(x);
        if !gx.is_finite() {
            return Err(OdeError::EventNonConvergence { lo: a, hi: b });
        }
        if gx == 0.0 {
            return Ok(Some(x));
        }
        if gx.signum() == ga.signum() {
            prev = Some((a, ga));
            a = x;
            ga = gx;
        } else {
            prev = Some((b, gb));
            b = x;
            gb = gx;
        }
        // Guarantee geometric shrinkage when interpolation stalls.
        if b - a > 0.5 * width {
            let m = 0.5 * (a + b);
            let gm = g(m);
            if !gm.is_finite() {
                return Err(OdeError::EventNonConvergence { lo: a, hi: b });
            }
            if gm == 0.0 {
                return Ok(Some(m));
            }
            if gm.signum() == ga.signum() {
                prev = Some((a, ga));
                a = m;
                ga = gm;
            } else {
                prev = Some((b, gb));
                b = m;
                gb = gm;
            }
        }
    }
    Err(OdeError::EventNonConvergence { lo: a, hi: b })
}
