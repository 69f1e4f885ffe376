//! Quasi-Newton minimisation with inverse-Hessian BFGS updates and a
//! strong-Wolfe line search.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    /// Stop when `‖∇f‖∞ ≤ gtol`.
    pub gtol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_evals: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { gtol: 1e-6, max_iters: 500, c1: 1e-4, c2: 0.9, max_line_evals: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub p_final: Vec<f64>,
    pub cost_final: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖∇f‖∞` at `p_final`.
    pub grad_norm: f64,
    /// Objective-and-gradient evaluations.
    pub n_evals: usize,
    /// Cost after each accepted iteration, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub message: String,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Point {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    /// Directional derivative along the search direction.
    d: f64,
}

struct Search<'a, F> {
    fg: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    d0: f64,
    opts: &'a BfgsOptions,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Search<'_, F> {
    fn eval(&mut self, alpha: f64) -> Point {
        self.evals += 1;
        let x: Vec<f64> = self.x.iter().zip(self.dir).map(|(x, d)| x + alpha * d).collect();
        let (f, g) = (self.fg)(&x);
        let d = dot(&g, self.dir);
        Point { alpha, f, g, d }
    }

    fn armijo_fails(&self, pt: &Point) -> bool {
        !pt.f.is_finite() || pt.f > self.f0 + self.opts.c1 * pt.alpha * self.d0
    }

    fn curvature_holds(&self, pt: &Point) -> bool {
        pt.d.is_finite() && pt.d.abs() <= -self.opts.c2 * self.d0
    }

    fn run(&mut self) -> Option<Point> {
        let mut prev = Point { alpha: 0.0, f: self.f0, g: Vec::new(), d: self.d0 };
        let mut alpha = 1.0;
        let mut first = true;
        while self.evals < self.opts.max_line_evals {
            let pt = self.eval(alpha);
            if self.armijo_fails(&pt) || (!first && pt.f >= prev.f) {
                return self.zoom(prev, pt);
            }
            if self.curvature_holds(&pt) {
                return Some(pt);
            }
            if pt.d >= 0.0 {
                return self.zoom(pt, prev);
            }
            first = false;
            alpha *= 2.0;
            prev = pt;
        }
        None
    }

    /// Narrows `[lo, hi]` (unordered) where `lo` satisfies sufficient
    /// decrease and has the lower value.
    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Option<Point> {
        while self.evals < self.opts.max_line_evals {
            let (a, b) = (lo.alpha, hi.alpha);
            let width = b - a;
            // Minimiser of the quadratic through f(lo), f'(lo) and f(hi),
            // kept away from the ends; bisection when it is unusable.
            let mut alpha = 0.5 * (a + b);
            if hi.f.is_finite() {
                let denom = 2.0 * (hi.f - lo.f - lo.d * width);
                if denom > 0.0 {
                    let q = a - lo.d * width * width / denom;
                    let (l, r) = (a.min(b), a.max(b));
                    let pad = 0.1 * width.abs();
                    if q.is_finite() && q > l + pad && q < r - pad {
                        alpha = q;
                    }
                }
            }
            if (alpha - a).abs() <= 1e-16 * a.abs().max(1.0) {
                return None;
            }
            let pt = self.eval(alpha);
            if self.armijo_fails(&pt) || pt.f >= lo.f {
                hi = pt;
            } else {
                if self.curvature_holds(&pt) {
                    return Some(pt);
                }
                if pt.d * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = pt;
            }
        }
        // Out of evaluations: settle for sufficient decrease.
        (lo.alpha > 0.0).then_some(lo)
    }
}

/// Minimises `fg`, which returns the objective and its gradient. The
/// initial inverse Hessian is the identity scaled by `1/‖∇f(p0)‖₂`.
/// Non-finite objective values make the line search retreat.
pub fn bfgs<F>(mut fg: F, p0: &[f64], opts: &BfgsOptions) -> OptResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = p0.len();
    let mut x = p0.to_vec();
    let (mut f, mut g) = fg(&x);
    let mut n_evals = 1;
    let mut history = vec![f];
    let done = |x: Vec<f64>, f: f64, g: &[f64], it, ok, evals, hist, msg: &str| OptResult {
        p_final: x,
        cost_final: f,
        iterations: it,
        converged: ok,
        grad_norm: inf_norm(g),
        n_evals: evals,
        cost_history: hist,
        message: msg.to_string(),
    };
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return done(x, f, &g, 0, false, n_evals, history, "objective not finite at the start");
    }
    let scaled_identity = |g: &[f64]| {
        let gn = dot(g, g).sqrt();
        let s = if gn > 0.0 { 1.0 / gn } else { 1.0 };
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = s;
        }
        h
    };
    let mut h = scaled_identity(&g);
    let mut iter = 0;
    loop {
        if inf_norm(&g) <= opts.gtol {
            return done(x, f, &g, iter, true, n_evals, history, "gradient tolerance reached");
        }
        if iter >= opts.max_iters {
            return done(x, f, &g, iter, false, n_evals, history, "iteration limit reached");
        }
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut d0 = dot(&g, &dir);
        if !(d0 < 0.0) {
            h = scaled_identity(&g);
            dir = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
            d0 = dot(&g, &dir);
        }
        let mut search = Search { fg: &mut fg, x: &x, dir: &dir, f0: f, d0, opts, evals: 0 };
        let found = search.run();
        n_evals += search.evals;
        let Some(pt) = found else {
            return done(x, f, &g, iter, false, n_evals, history, "line search failed");
        };
        iter += 1;
        let s: Vec<f64> = dir.iter().map(|d| pt.alpha * d).collect();
        let y: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        f = pt.f;
        g = pt.g;
        history.push(f);
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
    }
}
