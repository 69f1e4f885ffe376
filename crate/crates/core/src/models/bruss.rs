use crate::ode::OdeSystem;
use crate::scalar::Scalar;

/// Two-dimensional Brusselator on an `N × N` grid over the unit square with
/// no-flux boundaries.
///
/// Grid node `(i, j)` sits at `(x, y) = (i h, j h)` with `h = 1/(N−1)` and
/// has index `k = i N + j`. States are interleaved as `[u_k, v_k]` at
/// `2k, 2k+1`; the four spatially varying parameters of node `k` are at
/// `4k..4k+4`:
///
/// `u' = p₂ + u²v − (p₁+1)u + p₃ Δu + f(x, y, t)`,
/// `v' = p₁u − u²v + p₄ Δv`.
#[derive(Debug, Clone)]
pub struct Brusselator {
    n: usize,
    inv_h2: f64,
    /// For each node its four neighbours after reflection at the walls.
    neighbours: Vec<[usize; 4]>,
    /// Nodes inside the forcing disc.
    forced: Vec<bool>,
}

pub const BRUSS_NODE_PARAMS: [f64; 4] = [3.4, 1.0, 10.0, 10.0];
pub const FORCING_ON: f64 = 1.1;

/// Forcing term: 5 inside the disc of radius 0.1 around (0.3, 0.6) from
/// `t = 1.1` on, otherwise 0.
pub fn bruss_forcing(x: f64, y: f64, t: f64) -> f64 {
    if in_disc(x, y) && t >= FORCING_ON {
        5.0
    } else {
        0.0
    }
}

fn in_disc(x: f64, y: f64) -> bool {
    (x - 0.3).powi(2) + (y - 0.6).powi(2) <= 0.1f64.powi(2)
}

impl Brusselator {
    /// `n` is the number of grid nodes per side; at least 2.
    pub fn new(n: usize) -> Option<Self> {
        if n < 2 {
            return None;
        }
        let h = 1.0 / (n as f64 - 1.0);
        let reflect = |i: isize| -> usize {
            let last = n as isize - 1;
            if i < 0 {
                (-i) as usize
            } else if i > last {
                (2 * last - i) as usize
            } else {
                i as usize
            }
        };
        let mut neighbours = Vec::with_capacity(n * n);
        let mut forced = Vec::with_capacity(n * n);
        for i in 0..n as isize {
            for j in 0..n as isize {
                neighbours.push([
                    reflect(i - 1) * n + j as usize,
                    reflect(i + 1) * n + j as usize,
                    i as usize * n + reflect(j - 1),
                    i as usize * n + reflect(j + 1),
                ]);
                forced.push(in_disc(i as f64 * h, j as f64 * h));
            }
        }
        Some(Brusselator { n, inv_h2: 1.0 / (h * h), neighbours, forced })
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    /// Coordinates of grid node `k`.
    pub fn node_xy(&self, k: usize) -> (f64, f64) {
        let h = 1.0 / (self.n as f64 - 1.0);
        ((k / self.n) as f64 * h, (k % self.n) as f64 * h)
    }

    pub fn initial_state(&self) -> Vec<f64> {
        let mut u0 = Vec::with_capacity(2 * self.n * self.n);
        for k in 0..self.n * self.n {
            let (x, y) = self.node_xy(k);
            u0.push(22.0 * (y * (1.0 - y)).powf(1.5));
            u0.push(27.0 * (x * (1.0 - x)).powf(1.5));
        }
        u0
    }

    pub fn default_params(&self) -> Vec<f64> {
        BRUSS_NODE_PARAMS.repeat(self.n * self.n)
    }

    /// Discrete Laplacian of component `s` (0 for u, 1 for v) at node `k`.
    pub fn laplacian<T: Scalar>(&self, w: &[T], k: usize, s: usize) -> T {
        let centre = &w[2 * k + s];
        let mut acc = T::zero();
        for nb in self.neighbours[k] {
            acc = acc + (w[2 * nb + s].clone() - centre);
        }
        acc * self.inv_h2
    }
}

impl OdeSystem for Brusselator {
    fn dim(&self) -> usize {
        2 * self.n * self.n
    }

    fn n_params(&self) -> usize {
        4 * self.n * self.n
    }

    fn rhs<T: Scalar>(&self, w: &[T], p: &[T], t: &T, du: &mut [T]) {
        // The switch-on instant itself belongs to the unforced side, so a
        // step that lands on it integrates the unforced field.
        let forcing_on = *t > T::from(FORCING_ON);
        for k in 0..self.n * self.n {
            let (u, v) = (&w[2 * k], &w[2 * k + 1]);
            let pk = &p[4 * k..4 * k + 4];
            let u2v = u.square() * v;
            let mut fu = pk[1].clone() + &u2v - (pk[0].clone() + 1.0) * u
                + pk[2].clone() * self.laplacian(w, k, 0);
            if forcing_on && self.forced[k] {
                fu = fu + 5.0;
            }
            du[2 * k] = fu;
            du[2 * k + 1] = pk[0].clone() * u - u2v + pk[3].clone() * self.laplacian(w, k, 1);
        }
    }

    fn analytic_jacobian<T: Scalar>(&self, w: &[T], p: &[T], _t: &T, jac: &mut [T]) -> bool {
        let n = self.dim();
        jac.iter_mut().for_each(|j| *j = T::zero());
        for k in 0..self.n * self.n {
            let (u, v) = (&w[2 * k], &w[2 * k + 1]);
            let pk = &p[4 * k..4 * k + 4];
            let du_row = 2 * k * n;
            let dv_row = (2 * k + 1) * n;
            let two_uv = u.clone() * v * 2.0;
            let u2 = u.square();
            let du_diff = pk[2].clone() * self.inv_h2;
            let dv_diff = pk[3].clone() * self.inv_h2;
            jac[du_row + 2 * k] = two_uv.clone() - (pk[0].clone() + 1.0) - du_diff.clone() * 4.0;
            jac[du_row + 2 * k + 1] = u2.clone();
            jac[dv_row + 2 * k] = pk[0].clone() - two_uv;
            jac[dv_row + 2 * k + 1] = -u2 - dv_diff.clone() * 4.0;
            for nb in self.neighbours[k] {
                jac[du_row + 2 * nb] = jac[du_row + 2 * nb].clone() + &du_diff;
                jac[dv_row + 2 * nb + 1] = jac[dv_row + 2 * nb + 1].clone() + &dv_diff;
            }
        }
        true
    }

    fn analytic_param_jacobian(&self, w: &[f64], _p: &[f64], _t: f64, jac: &mut [f64]) -> bool {
        let np = self.n_params();
        jac.iter_mut().for_each(|j| *j = 0.0);
        for k in 0..self.n * self.n {
            let u = w[2 * k];
            let du_row = 2 * k * np;
            let dv_row = (2 * k + 1) * np;
            jac[du_row + 4 * k] = -u;
            jac[du_row + 4 * k + 1] = 1.0;
            jac[du_row + 4 * k + 2] = self.laplacian(w, k, 0);
            jac[dv_row + 4 * k] = u;
            jac[dv_row + 4 * k + 3] = self.laplacian(w, k, 1);
        }
        true
    }

    fn depends_on_time(&self) -> bool {
        false
    }

    fn tstops(&self) -> Vec<f64> {
        vec![FORCING_ON]
    }
}
