use crate::ode::{Direction, OdeSystem};
use crate::scalar::Scalar;

/// Two-peripheral-compartment pharmacokinetic model with oral dosing and an
/// indirect-response pharmacodynamic compartment.
///
/// States: `[Depot, Cent, Periph1, Periph2, Resp]`. Parameters, in order:
/// `ka, CL, Vc, Q1, Q2, Vp1, Vp2, Vmax, Km, kin, Imax, IC50, kout, γ`.
/// Each dose time adds `dose` to the depot through a time-triggered event.
#[derive(Debug, Clone)]
pub struct Pkpd {
    pub dose_times: Vec<f64>,
    pub dose: f64,
}

pub const PKPD_PARAMS: [f64; 14] =
    [1.0, 1.0, 20.0, 2.0, 0.5, 10.0, 100.0, 0.0, 2.0, 10.0, 1.0, 2.0, 2.0, 1.0];
pub const PKPD_U0: [f64; 5] = [100.0, 0.0, 0.0, 0.0, 5.0];
pub const PKPD_PARAM_NAMES: [&str; 14] = [
    "ka", "CL", "Vc", "Q1", "Q2", "Vp1", "Vp2", "Vmax", "Km", "kin", "Imax", "IC50", "kout", "gamma",
];

impl Default for Pkpd {
    fn default() -> Self {
        Pkpd { dose_times: vec![24.0, 48.0, 72.0, 96.0], dose: 100.0 }
    }
}

impl Pkpd {
    /// The model without the saturable elimination term, for comparison.
    pub fn rhs_linear_elimination<T: Scalar>(&self, u: &[T], p: &[T], du: &mut [T]) {
        let c = u[1].clone() / &p[2];
        let (q1, q2) = (&p[3], &p[4]);
        let p1c = u[2].clone() / &p[5];
        let p2c = u[3].clone() / &p[6];
        let absorbed = p[0].clone() * &u[0];
        du[0] = -absorbed.clone();
        du[1] = absorbed - (p[1].clone() + q1 + q2) * &c + q1.clone() * &p1c + q2.clone() * &p2c;
        du[2] = q1.clone() * &c - q1.clone() * p1c;
        du[3] = q2.clone() * &c - q2.clone() * p2c;
        du[4] = response(&c, &u[4], p);
    }
}

fn response<T: Scalar>(c: &T, resp: &T, p: &[T]) -> T {
    let (kin, imax, ic50, kout, gamma) = (&p[9], &p[10], &p[11], &p[12], &p[13]);
    let cg = c.powv(gamma);
    let effect = imax.clone() * &cg / (ic50.powv(gamma) + cg);
    kin.clone() * (T::one() - effect) - kout.clone() * resp
}

impl OdeSystem for Pkpd {
    fn dim(&self) -> usize {
        5
    }

    fn n_params(&self) -> usize {
        14
    }

    fn rhs<T: Scalar>(&self, u: &[T], p: &[T], _t: &T, du: &mut [T]) {
        let c = u[1].clone() / &p[2];
        let (q1, q2) = (&p[3], &p[4]);
        let p1c = u[2].clone() / &p[5];
        let p2c = u[3].clone() / &p[6];
        let absorbed = p[0].clone() * &u[0];
        let saturable = p[7].clone() / (p[8].clone() + &c);
        let elim = (p[1].clone() + saturable + q1) * &c;
        du[0] = -absorbed.clone();
        du[1] = absorbed - elim + q1.clone() * &p1c - q2.clone() * &c + q2.clone() * &p2c;
        du[2] = q1.clone() * &c - q1.clone() * p1c;
        du[3] = q2.clone() * &c - q2.clone() * p2c;
        du[4] = response(&c, &u[4], p);
    }

    fn analytic_jacobian<T: Scalar>(&self, u: &[T], p: &[T], _t: &T, jac: &mut [T]) -> bool {
        jac.iter_mut().for_each(|j| *j = T::zero());
        let (ka, cl, vc, q1, q2, vp1, vp2, vmax, km) =
            (&p[0], &p[1], &p[2], &p[3], &p[4], &p[5], &p[6], &p[7], &p[8]);
        let c = u[1].clone() / vc;
        let kc = km.clone() + &c;
        // d/dC of the total outflow (CL + Vmax/(Km+C) + Q1 + Q2)·C.
        let delim = cl.clone() + q1 + q2 + vmax.clone() * km / kc.square();
        jac[0] = -ka.clone();
        jac[5] = ka.clone();
        jac[6] = -(delim / vc);
        jac[7] = q1.clone() / vp1;
        jac[8] = q2.clone() / vp2;
        jac[11] = q1.clone() / vc;
        jac[12] = -(q1.clone() / vp1);
        jac[16] = q2.clone() / vc;
        jac[18] = -(q2.clone() / vp2);
        let (kin, imax, ic50, kout, gamma) = (&p[9], &p[10], &p[11], &p[12], &p[13]);
        let cg = c.powv(gamma);
        let ig = ic50.powv(gamma);
        let s = ig.clone() + &cg;
        let dcg = gamma.clone() * c.powv(&(gamma.clone() - 1.0));
        let de_dc = imax.clone() * dcg * ig / s.square();
        jac[21] = -(kin.clone() * de_dc / vc);
        jac[24] = -kout.clone();
        true
    }

    fn analytic_param_jacobian(&self, u: &[f64], p: &[f64], _t: f64, jac: &mut [f64]) -> bool {
        let [_ka, cl, vc, q1, q2, vp1, vp2, vmax, km, kin, imax, ic50, _kout, gamma] =
            <[f64; 14]>::try_from(p).expect("parameter count");
        jac.iter_mut().for_each(|j| *j = 0.0);
        let (depot, cent, per1, per2, resp) = (u[0], u[1], u[2], u[3], u[4]);
        let c = cent / vc;
        let kc = km + c;
        let delim = cl + q1 + q2 + vmax * km / (kc * kc);
        let row = |r: usize, col: usize| r * 14 + col;
        jac[row(0, 0)] = -depot;
        jac[row(1, 0)] = depot;
        jac[row(1, 1)] = -c;
        jac[row(1, 2)] = delim * c / vc;
        jac[row(1, 3)] = -c + per1 / vp1;
        jac[row(1, 4)] = -c + per2 / vp2;
        jac[row(1, 5)] = -q1 * per1 / (vp1 * vp1);
        jac[row(1, 6)] = -q2 * per2 / (vp2 * vp2);
        jac[row(1, 7)] = -c / kc;
        jac[row(1, 8)] = vmax * c / (kc * kc);
        jac[row(2, 2)] = -q1 * c / vc;
        jac[row(2, 3)] = c - per1 / vp1;
        jac[row(2, 5)] = q1 * per1 / (vp1 * vp1);
        jac[row(3, 2)] = -q2 * c / vc;
        jac[row(3, 4)] = c - per2 / vp2;
        jac[row(3, 6)] = q2 * per2 / (vp2 * vp2);
        let cg = c.powf(gamma);
        let ig = ic50.powf(gamma);
        let s = ig + cg;
        let e = imax * cg / s;
        let de_dc = imax * gamma * c.powf(gamma - 1.0) * ig / (s * s);
        let dcg_dg = if c > 0.0 { cg * c.ln() } else { 0.0 };
        let dig_dg = if ic50 > 0.0 { ig * ic50.ln() } else { 0.0 };
        jac[row(4, 2)] = kin * de_dc * c / vc;
        jac[row(4, 9)] = 1.0 - e;
        jac[row(4, 10)] = -kin * cg / s;
        jac[row(4, 11)] = kin * imax * cg * gamma * ic50.powf(gamma - 1.0) / (s * s);
        jac[row(4, 12)] = -resp;
        jac[row(4, 13)] = -kin * imax * (dcg_dg * ig - cg * dig_dg) / (s * s);
        true
    }

    fn depends_on_time(&self) -> bool {
        false
    }

    fn n_events(&self) -> usize {
        self.dose_times.len()
    }

    fn event_direction(&self, _index: usize) -> Direction {
        Direction::Up
    }

    fn event_condition<T: Scalar>(&self, index: usize, _u: &[T], _p: &[T], t: &T) -> T {
        t.clone() - self.dose_times[index]
    }

    fn apply_event<T: Scalar>(&self, _index: usize, u: &mut [T], _p: &mut [T], _t: &T) {
        u[0] = u[0].clone() + self.dose;
    }
}
