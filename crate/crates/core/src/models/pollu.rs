use crate::ode::OdeSystem;
use crate::scalar::Scalar;

/// Air-pollution chemistry: 20 species, 25 mass-action reactions, each with
/// its own rate constant.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pollu;

pub const POLLU_PARAMS: [f64; 25] = [
    0.35, 26.6, 12_300.0, 0.000_86, 0.000_82, 15_000.0, 0.000_13, 24_000.0, 16_500.0, 9_000.0,
    0.022, 12_000.0, 1.88, 16_300.0, 4_800_000.0, 0.000_35, 0.0175, 1e9, 0.444e12, 1_240.0, 2.1,
    5.78, 0.0474, 1_780.0, 3.12,
];

pub const POLLU_U0: [f64; 20] = [
    0.0, 0.2, 0.0, 0.04, 0.0, 0.0, 0.1, 0.3, 0.01, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.007, 0.0,
    0.0, 0.0,
];

/// Reactant species (0-based) of each reaction; the rate of reaction `j`
/// is `p[j]` times the product of its reactants.
const REACTANTS: [(usize, Option<usize>); 25] = [
    (0, None),
    (1, Some(3)),
    (4, Some(1)),
    (6, None),
    (6, None),
    (6, Some(5)),
    (8, None),
    (8, Some(5)),
    (10, Some(1)),
    (10, Some(0)),
    (12, None),
    (9, Some(1)),
    (13, None),
    (0, Some(5)),
    (2, None),
    (3, None),
    (3, None),
    (15, None),
    (15, None),
    (16, Some(5)),
    (18, None),
    (18, None),
    (0, Some(3)),
    (18, Some(0)),
    (19, None),
];

/// `(species, reaction, stoichiometric coefficient)`.
#[rustfmt::skip]
const STOICH: &[(usize, usize, f64)] = &[
    (0, 0, -1.0), (0, 9, -1.0), (0, 13, -1.0), (0, 22, -1.0), (0, 23, -1.0),
    (0, 1, 1.0), (0, 2, 1.0), (0, 8, 1.0), (0, 10, 1.0), (0, 11, 1.0), (0, 21, 1.0), (0, 24, 1.0),
    (1, 1, -1.0), (1, 2, -1.0), (1, 8, -1.0), (1, 11, -1.0), (1, 0, 1.0), (1, 20, 1.0),
    (2, 14, -1.0), (2, 0, 1.0), (2, 16, 1.0), (2, 18, 1.0), (2, 21, 1.0),
    (3, 1, -1.0), (3, 15, -1.0), (3, 16, -1.0), (3, 22, -1.0), (3, 14, 1.0),
    (4, 2, -1.0), (4, 3, 2.0), (4, 5, 1.0), (4, 6, 1.0), (4, 12, 1.0), (4, 19, 1.0),
    (5, 5, -1.0), (5, 7, -1.0), (5, 13, -1.0), (5, 19, -1.0), (5, 2, 1.0), (5, 17, 2.0),
    (6, 3, -1.0), (6, 4, -1.0), (6, 5, -1.0), (6, 12, 1.0),
    (7, 3, 1.0), (7, 4, 1.0), (7, 5, 1.0), (7, 6, 1.0),
    (8, 6, -1.0), (8, 7, -1.0),
    (9, 11, -1.0), (9, 6, 1.0), (9, 8, 1.0),
    (10, 8, -1.0), (10, 9, -1.0), (10, 7, 1.0), (10, 10, 1.0),
    (11, 8, 1.0),
    (12, 10, -1.0), (12, 9, 1.0),
    (13, 12, -1.0), (13, 11, 1.0),
    (14, 13, 1.0),
    (15, 17, -1.0), (15, 18, -1.0), (15, 15, 1.0),
    (16, 19, -1.0),
    (17, 19, 1.0),
    (18, 20, -1.0), (18, 21, -1.0), (18, 23, -1.0), (18, 22, 1.0), (18, 24, 1.0),
    (19, 24, -1.0), (19, 23, 1.0),
];

fn product<T: Scalar>(u: &[T], j: usize) -> T {
    match REACTANTS[j] {
        (a, None) => u[a].clone(),
        (a, Some(b)) => u[a].clone() * &u[b],
    }
}

impl OdeSystem for Pollu {
    fn dim(&self) -> usize {
        20
    }

    fn n_params(&self) -> usize {
        25
    }

    fn rhs<T: Scalar>(&self, u: &[T], p: &[T], _t: &T, du: &mut [T]) {
        let rates: Vec<T> = (0..25).map(|j| p[j].clone() * product(u, j)).collect();
        du.iter_mut().for_each(|d| *d = T::zero());
        for &(s, j, c) in STOICH {
            du[s] = if c == 1.0 {
                du[s].clone() + &rates[j]
            } else if c == -1.0 {
                du[s].clone() - &rates[j]
            } else {
                du[s].clone() + rates[j].clone() * c
            };
        }
    }

    fn analytic_jacobian<T: Scalar>(&self, u: &[T], p: &[T], _t: &T, jac: &mut [T]) -> bool {
        jac.iter_mut().for_each(|j| *j = T::zero());
        for &(s, j, c) in STOICH {
            let add = |jac: &mut [T], col: usize, d: T| {
                jac[s * 20 + col] = jac[s * 20 + col].clone() + d * c;
            };
            match REACTANTS[j] {
                (a, None) => add(jac, a, p[j].clone()),
                (a, Some(b)) => {
                    add(jac, a, p[j].clone() * &u[b]);
                    add(jac, b, p[j].clone() * &u[a]);
                }
            }
        }
        true
    }

    fn analytic_param_jacobian(&self, u: &[f64], _p: &[f64], _t: f64, jac: &mut [f64]) -> bool {
        jac.iter_mut().for_each(|j| *j = 0.0);
        for &(s, j, c) in STOICH {
            jac[s * 25 + j] += c * product(u, j);
        }
        true
    }

    fn depends_on_time(&self) -> bool {
        false
    }
}
