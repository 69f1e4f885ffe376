//! Dense LU factorization with partial pivoting over any [`Scalar`].
//!
//! Pivots are chosen by value magnitude. Exact-zero multipliers and row
//! entries are skipped, which keeps banded systems (the Brusselator
//! discretization) close to banded cost.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("matrix is singular at pivot {pivot}")]
pub struct SingularMatrix {
    pub pivot: usize,
}

/// Row-major LU factors of an `n × n` matrix.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(n: usize, mut a: Vec<T>) -> Result<Self, SingularMatrix> {
        assert_eq!(a.len(), n * n, "matrix storage does not match dimension");
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut best = k;
            let mut best_abs = a[k * n + k].value().abs();
            for i in k + 1..n {
                let v = a[i * n + k].value().abs();
                if v > best_abs {
                    best = i;
                    best_abs = v;
                }
            }
            if best_abs == 0.0 || !best_abs.is_finite() {
                return Err(SingularMatrix { pivot: k });
            }
            if best != k {
                for j in 0..n {
                    a.swap(k * n + j, best * n + j);
                }
                piv.swap(k, best);
            }
            let pivot = a[k * n + k].clone();
            for i in k + 1..n {
                if a[i * n + k].is_exact_zero() {
                    continue;
                }
                let m = a[i * n + k].clone() / &pivot;
                for j in k + 1..n {
                    if a[k * n + j].is_exact_zero() {
                        continue;
                    }
                    let upd = m.clone() * &a[k * n + j];
                    a[i * n + j] = a[i * n + j].clone() - upd;
                }
                a[i * n + k] = m;
            }
        }
        Ok(Lu { n, lu: a, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [T]) {
        let n = self.n;
        let mut x: Vec<T> = self.piv.iter().map(|&i| b[i].clone()).collect();
        for i in 0..n {
            for j in 0..i {
                let l = &self.lu[i * n + j];
                if l.is_exact_zero() || x[j].is_exact_zero() {
                    continue;
                }
                x[i] = x[i].clone() - l.clone() * &x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = &self.lu[i * n + j];
                if u.is_exact_zero() || x[j].is_exact_zero() {
                    continue;
                }
                x[i] = x[i].clone() - u.clone() * &x[j];
            }
            x[i] = x[i].clone() / &self.lu[i * n + i];
        }
        b[..n].clone_from_slice(&x);
    }
}

/// `y = A x` for a row-major `rows × cols` matrix.
pub fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|i| a[i * cols..(i + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `y = Aᵀ x` for a row-major `rows × cols` matrix.
pub fn matvec_transpose(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; cols];
    for i in 0..rows {
        if x[i] == 0.0 {
            continue;
        }
        for j in 0..cols {
            y[j] += a[i * cols + j] * x[i];
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::Dual;

    #[test]
    fn solves_pivoted_system() {
        let a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0];
        let lu = Lu::factor(3, a.clone()).unwrap();
        let x_true = [1.0, -2.0, 0.5];
        let mut b = matvec(&a, 3, 3, &x_true);
        lu.solve(&mut b);
        for (x, y) in b.iter().zip(x_true) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert_eq!(Lu::factor(2, a).unwrap_err(), SingularMatrix { pivot: 1 });
    }

    #[test]
    fn dual_solve_differentiates_the_solution() {
        // A(s) = [[2+s, 1], [1, 3]], b = [1, 0]; d x / d s by the dual solve
        // against a central difference of the f64 solve.
        let solve = |s: f64| {
            let lu = Lu::factor(2, vec![2.0 + s, 1.0, 1.0, 3.0]).unwrap();
            let mut b = vec![1.0, 0.0];
            lu.solve(&mut b);
            b
        };
        let s = Dual::new(0.3, vec![1.0]);
        let a = vec![s + 2.0, Dual::from(1.0), Dual::from(1.0), Dual::from(3.0)];
        let lu = Lu::factor(2, a).unwrap();
        let mut b = vec![Dual::from(1.0), Dual::from(0.0)];
        lu.solve(&mut b);
        let h = 1e-6;
        let (xp, xm) = (solve(0.3 + h), solve(0.3 - h));
        for i in 0..2 {
            let fd = (xp[i] - xm[i]) / (2.0 * h);
            assert!((b[i].partial(0) - fd).abs() < 1e-8);
        }
    }
}
