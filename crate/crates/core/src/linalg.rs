//! Dense LU solves with a 1-norm condition estimate attached.

use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;

use crate::error::{Error, Result};

/// Solves whose condition estimate exceeds this are reported as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// Operator 1-norm (largest absolute column sum).
pub fn norm1(a: MatRef<'_, f64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max(a[(i, j)].abs());
        }
    }
    worst
}

pub fn frobenius(a: MatRef<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)] * a[(i, j)];
        }
    }
    acc.sqrt()
}

pub fn column(values: &[f64]) -> Mat<f64> {
    Mat::from_fn(values.len(), 1, |i, _| values[i])
}

pub fn column_to_vec(col: MatRef<'_, f64>) -> Vec<f64> {
    (0..col.nrows()).map(|i| col[(i, 0)]).collect()
}

/// LU factorization with partial pivoting of a square matrix.
pub struct LuSolver {
    lu: PartialPivLu<f64>,
    dim: usize,
    norm1: f64,
}

impl LuSolver {
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Domain(format!(
                "LU of a non-square {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let norm1 = norm1(a);
        if !norm1.is_finite() {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        Ok(LuSolver {
            lu: a.partial_piv_lu(),
            dim: a.nrows(),
            norm1,
        })
    }

    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = rhs.to_owned();
        self.lu.solve_in_place(x.as_mut());
        x
    }

    fn solve_transpose(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = rhs.to_owned();
        self.lu.solve_transpose_in_place(x.as_mut());
        x
    }

    /// Hager's estimate of `||A||_1 ||A^-1||_1`; infinite when the factors
    /// produce non-finite values.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim;
        let mut x = Mat::<f64>::from_fn(n, 1, |_, _| 1.0 / n as f64);
        let mut estimate: f64 = 0.0;
        for _ in 0..5 {
            let y = self.solve(x.as_ref());
            let y_norm: f64 = (0..n).map(|i| y[(i, 0)].abs()).sum();
            if !y_norm.is_finite() {
                return f64::INFINITY;
            }
            estimate = estimate.max(y_norm);
            let signs = Mat::<f64>::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose(signs.as_ref());
            let (mut best, mut best_abs) = (0, 0.0);
            for i in 0..n {
                if z[(i, 0)].abs() > best_abs {
                    best = i;
                    best_abs = z[(i, 0)].abs();
                }
            }
            let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
            if !best_abs.is_finite() {
                return f64::INFINITY;
            }
            if best_abs <= ztx {
                break;
            }
            x = Mat::zeros(n, 1);
            x[(best, 0)] = 1.0;
        }
        self.norm1 * estimate
    }
}

/// Solves `a x = rhs`, failing with [`Error::Singular`] when the estimated
/// condition number exceeds [`MAX_CONDITION`] or the result is not finite.
pub fn solve_checked(
    a: MatRef<'_, f64>,
    rhs: MatRef<'_, f64>,
    context: &str,
) -> Result<(Mat<f64>, f64)> {
    let solver = LuSolver::new(a)?;
    let condition = solver.condition_estimate();
    let x = solver.solve(rhs);
    let finite = (0..x.ncols()).all(|j| (0..x.nrows()).all(|i| x[(i, j)].is_finite()));
    if !finite || condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::Singular {
            context: context.to_string(),
            condition,
        });
    }
    Ok((x, condition))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_estimate_of_diagonal_is_exact() {
        let a = Mat::<f64>::from_fn(4, 4, |i, j| {
            if i == j {
                [1.0, 10.0, 0.1, 2.0][i]
            } else {
                0.0
            }
        });
        let cond = LuSolver::new(a.as_ref()).unwrap().condition_estimate();
        assert!((cond - 100.0).abs() < 1e-10, "{cond}");
    }

    #[test]
    fn condition_estimate_brackets_true_value() {
        // Hilbert matrix of order 6 has 1-norm condition ~2.9e7
        let a = Mat::<f64>::from_fn(6, 6, |i, j| 1.0 / (i + j + 1) as f64);
        let cond = LuSolver::new(a.as_ref()).unwrap().condition_estimate();
        assert!(cond > 1e7 && cond < 1e8, "{cond}");
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = Mat::<f64>::from_fn(3, 3, |_, _| 1.0);
        let b = column(&[1.0, 2.0, 3.0]);
        let err = solve_checked(a.as_ref(), b.as_ref(), "test").unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn solves_small_system() {
        let a = Mat::<f64>::from_fn(2, 2, |i, j| [[2.0, 1.0], [1.0, 3.0]][i][j]);
        let b = column(&[3.0, 5.0]);
        let (x, _) = solve_checked(a.as_ref(), b.as_ref(), "test").unwrap();
        assert!((x[(0, 0)] - 0.8).abs() < 1e-15 && (x[(1, 0)] - 1.4).abs() < 1e-15);
    }
}
