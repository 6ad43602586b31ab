//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants (orders 3 to 13), following Higham's 2005 selection rule.

use faer::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{norm1, LuSolver};

/// Largest 1-norm for which the order-`m` approximant is accurate to unit
/// roundoff in double precision.
const THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
    (13, 5.371920351148152),
];

fn pade_coefficients(order: usize) -> Vec<f64> {
    let m = order as f64;
    let mut b = vec![1.0];
    for j in 0..order {
        let jf = j as f64;
        b.push(b[j] * (m - jf) / ((jf + 1.0) * (2.0 * m - jf)));
    }
    b
}

/// `r_m(A) = q_m(A)^{-1} p_m(A)` with `p_m(A) = V + U`, `q_m(A) = V - U`.
fn pade(a: MatRef<'_, f64>, order: usize) -> Result<Mat<f64>> {
    let n = a.nrows();
    let b = pade_coefficients(order);
    let a2 = a * a;
    let mut power = Mat::<f64>::identity(n, n);
    let mut odd = Mat::<f64>::zeros(n, n);
    let mut even = Mat::<f64>::zeros(n, n);
    for j in 0..=order / 2 {
        if j > 0 {
            power = &power * &a2;
        }
        even += Scale(b[2 * j]) * &power;
        if 2 * j < order {
            odd += Scale(b[2 * j + 1]) * &power;
        }
    }
    let u = a * &odd;
    let numerator = &even + &u;
    let denominator = &even - &u;
    Ok(LuSolver::new(denominator.as_ref())?.solve(numerator.as_ref()))
}

pub fn matrix_exponential(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Domain(format!(
            "exponential of a non-square {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    let norm = norm1(a);
    if !norm.is_finite() || (0..a.ncols()).any(|j| (0..a.nrows()).any(|i| !a[(i, j)].is_finite())) {
        return Err(Error::NonFinite("matrix exponential argument".into()));
    }
    for &(order, theta) in &THETA[..4] {
        if norm <= theta {
            return pade(a, order);
        }
    }
    let theta13 = THETA[4].1;
    let squarings = if norm > theta13 {
        (norm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = Scale(0.5f64.powi(squarings)) * a;
    let mut result = pade(scaled.as_ref(), 13)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if (0..result.ncols()).any(|j| (0..result.nrows()).any(|i| !result[(i, j)].is_finite())) {
        return Err(Error::NonFinite("matrix exponential overflowed".into()));
    }
    Ok(result)
}
