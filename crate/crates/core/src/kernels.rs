//! Impact decay kernels and a grid-spectral test of the positive-type property.
//!
//! A kernel `G: [0, ∞) → [0, ∞)` gives the residual price impact of a unit
//! trade after elapsed time `t`. It is of positive type when the quadratic
//! form `∬ G(|t - s|) a(t) a(s) ds dt` is nonnegative for every rate `a`;
//! otherwise a single trader can make money from its own impact.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Relative floor applied to the largest Gram eigenvalue when no explicit
/// tolerance is given.
pub const DEFAULT_RELATIVE_PSD_TOLERANCE: f64 = 1e-10;
/// Absolute floor used when the whole spectrum is close to zero.
pub const DEFAULT_ABSOLUTE_PSD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawKernel")]
pub enum DecayKernel {
    /// `G(t) = exp(-rho t)`; `rho = 0` is permanent impact.
    Exponential { rho: f64 },
    /// `G(t) = 1`.
    Constant,
    /// `G(t) = (1 + t)^(-delta)`.
    PowerLaw { delta: f64 },
    /// Piecewise-linear interpolation of `(time, value)` samples.
    Tabulated { samples: Vec<[f64; 2]> },
}

// Mirror of `DecayKernel` used only to route deserialization through validation.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawKernel {
    Exponential { rho: f64 },
    Constant,
    PowerLaw { delta: f64 },
    Tabulated { samples: Vec<[f64; 2]> },
}

impl TryFrom<RawKernel> for DecayKernel {
    type Error = Error;

    fn try_from(raw: RawKernel) -> Result<Self> {
        match raw {
            RawKernel::Exponential { rho } => DecayKernel::exponential(rho),
            RawKernel::Constant => Ok(DecayKernel::Constant),
            RawKernel::PowerLaw { delta } => DecayKernel::power_law(delta),
            RawKernel::Tabulated { samples } => DecayKernel::tabulated(samples),
        }
    }
}

impl DecayKernel {
    pub fn exponential(rho: f64) -> Result<Self> {
        if !rho.is_finite() || rho < 0.0 {
            return Err(Error::Domain(format!(
                "exponential decay rate must be finite and >= 0, got {rho}"
            )));
        }
        Ok(DecayKernel::Exponential { rho })
    }

    pub fn power_law(delta: f64) -> Result<Self> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::Domain(format!(
                "power-law exponent must be finite and >= 0, got {delta}"
            )));
        }
        Ok(DecayKernel::PowerLaw { delta })
    }

    /// Samples must start at time 0, have strictly increasing times and
    /// finite nonnegative values.
    pub fn tabulated(samples: Vec<[f64; 2]>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Domain("tabulated kernel needs at least one sample".into()))?;
        if first[0] != 0.0 {
            return Err(Error::Domain(format!(
                "tabulated kernel must start at t = 0, got {}",
                first[0]
            )));
        }
        for pair in samples.windows(2) {
            if pair[1][0].partial_cmp(&pair[0][0]) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Domain(format!(
                    "tabulated kernel times must be strictly increasing ({} then {})",
                    pair[0][0], pair[1][0]
                )));
            }
        }
        if let Some(bad) = samples
            .iter()
            .find(|s| !s[0].is_finite() || !s[1].is_finite() || s[1] < 0.0)
        {
            return Err(Error::Domain(format!(
                "tabulated kernel sample ({}, {}) must be finite with nonnegative value",
                bad[0], bad[1]
            )));
        }
        Ok(DecayKernel::Tabulated { samples })
    }

    /// Evaluates `G(t)`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::Domain(format!(
                "kernel evaluated at negative or NaN time {t}"
            )));
        }
        match self {
            DecayKernel::Exponential { rho } => Ok((-rho * t).exp()),
            DecayKernel::Constant => Ok(1.0),
            DecayKernel::PowerLaw { delta } => Ok((1.0 + t).powf(-delta)),
            DecayKernel::Tabulated { samples } => interpolate(samples, t),
        }
    }

    /// Decay rate when the kernel is exponential.
    pub fn exponential_rate(&self) -> Option<f64> {
        match self {
            DecayKernel::Exponential { rho } => Some(*rho),
            _ => None,
        }
    }
}

fn interpolate(samples: &[[f64; 2]], t: f64) -> Result<f64> {
    let last = samples[samples.len() - 1];
    if t > last[0] {
        return Err(Error::Extrapolation { t, last: last[0] });
    }
    // first index with sample time >= t
    let hi = samples.partition_point(|s| s[0] < t);
    if hi == 0 {
        return Ok(samples[0][1]);
    }
    let [t0, v0] = samples[hi - 1];
    let [t1, v1] = samples[hi];
    if t == t1 {
        return Ok(v1);
    }
    let theta = (t - t0) / (t1 - t0);
    Ok(v0 + theta * (v1 - v0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveTypeReport {
    pub grid_size: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Eigenvalues at or above `-tolerance` count as nonnegative.
    pub tolerance: f64,
    pub is_positive_type: bool,
}

/// Symmetric Gram matrix `K[j][k] = sqrt(w_j w_k) G(|t_j - t_k|)` over the
/// grid's trapezoidal nodes.
pub fn gram_matrix(kernel: &DecayKernel, grid: &Grid) -> Result<Mat<f64>> {
    let m = grid.len();
    let nodes = grid.nodes();
    let weights = grid.weights();
    let mut gram = Mat::<f64>::zeros(m, m);
    for j in 0..m {
        for k in j..m {
            let value = (weights[j] * weights[k]).sqrt() * kernel.eval(nodes[k] - nodes[j])?;
            gram[(j, k)] = value;
            gram[(k, j)] = value;
        }
    }
    Ok(gram)
}

/// Default acceptance floor for a spectrum whose largest eigenvalue is `max_eigenvalue`.
pub fn default_psd_tolerance(max_eigenvalue: f64) -> f64 {
    (DEFAULT_RELATIVE_PSD_TOLERANCE * max_eigenvalue.abs()).max(DEFAULT_ABSOLUTE_PSD_TOLERANCE)
}

/// Tests positive type on a uniform grid of `grid_size` nodes over `[0, horizon]`.
///
/// A positive verdict certifies nonnegativity of the impact quadratic form
/// for every strategy representable on that grid, nothing more. With
/// `tolerance = None` the floor is [`default_psd_tolerance`].
pub fn check_positive_type(
    kernel: &DecayKernel,
    horizon: f64,
    grid_size: usize,
    tolerance: Option<f64>,
) -> Result<PositiveTypeReport> {
    let grid = Grid::uniform(horizon, grid_size)?;
    let gram = gram_matrix(kernel, &grid)?;
    let eigenvalues = gram
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let min_eigenvalue = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eigenvalue = eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !min_eigenvalue.is_finite() || !max_eigenvalue.is_finite() {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let tolerance = match tolerance {
        Some(tol) if tol.is_finite() && tol >= 0.0 => tol,
        Some(tol) => {
            return Err(Error::Domain(format!(
                "tolerance must be finite and >= 0, got {tol}"
            )))
        }
        None => default_psd_tolerance(max_eigenvalue),
    };
    Ok(PositiveTypeReport {
        grid_size,
        min_eigenvalue,
        max_eigenvalue,
        tolerance,
        is_positive_type: min_eigenvalue >= -tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn increasing_kernel() -> DecayKernel {
        DecayKernel::tabulated(vec![[0.0, 0.0], [2.0, 2.0]]).unwrap()
    }

    #[test]
    fn evaluates_closed_forms() {
        assert_eq!(
            DecayKernel::exponential(1.0).unwrap().eval(0.0).unwrap(),
            1.0
        );
        assert_eq!(DecayKernel::Constant.eval(5.0).unwrap(), 1.0);
        let g = DecayKernel::exponential(0.95).unwrap().eval(1.0).unwrap();
        assert!((g - (-0.95f64).exp()).abs() < 1e-16);
        assert!((g - 0.38674).abs() < 1e-5);
        let p = DecayKernel::power_law(0.5).unwrap().eval(3.0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_time() {
        for kernel in [
            DecayKernel::Constant,
            DecayKernel::exponential(1.0).unwrap(),
        ] {
            assert!(matches!(kernel.eval(-1e-3), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn tabulated_interpolates_and_refuses_to_extrapolate() {
        let kernel = DecayKernel::tabulated(vec![[0.0, 1.0], [1.0, 0.5], [3.0, 0.1]]).unwrap();
        assert_eq!(kernel.eval(0.0).unwrap(), 1.0);
        assert!((kernel.eval(0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!((kernel.eval(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((kernel.eval(2.0).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(kernel.eval(3.0).unwrap(), 0.1);
        assert!(matches!(kernel.eval(3.5), Err(Error::Extrapolation { .. })));
    }

    #[test]
    fn tabulated_validation() {
        assert!(DecayKernel::tabulated(vec![]).is_err());
        assert!(DecayKernel::tabulated(vec![[0.1, 1.0]]).is_err());
        assert!(DecayKernel::tabulated(vec![[0.0, 1.0], [0.0, 0.5]]).is_err());
        assert!(DecayKernel::tabulated(vec![[0.0, 1.0], [1.0, -0.5]]).is_err());
        assert!(DecayKernel::exponential(-0.1).is_err());
        assert!(DecayKernel::power_law(f64::NAN).is_err());
    }

    #[test]
    fn json_round_trip_matches_interface() {
        let cases = [
            (
                r#"{"kind":"exponential","rho":0.95}"#,
                DecayKernel::Exponential { rho: 0.95 },
            ),
            (r#"{"kind":"constant"}"#, DecayKernel::Constant),
            (
                r#"{"kind":"power_law","delta":0.5}"#,
                DecayKernel::PowerLaw { delta: 0.5 },
            ),
            (
                r#"{"kind":"tabulated","samples":[[0.0,1.0],[1.0,0.5]]}"#,
                DecayKernel::Tabulated {
                    samples: vec![[0.0, 1.0], [1.0, 0.5]],
                },
            ),
        ];
        for (json, expected) in cases {
            let parsed: DecayKernel = serde_json::from_str(json).unwrap();
            assert_eq!(parsed, expected);
            let again: DecayKernel =
                serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
            assert_eq!(again, expected);
        }
        assert!(serde_json::from_str::<DecayKernel>(r#"{"kind":"exponential","rho":-1}"#).is_err());
        assert!(serde_json::from_str::<DecayKernel>(r#"{"kind":"gaussian"}"#).is_err());
    }

    #[test]
    fn zero_rate_exponential_is_constant() {
        let exp0 = DecayKernel::exponential(0.0).unwrap();
        for k in 0..=1000 {
            let t = k as f64 * 0.01;
            assert!(
                (exp0.eval(t).unwrap() - DecayKernel::Constant.eval(t).unwrap()).abs() <= 1e-15
            );
        }
    }

    #[test]
    fn gram_matrix_is_exactly_symmetric() {
        let grid = Grid::uniform(1.0, 57).unwrap();
        for kernel in [
            DecayKernel::exponential(0.95).unwrap(),
            DecayKernel::power_law(0.4).unwrap(),
            increasing_kernel(),
        ] {
            let gram = gram_matrix(&kernel, &grid).unwrap();
            for j in 0..grid.len() {
                for k in 0..grid.len() {
                    assert_eq!(gram[(j, k)], gram[(k, j)]);
                }
            }
        }
    }

    #[test]
    fn positive_type_verdicts() {
        let exp =
            check_positive_type(&DecayKernel::exponential(0.95).unwrap(), 1.0, 200, None).unwrap();
        assert!(exp.is_positive_type, "{exp:?}");
        let constant = check_positive_type(&DecayKernel::Constant, 1.0, 200, None).unwrap();
        assert!(constant.is_positive_type, "{constant:?}");
        // rank one: a single eigenvalue equal to the total weight
        assert!((constant.max_eigenvalue - 1.0).abs() < 1e-12);
        let increasing = check_positive_type(&increasing_kernel(), 1.0, 200, None).unwrap();
        assert!(!increasing.is_positive_type);
        assert!(increasing.min_eigenvalue < 0.0);
    }

    #[test]
    fn verdict_matches_tolerance_rule() {
        let report = check_positive_type(&increasing_kernel(), 1.0, 20, Some(1e6)).unwrap();
        assert!(report.is_positive_type);
        assert_eq!(report.tolerance, 1e6);
        assert!(check_positive_type(&DecayKernel::Constant, 1.0, 20, Some(-1.0)).is_err());
        assert!(check_positive_type(&DecayKernel::Constant, 1.0, 1, None).is_err());
        assert!(check_positive_type(&DecayKernel::Constant, 0.0, 10, None).is_err());
    }

    #[test]
    fn verdict_survives_grid_refinement() {
        for kernel in [
            DecayKernel::exponential(0.95).unwrap(),
            DecayKernel::Constant,
        ] {
            for m in [25, 50, 100, 200] {
                assert!(
                    check_positive_type(&kernel, 1.0, m, None)
                        .unwrap()
                        .is_positive_type
                );
                assert!(
                    check_positive_type(&kernel, 1.0, 2 * m, None)
                        .unwrap()
                        .is_positive_type
                );
            }
        }
    }

    /// Cyclic Jacobi rotations on a dense symmetric matrix.
    #[allow(clippy::needless_range_loop)]
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).collect()
    }

    #[test]
    fn extreme_eigenvalues_match_jacobi_oracle() {
        for kernel in [
            increasing_kernel(),
            DecayKernel::exponential(0.95).unwrap(),
            DecayKernel::power_law(0.5).unwrap(),
        ] {
            let grid = Grid::uniform(1.0, 24).unwrap();
            let gram = gram_matrix(&kernel, &grid).unwrap();
            let dense = (0..24)
                .map(|i| (0..24).map(|j| gram[(i, j)]).collect())
                .collect();
            let oracle = jacobi_eigenvalues(dense);
            let report = check_positive_type(&kernel, 1.0, 24, None).unwrap();
            let min = oracle.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = oracle.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(
                (report.min_eigenvalue - min).abs() <= 1e-12 * max.abs(),
                "{kernel:?}"
            );
            assert!(
                (report.max_eigenvalue - max).abs() <= 1e-12 * max.abs(),
                "{kernel:?}"
            );
        }
    }
}
