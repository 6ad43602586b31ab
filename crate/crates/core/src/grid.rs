//! Time discretization of `[0, T]` with composite trapezoidal weights.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::DecayKernel;

/// Strictly increasing nodes `0 = t_0 < ... < t_{m-1} = T` with trapezoidal
/// weights `w_k = (h_{k-1} + h_k) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn uniform(horizon: f64, size: usize) -> Result<Self> {
        check_horizon(horizon)?;
        check_size(size)?;
        let last = (size - 1) as f64;
        let nodes = (0..size)
            .map(|k| {
                if k + 1 == size {
                    horizon
                } else {
                    horizon * k as f64 / last
                }
            })
            .collect();
        Self::from_nodes(nodes)
    }

    /// Nodes `T (1 - cos(pi k / (m - 1))) / 2`, clustered at both ends of the
    /// horizon where equilibrium rates develop boundary layers.
    pub fn cosine(horizon: f64, size: usize) -> Result<Self> {
        check_horizon(horizon)?;
        check_size(size)?;
        let last = (size - 1) as f64;
        let nodes = (0..size)
            .map(|k| match k {
                0 => 0.0,
                k if k + 1 == size => horizon,
                k => 0.5 * horizon * (1.0 - (PI * k as f64 / last).cos()),
            })
            .collect();
        Self::from_nodes(nodes)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        check_size(nodes.len())?;
        if nodes[0] != 0.0 {
            return Err(Error::Domain(format!(
                "grid must start at 0, got {}",
                nodes[0]
            )));
        }
        if nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("grid nodes must be finite".into()));
        }
        if let Some(pair) = nodes.windows(2).find(|p| p[1] <= p[0]) {
            return Err(Error::Domain(format!(
                "grid nodes must be strictly increasing ({} then {})",
                pair[0], pair[1]
            )));
        }
        let m = nodes.len();
        let mut weights = vec![0.0; m];
        for k in 0..m - 1 {
            let half = 0.5 * (nodes[k + 1] - nodes[k]);
            weights[k] += half;
            weights[k + 1] += half;
        }
        Ok(Grid { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `t_{k+1} - t_k`.
    pub fn step(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    /// Common spacing if all steps agree to 1e-12 relative.
    pub fn uniform_step(&self) -> Option<f64> {
        let h = self.horizon() / (self.len() - 1) as f64;
        (0..self.len() - 1)
            .all(|k| (self.step(k) - h).abs() <= 1e-12 * h)
            .then_some(h)
    }

    /// Trapezoidal weight of node `j` in the integral over `[0, t_k]`.
    ///
    /// Interior and left-endpoint nodes carry their full grid weight; the
    /// diagonal node carries half of the last step.
    #[inline]
    pub fn causal_weight(&self, k: usize, j: usize) -> f64 {
        debug_assert!(j <= k);
        if j < k {
            self.weights[j]
        } else if k == 0 {
            0.0
        } else {
            0.5 * (self.nodes[k] - self.nodes[k - 1])
        }
    }

    /// Trapezoidal weight of node `j` in the integral over `[t_k, T]`.
    #[inline]
    pub fn anticipation_weight(&self, k: usize, j: usize) -> f64 {
        debug_assert!(j >= k);
        if j > k {
            self.weights[j]
        } else if k + 1 == self.len() {
            0.0
        } else {
            0.5 * (self.nodes[k + 1] - self.nodes[k])
        }
    }

    /// `sum_{j <= k} causal_weight(k, j) G(t_k - t_j) values[j]` at every node.
    pub fn causal_convolution(&self, kernel: &DecayKernel, values: &[f64]) -> Result<Vec<f64>> {
        self.check_len(values.len())?;
        (0..self.len())
            .map(|k| {
                let mut acc = 0.0;
                for (j, v) in values.iter().enumerate().take(k + 1) {
                    acc +=
                        self.causal_weight(k, j) * kernel.eval(self.nodes[k] - self.nodes[j])? * v;
                }
                Ok(acc)
            })
            .collect()
    }

    /// Trapezoidal `int_0^{t_k} values` at every node.
    pub fn cumulative_integral(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_len(values.len())?;
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..self.len() {
            acc += 0.5 * (self.nodes[k] - self.nodes[k - 1]) * (values[k - 1] + values[k]);
            out.push(acc);
        }
        Ok(out)
    }

    /// Trapezoidal `int_0^T values`.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        self.check_len(values.len())?;
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::GridMismatch(format!(
                "{len} samples on a grid of {} nodes",
                self.len()
            )));
        }
        Ok(())
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!(
            "horizon must be finite and > 0, got {horizon}"
        )));
    }
    Ok(())
}

fn check_size(size: usize) -> Result<()> {
    if size < 2 {
        return Err(Error::Domain(format!(
            "grid needs at least 2 nodes, got {size}"
        )));
    }
    Ok(())
}
