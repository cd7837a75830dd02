//! Fixed quadrature grids over the latent ability with standard-normal
//! prior mass.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid<S> {
    nodes: Vec<S>,
    weights: Vec<S>,
}

impl<S: Scalar> QuadratureGrid<S> {
    /// Validates strictly increasing nodes and positive weights summing to 1
    /// (within 1e-8; the stored weights are renormalized to sum exactly).
    pub fn new(nodes: Vec<S>, weights: Vec<S>) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "grid needs ≥ 2 aligned nodes/weights, got {}/{}",
                nodes.len(),
                weights.len()
            )));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(
                "grid nodes must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > S::zero()) || !w.is_finite()) {
            return Err(Error::InvalidInput("grid weights must be positive".into()));
        }
        let total: S = weights.iter().cloned().sum();
        if (total - S::one()).abs() > S::cast(1e-8) {
            return Err(Error::InvalidInput(format!(
                "grid weights must sum to 1, got {total}"
            )));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(QuadratureGrid { nodes, weights })
    }

    /// Equally spaced nodes on [lo, hi] with normalized standard-normal mass.
    pub fn standard_normal(n_nodes: usize, lo: S, hi: S) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::InvalidInput("need at least 2 nodes".into()));
        }
        if !(lo < hi) {
            return Err(Error::InvalidInput("need lo < hi".into()));
        }
        let step = (hi - lo) / S::cast_usize(n_nodes - 1);
        let nodes: Vec<S> = (0..n_nodes).map(|t| lo + step * S::cast_usize(t)).collect();
        let half = S::cast(0.5);
        let raw: Vec<S> = nodes.iter().map(|&x| (-half * x * x).exp()).collect();
        let total: S = raw.iter().cloned().sum();
        let weights = raw.into_iter().map(|w| w / total).collect();
        Ok(QuadratureGrid { nodes, weights })
    }

    /// The fitting default: 61 equally spaced nodes on [−6, 6].
    pub fn default_ability_grid() -> Self {
        Self::standard_normal(61, S::cast(-6.0), S::cast(6.0)).expect("valid default grid")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn log_weights(&self) -> Vec<S> {
        self.weights.iter().map(|&w| w.ln()).collect()
    }
}
