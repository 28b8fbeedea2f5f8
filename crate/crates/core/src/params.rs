use crate::error::{CrfError, Result};
use crate::features::FeatureIndex;

/// Dense weights aligned with a [`FeatureIndex`], plus regularization strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    weights: Vec<f64>,
    lambda1: f64,
    lambda2: f64,
}

impl ParameterVector {
    pub fn zeros(index: &FeatureIndex, lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::new(vec![0.0; index.len()], index, lambda1, lambda2)
    }

    pub fn new(
        weights: Vec<f64>,
        index: &FeatureIndex,
        lambda1: f64,
        lambda2: f64,
    ) -> Result<Self> {
        index.check_weights(&weights)?;
        if !(lambda1.is_finite() && lambda1 >= 0.0 && lambda2.is_finite() && lambda2 >= 0.0) {
            return Err(CrfError::InvalidConfig(
                "regularization strengths must be finite and non-negative".into(),
            ));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(CrfError::NonFinite(format!("weight {i}")));
        }
        Ok(Self {
            weights,
            lambda1,
            lambda2,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }
}

/// Subtracts `λ1‖θ‖₁ + λ2‖θ‖₂²` from an ascent objective and its gradient.
/// The L1 subgradient at zero is taken as zero.
pub fn apply_regularizer(
    weights: &[f64],
    lambda1: f64,
    lambda2: f64,
    value: &mut f64,
    grad: &mut [f64],
) {
    for (w, g) in weights.iter().zip(grad.iter_mut()) {
        *value -= lambda1 * w.abs() + lambda2 * w * w;
        let sign = if *w > 0.0 {
            1.0
        } else if *w < 0.0 {
            -1.0
        } else {
            0.0
        };
        *g -= lambda1 * sign + 2.0 * lambda2 * w;
    }
}
