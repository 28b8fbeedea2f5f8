//! Batch gradient ascent with backtracking line search.

use crate::error::{CrfError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_epochs: usize,
    /// Relative objective improvement below which iteration stops.
    pub tol: f64,
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            tol: 1e-8,
            initial_step: 1.0,
            min_step: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub epochs: usize,
    /// Objective after each accepted step, starting with the value at `θ0`.
    pub trace: Vec<f64>,
}

/// Maximizes `objective`, which returns a value and its gradient (already
/// including any regularization).
///
/// Each epoch takes one step along the gradient, halving the step until the
/// objective improves and doubling it again after an accepted step. Stops
/// when the relative improvement drops below `tol`, after `max_epochs` steps,
/// or when no step above `min_step` improves; returns the best weights seen.
pub fn fit<F>(mut objective: F, theta0: Vec<f64>, config: &FitConfig) -> Result<FitResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(config.initial_step > 0.0 && config.min_step > 0.0 && config.tol >= 0.0) {
        return Err(CrfError::InvalidConfig(
            "step sizes must be positive and tol non-negative".into(),
        ));
    }
    let mut theta = theta0;
    let (mut value, mut grad) = objective(&theta)?;
    if !value.is_finite() {
        return Err(CrfError::NonFinite("objective at initial weights".into()));
    }
    check_len(&theta, &grad)?;
    let mut step = config.initial_step;
    let mut trace = vec![value];
    let mut epochs = 0;
    while epochs < config.max_epochs {
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let mut accepted = None;
        while step >= config.min_step {
            let candidate: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + step * g).collect();
            let (v, g) = objective(&candidate)?;
            if v.is_finite() && v > value {
                check_len(&candidate, &g)?;
                accepted = Some((candidate, v, g));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, v, g)) = accepted else {
            break;
        };
        epochs += 1;
        let improvement = (v - value) / value.abs().max(1.0);
        theta = candidate;
        value = v;
        grad = g;
        trace.push(value);
        step *= 2.0;
        if improvement < config.tol {
            break;
        }
    }
    Ok(FitResult {
        weights: theta,
        objective: value,
        epochs,
        trace,
    })
}

fn check_len(theta: &[f64], grad: &[f64]) -> Result<()> {
    if theta.len() != grad.len() {
        return Err(CrfError::ParameterMismatch {
            expected: theta.len(),
            got: grad.len(),
        });
    }
    Ok(())
}
