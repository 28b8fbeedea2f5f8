use super::ChainPotentials;
use crate::error::{CrfError, Result};
use crate::logspace::{log_sum_exp, log_sum_exp_iter};

/// Forward/backward tables, partition function and marginals of one chain.
///
/// `alpha` and `beta` are indexed `[position][context]`;
/// `state_marginals` `[position][label]`; `transition_marginals`
/// `[position][previous context][label]`, where position 0 holds the
/// transition out of the boundary context.
#[derive(Debug, Clone, PartialEq)]
pub struct TrellisResult {
    pub log_z: f64,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub state_marginals: Vec<Vec<f64>>,
    pub transition_marginals: Vec<Vec<Vec<f64>>>,
}

/// Dispatches to the dedicated first-order recurrences when `order == 1`.
pub fn forward_backward(pot: &ChainPotentials) -> Result<TrellisResult> {
    if pot.order() == 1 {
        forward_backward_first_order(pot)
    } else {
        forward_backward_higher_order(pot)
    }
}

/// `ln Z` from the forward pass alone.
pub fn log_partition(pot: &ChainPotentials) -> Result<f64> {
    if pot.is_empty() {
        return Err(CrfError::EmptyInstance);
    }
    let alpha = if pot.order() == 1 {
        forward_first_order(pot)
    } else {
        forward_higher_order(pot)
    };
    finite_log_z(log_sum_exp(alpha.last().unwrap()))
}

fn finite_log_z(log_z: f64) -> Result<f64> {
    if log_z.is_finite() {
        Ok(log_z)
    } else {
        Err(CrfError::NonFinite("log partition".into()))
    }
}

fn forward_first_order(pot: &ChainPotentials) -> Vec<Vec<f64>> {
    let (n, l) = (pot.len(), pot.num_labels());
    let base = l + 1;
    let mut alpha = vec![vec![f64::NEG_INFINITY; base]; n];
    for y in 0..l {
        alpha[0][y] = pot.trans_at(l * base + y) + pot.state_at(0, y);
    }
    for i in 1..n {
        for y in 0..l {
            let prev = &alpha[i - 1];
            alpha[i][y] = log_sum_exp_iter((0..l).map(|yp| prev[yp] + pot.trans_at(yp * base + y)))
                + pot.state_at(i, y);
        }
    }
    alpha
}

/// Forward-backward over single labels.
pub fn forward_backward_first_order(pot: &ChainPotentials) -> Result<TrellisResult> {
    if pot.is_empty() {
        return Err(CrfError::EmptyInstance);
    }
    let (n, l) = (pot.len(), pot.num_labels());
    let base = l + 1;
    let alpha = forward_first_order(pot);
    let log_z = finite_log_z(log_sum_exp(&alpha[n - 1]))?;

    let mut beta = vec![vec![0.0; base]; n];
    for i in (0..n - 1).rev() {
        for yp in 0..base {
            let next = &beta[i + 1];
            beta[i][yp] = log_sum_exp_iter(
                (0..l).map(|y| pot.trans_at(yp * base + y) + pot.state_at(i + 1, y) + next[y]),
            );
        }
    }

    let state_marginals = (0..n)
        .map(|i| {
            (0..l)
                .map(|y| (alpha[i][y] + beta[i][y] - log_z).exp())
                .collect()
        })
        .collect();
    let mut transition_marginals = vec![vec![vec![0.0; l]; base]; n];
    for y in 0..l {
        transition_marginals[0][l][y] =
            (pot.trans_at(l * base + y) + pot.state_at(0, y) + beta[0][y] - log_z).exp();
    }
    for i in 1..n {
        for yp in 0..l {
            for y in 0..l {
                transition_marginals[i][yp][y] = (alpha[i - 1][yp]
                    + pot.trans_at(yp * base + y)
                    + pot.state_at(i, y)
                    + beta[i][y]
                    - log_z)
                    .exp();
            }
        }
    }
    Ok(TrellisResult {
        log_z,
        alpha,
        beta,
        state_marginals,
        transition_marginals,
    })
}

fn forward_higher_order(pot: &ChainPotentials) -> Vec<Vec<f64>> {
    let (n, l) = (pot.len(), pot.num_labels());
    let base = l + 1;
    let contexts = pot.num_contexts();
    let shift = contexts / base;
    let boundary = pot.boundary_context();
    let mut alpha = vec![vec![f64::NEG_INFINITY; contexts]; n];
    for y in 0..l {
        let gram = boundary * base + y;
        alpha[0][gram % contexts] = pot.trans_at(gram) + pot.state_at(0, y);
    }
    for i in 1..n {
        for c in 0..contexts {
            let y = c % base;
            if y == l {
                continue;
            }
            // predecessors share the suffix c / base and differ in their oldest slot
            let suffix = c / base;
            let prev = &alpha[i - 1];
            let total = log_sum_exp_iter((0..base).map(|x| {
                let p = x * shift + suffix;
                prev[p] + pot.trans_at(p * base + y)
            }));
            alpha[i][c] = total + pot.state_at(i, y);
        }
    }
    alpha
}

/// Forward-backward over label `order`-tuples: each context only sums over
/// predecessors whose newest slots match its oldest ones.
pub fn forward_backward_higher_order(pot: &ChainPotentials) -> Result<TrellisResult> {
    if pot.is_empty() {
        return Err(CrfError::EmptyInstance);
    }
    let (n, l) = (pot.len(), pot.num_labels());
    let base = l + 1;
    let contexts = pot.num_contexts();
    let boundary = pot.boundary_context();
    let alpha = forward_higher_order(pot);
    let log_z = finite_log_z(log_sum_exp(&alpha[n - 1]))?;

    let mut beta = vec![vec![0.0; contexts]; n];
    for i in (0..n - 1).rev() {
        for p in 0..contexts {
            let next = &beta[i + 1];
            beta[i][p] = log_sum_exp_iter((0..l).map(|y| {
                let gram = p * base + y;
                pot.trans_at(gram) + pot.state_at(i + 1, y) + next[gram % contexts]
            }));
        }
    }

    let mut state_marginals = vec![vec![0.0; l]; n];
    for i in 0..n {
        for c in 0..contexts {
            let y = c % base;
            if y < l && alpha[i][c] > f64::NEG_INFINITY {
                state_marginals[i][y] += (alpha[i][c] + beta[i][c] - log_z).exp();
            }
        }
    }
    let mut transition_marginals = vec![vec![vec![0.0; l]; contexts]; n];
    for y in 0..l {
        let gram = boundary * base + y;
        transition_marginals[0][boundary][y] =
            (pot.trans_at(gram) + pot.state_at(0, y) + beta[0][gram % contexts] - log_z).exp();
    }
    for i in 1..n {
        for p in 0..contexts {
            if alpha[i - 1][p] == f64::NEG_INFINITY {
                continue;
            }
            for y in 0..l {
                let gram = p * base + y;
                transition_marginals[i][p][y] = (alpha[i - 1][p]
                    + pot.trans_at(gram)
                    + pot.state_at(i, y)
                    + beta[i][gram % contexts]
                    - log_z)
                    .exp();
            }
        }
    }
    Ok(TrellisResult {
        log_z,
        alpha,
        beta,
        state_marginals,
        transition_marginals,
    })
}
