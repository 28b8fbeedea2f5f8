//! First-order and higher-order linear-chain CRFs.
//!
//! A chain of Markov order `K` runs its recurrences over label contexts: the
//! `K` most recent labels, with a boundary context (printed `<s>`) padding
//! positions before the start of the sequence. Contexts are encoded as base
//! `|labels| + 1` integers, oldest slot most significant, the boundary taking
//! the digit `|labels|`. For `K = 1` context `y` is simply label `y` and the
//! boundary context is `|labels|`.

mod decode;
mod trellis;

pub use decode::{viterbi, viterbi_first_order, viterbi_higher_order};
pub use trellis::{
    forward_backward, forward_backward_first_order, forward_backward_higher_order, log_partition,
    TrellisResult,
};

use std::collections::HashMap;

use crate::error::{CrfError, Result};
use crate::features::{FeatureIndex, Templates};
use crate::instance::ChainInstance;
use crate::params::apply_regularizer;

/// A chain with its predicates resolved to predicate ids of one index.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedChain {
    pub predicates: Vec<Vec<usize>>,
    pub gold: Vec<Option<usize>>,
}

impl EncodedChain {
    pub fn new(index: &FeatureIndex, instance: &ChainInstance) -> Self {
        Self {
            predicates: instance
                .observations()
                .iter()
                .map(|obs| index.encode_predicates(obs))
                .collect(),
            gold: instance.gold().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }
}

/// Log-domain state and transition scores of one chain under fixed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPotentials {
    num_labels: usize,
    order: usize,
    len: usize,
    state: Vec<f64>,
    trans: Vec<f64>,
}

impl ChainPotentials {
    pub fn new(index: &FeatureIndex, weights: &[f64], chain: &EncodedChain) -> Result<Self> {
        index.check_weights(weights)?;
        if !matches!(index.templates(), Templates::Chain { .. }) {
            return Err(CrfError::TemplateMismatch);
        }
        let num_labels = index.num_labels();
        let order = index.order();
        let mut state = vec![0.0; chain.len() * num_labels];
        for (i, preds) in chain.predicates.iter().enumerate() {
            let row = &mut state[i * num_labels..(i + 1) * num_labels];
            for &pid in preds {
                for (y, s) in row.iter_mut().enumerate() {
                    if let Some(f) = index.state_feature(pid, y) {
                        *s += weights[f];
                    }
                }
            }
        }
        let base = num_labels + 1;
        let mut trans = vec![0.0; base.pow(order as u32 + 1)];
        for (context, f) in index.chain_transitions() {
            trans[context_code(context, num_labels)] += weights[*f];
        }
        Ok(Self {
            num_labels,
            order,
            len: chain.len(),
            state,
            trans,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of context codes, `(|labels| + 1)^order`.
    pub fn num_contexts(&self) -> usize {
        (self.num_labels + 1).pow(self.order as u32)
    }

    /// Context code of the all-boundary context.
    pub fn boundary_context(&self) -> usize {
        self.num_contexts() - 1
    }

    /// Σ θ_s f_s(y, x, i) for position `i` under label `y`.
    pub fn state_score(&self, i: usize, y: usize) -> Result<f64> {
        if i >= self.len {
            return Err(CrfError::PositionOutOfRange {
                position: i,
                len: self.len,
            });
        }
        if y >= self.num_labels {
            return Err(CrfError::LabelOutOfRange {
                index: y,
                size: self.num_labels,
            });
        }
        Ok(self.state[i * self.num_labels + y])
    }

    /// Σ θ_t f_t for entering label `y` from the `order` previous slots
    /// (oldest first, `None` for the boundary).
    pub fn transition_score(&self, previous: &[Option<usize>], y: usize) -> Result<f64> {
        if previous.len() != self.order {
            return Err(CrfError::LengthMismatch {
                expected: self.order,
                got: previous.len(),
            });
        }
        for l in previous.iter().flatten().chain(std::iter::once(&y)) {
            if *l >= self.num_labels {
                return Err(CrfError::LabelOutOfRange {
                    index: *l,
                    size: self.num_labels,
                });
            }
        }
        let mut context = previous.to_vec();
        context.push(Some(y));
        Ok(self.trans[context_code(&context, self.num_labels)])
    }

    /// Adds `delta` to every label's state score at position `i`.
    pub fn shift_position(&mut self, i: usize, delta: f64) {
        for s in &mut self.state[i * self.num_labels..(i + 1) * self.num_labels] {
            *s += delta;
        }
    }

    /// Unnormalized log score of a complete label sequence.
    pub fn path_score(&self, labels: &[usize]) -> Result<f64> {
        if labels.len() != self.len {
            return Err(CrfError::LengthMismatch {
                expected: self.len,
                got: labels.len(),
            });
        }
        let base = self.num_labels + 1;
        let contexts = self.num_contexts();
        let mut prev = self.boundary_context();
        let mut score = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y >= self.num_labels {
                return Err(CrfError::LabelOutOfRange {
                    index: y,
                    size: self.num_labels,
                });
            }
            let gram = prev * base + y;
            score += self.trans[gram] + self.state[i * self.num_labels + y];
            prev = gram % contexts;
        }
        Ok(score)
    }

    #[inline]
    pub(crate) fn state_at(&self, i: usize, y: usize) -> f64 {
        self.state[i * self.num_labels + y]
    }

    #[inline]
    pub(crate) fn trans_at(&self, gram: usize) -> f64 {
        self.trans[gram]
    }
}

/// Base `|labels| + 1` code of a label context, oldest slot most significant.
pub(crate) fn context_code(context: &[Option<usize>], num_labels: usize) -> usize {
    context.iter().fold(0, |acc, slot| {
        acc * (num_labels + 1) + slot.unwrap_or(num_labels)
    })
}

/// `ln p(y | x) = score(y) − ln Z`.
pub fn sequence_logprob(potentials: &ChainPotentials, labels: &[usize]) -> Result<f64> {
    let score = potentials.path_score(labels)?;
    Ok(score - log_partition(potentials)?)
}

/// Regularized conditional log-likelihood of fully labeled chains and its
/// gradient (empirical minus expected feature counts, minus the regularizer
/// derivative). Instances are reduced in batch order.
pub fn loglik_gradient(
    index: &FeatureIndex,
    weights: &[f64],
    batch: &[EncodedChain],
    lambda1: f64,
    lambda2: f64,
) -> Result<(f64, Vec<f64>)> {
    index.check_weights(weights)?;
    let num_labels = index.num_labels();
    let base = num_labels + 1;
    let gram_ids: HashMap<usize, usize> = index
        .chain_transitions()
        .iter()
        .map(|(context, f)| (context_code(context, num_labels), *f))
        .collect();

    let mut value = 0.0;
    let mut grad = vec![0.0; index.len()];
    for (m, chain) in batch.iter().enumerate() {
        let gold: Vec<usize> = chain
            .gold
            .iter()
            .copied()
            .collect::<Option<_>>()
            .ok_or(CrfError::Unlabeled(m))?;
        let pot = ChainPotentials::new(index, weights, chain)?;
        let trellis = forward_backward(&pot)?;
        value += pot.path_score(&gold)? - trellis.log_z;

        let contexts = pot.num_contexts();
        let mut prev = pot.boundary_context();
        for (i, &y) in gold.iter().enumerate() {
            for &pid in &chain.predicates[i] {
                if let Some(f) = index.state_feature(pid, y) {
                    grad[f] += 1.0;
                }
            }
            let gram = prev * base + y;
            if let Some(&f) = gram_ids.get(&gram) {
                grad[f] += 1.0;
            }
            prev = gram % contexts;
        }

        for (i, preds) in chain.predicates.iter().enumerate() {
            for (y, &p) in trellis.state_marginals[i].iter().enumerate() {
                for &pid in preds {
                    if let Some(f) = index.state_feature(pid, y) {
                        grad[f] -= p;
                    }
                }
            }
        }
        for (gram, &f) in &gram_ids {
            let (prev, y) = (gram / base, gram % base);
            let expected: f64 = trellis
                .transition_marginals
                .iter()
                .map(|per_pos| per_pos[prev][y])
                .sum();
            grad[f] -= expected;
        }
    }
    apply_regularizer(weights, lambda1, lambda2, &mut value, &mut grad);
    Ok((value, grad))
}

#[cfg(test)]
mod tests;
