//! Tree-structured CRFs: upward/downward belief propagation and max-product.
//!
//! Every non-root node carries the relation tag of the edge to its parent;
//! edge scores are looked up by (relation, parent label, child label). Any
//! subset of nodes can be clamped to fixed labels, which the latent models use
//! to condition on observed nodes.

use crate::error::{CrfError, Result};
use crate::features::{FeatureIndex, Templates};
use crate::instance::TreeInstance;
use crate::logspace::log_sum_exp_iter;
use crate::params::apply_regularizer;

/// Log-domain node and edge scores of one tree under fixed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePotentials {
    num_labels: usize,
    state: Vec<Vec<f64>>,
    /// `[node][parent label * |labels| + child label]`, empty for the root.
    edge: Vec<Vec<f64>>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    post_order: Vec<usize>,
    root: usize,
}

impl TreePotentials {
    pub fn new(index: &FeatureIndex, weights: &[f64], tree: &TreeInstance) -> Result<Self> {
        index.check_weights(weights)?;
        if index.templates() != Templates::Tree {
            return Err(CrfError::TemplateMismatch);
        }
        let width = index.dense_width();
        if tree.dense_width() != width {
            return Err(CrfError::InvalidTree(format!(
                "dense width {} does not match model width {width}",
                tree.dense_width()
            )));
        }
        let l = index.num_labels();
        let n = tree.len();
        let mut state = vec![vec![0.0; l]; n];
        let mut edge = vec![Vec::new(); n];
        for (v, node) in tree.nodes().iter().enumerate() {
            for pid in index.encode_predicates(&node.predicates) {
                for (y, s) in state[v].iter_mut().enumerate() {
                    if let Some(f) = index.state_feature(pid, y) {
                        *s += weights[f];
                    }
                }
            }
            if let Some(x) = &node.dense {
                for (y, s) in state[v].iter_mut().enumerate() {
                    *s += x
                        .iter()
                        .enumerate()
                        .map(|(j, xj)| weights[index.dense_id(y, j)] * xj)
                        .sum::<f64>();
                }
            }
            if tree.parent(v).is_some() {
                edge[v] = match index.edge_table(&node.relation) {
                    Some(table) => table
                        .iter()
                        .map(|f| f.map_or(0.0, |f| weights[f]))
                        .collect(),
                    None => vec![0.0; l * l],
                };
            }
        }
        Ok(Self {
            num_labels: l,
            state,
            edge,
            parent: (0..n).map(|v| tree.parent(v)).collect(),
            children: (0..n).map(|v| tree.children(v).to_vec()).collect(),
            post_order: tree.post_order().to_vec(),
            root: tree.root(),
        })
    }

    pub fn len(&self) -> usize {
        self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn state_score(&self, v: usize, y: usize) -> Result<f64> {
        self.check(v, y)?;
        Ok(self.state[v][y])
    }

    /// Score of the edge from `v` to its parent; 0 for the root.
    pub fn edge_score(&self, v: usize, parent_label: usize, child_label: usize) -> Result<f64> {
        self.check(v, child_label)?;
        self.check(v, parent_label)?;
        Ok(self.edge_at(v, parent_label, child_label))
    }

    /// Adds `delta` to every label's state score at node `v`.
    pub fn shift_node(&mut self, v: usize, delta: f64) {
        for s in &mut self.state[v] {
            *s += delta;
        }
    }

    /// Joint unnormalized log score of a full assignment.
    pub fn assignment_score(&self, labels: &[usize]) -> Result<f64> {
        if labels.len() != self.len() {
            return Err(CrfError::LengthMismatch {
                expected: self.len(),
                got: labels.len(),
            });
        }
        let mut total = 0.0;
        for (v, &y) in labels.iter().enumerate() {
            total += self.state_score(v, y)?;
            if let Some(p) = self.parent[v] {
                total += self.edge_at(v, labels[p], y);
            }
        }
        Ok(total)
    }

    fn check(&self, v: usize, y: usize) -> Result<()> {
        if v >= self.len() {
            return Err(CrfError::PositionOutOfRange {
                position: v,
                len: self.len(),
            });
        }
        if y >= self.num_labels {
            return Err(CrfError::LabelOutOfRange {
                index: y,
                size: self.num_labels,
            });
        }
        Ok(())
    }

    #[inline]
    fn edge_at(&self, v: usize, parent_label: usize, child_label: usize) -> f64 {
        self.edge[v]
            .get(parent_label * self.num_labels + child_label)
            .copied()
            .unwrap_or(0.0)
    }

    /// State scores with clamped nodes restricted to their label.
    fn clamped_state(&self, clamp: Option<&[Option<usize>]>) -> Result<Vec<Vec<f64>>> {
        let mut state = self.state.clone();
        let Some(clamp) = clamp else {
            return Ok(state);
        };
        if clamp.len() != self.len() {
            return Err(CrfError::LengthMismatch {
                expected: self.len(),
                got: clamp.len(),
            });
        }
        for (v, c) in clamp.iter().enumerate() {
            if let Some(c) = *c {
                self.check(v, c)?;
                for (y, s) in state[v].iter_mut().enumerate() {
                    if y != c {
                        *s = f64::NEG_INFINITY;
                    }
                }
            }
        }
        Ok(state)
    }

    /// Upward pass: `alpha[v][y]` sums the subtree of `v`, `msg[c][y]` is the
    /// message child `c` sends to its parent taking label `y`.
    fn upward(&self, state: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let l = self.num_labels;
        let mut alpha = state.to_vec();
        let mut msg = vec![Vec::new(); self.len()];
        for &v in &self.post_order {
            for &c in &self.children[v] {
                for y in 0..l {
                    alpha[v][y] += msg[c][y];
                }
            }
            if self.parent[v].is_some() {
                msg[v] = (0..l)
                    .map(|yp| {
                        log_sum_exp_iter((0..l).map(|y| alpha[v][y] + self.edge_at(v, yp, y)))
                    })
                    .collect();
            }
        }
        (alpha, msg)
    }
}

/// Upward/downward tables and marginals of one tree.
///
/// `edge_marginals[v][parent label][label]` refers to the edge from `v` to its
/// parent and is empty for the root.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeTrellis {
    pub log_z: f64,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub node_marginals: Vec<Vec<f64>>,
    pub edge_marginals: Vec<Vec<Vec<f64>>>,
}

/// `ln Z` of the tree, restricted to assignments agreeing with `clamp`.
pub fn tree_log_partition(pot: &TreePotentials, clamp: Option<&[Option<usize>]>) -> Result<f64> {
    let state = pot.clamped_state(clamp)?;
    let (alpha, _) = pot.upward(&state);
    finite(log_sum_exp_iter(alpha[pot.root].iter().copied()))
}

fn finite(log_z: f64) -> Result<f64> {
    if log_z.is_finite() {
        Ok(log_z)
    } else {
        Err(CrfError::NonFinite("log partition".into()))
    }
}

pub fn tree_upward_downward(
    pot: &TreePotentials,
    clamp: Option<&[Option<usize>]>,
) -> Result<TreeTrellis> {
    let l = pot.num_labels;
    let n = pot.len();
    let state = pot.clamped_state(clamp)?;
    let (alpha, msg) = pot.upward(&state);
    let log_z = finite(log_sum_exp_iter(alpha[pot.root].iter().copied()))?;

    // outside[p][y'] - msg[c][y'] removes c's own contribution from its parent
    let mut beta = vec![vec![0.0; l]; n];
    for &c in pot.post_order.iter().rev() {
        if let Some(p) = pot.parent[c] {
            for y in 0..l {
                beta[c][y] = log_sum_exp_iter(
                    (0..l)
                        .map(|yp| alpha[p][yp] + beta[p][yp] - msg[c][yp] + pot.edge_at(c, yp, y)),
                );
            }
        }
    }

    let node_marginals = (0..n)
        .map(|v| {
            (0..l)
                .map(|y| (alpha[v][y] + beta[v][y] - log_z).exp())
                .collect()
        })
        .collect();
    let mut edge_marginals = vec![Vec::new(); n];
    for c in 0..n {
        if let Some(p) = pot.parent[c] {
            edge_marginals[c] = (0..l)
                .map(|yp| {
                    (0..l)
                        .map(|y| {
                            (alpha[c][y] + pot.edge_at(c, yp, y) + alpha[p][yp] + beta[p][yp]
                                - msg[c][yp]
                                - log_z)
                                .exp()
                        })
                        .collect()
                })
                .collect();
        }
    }
    Ok(TreeTrellis {
        log_z,
        alpha,
        beta,
        node_marginals,
        edge_marginals,
    })
}

/// Highest-scoring assignment agreeing with `clamp`, and its log score.
/// Back-pointers are stored per child and parent label; ties go to the lowest
/// label.
pub fn tree_map_decode(
    pot: &TreePotentials,
    clamp: Option<&[Option<usize>]>,
) -> Result<(Vec<usize>, f64)> {
    let l = pot.num_labels;
    let n = pot.len();
    let mut best = pot.clamped_state(clamp)?;
    let mut back = vec![Vec::new(); n];
    for &v in &pot.post_order {
        for &c in &pot.children[v] {
            let mut choice = vec![0; l];
            for (yp, slot) in choice.iter_mut().enumerate() {
                let mut top = (0, f64::NEG_INFINITY);
                for y in 0..l {
                    let s = best[c][y] + pot.edge_at(c, yp, y);
                    if s > top.1 {
                        top = (y, s);
                    }
                }
                *slot = top.0;
                best[v][yp] += top.1;
            }
            back[c] = choice;
        }
    }
    let mut labels = vec![0; n];
    let mut top = (0, f64::NEG_INFINITY);
    for (y, &s) in best[pot.root].iter().enumerate() {
        if s > top.1 {
            top = (y, s);
        }
    }
    if !top.1.is_finite() {
        return Err(CrfError::NonFinite("max score".into()));
    }
    labels[pot.root] = top.0;
    for &v in pot.post_order.iter().rev() {
        if let Some(p) = pot.parent[v] {
            labels[v] = back[v][labels[p]];
        }
    }
    Ok((labels, top.1))
}

/// Adds `scale` times the feature vector of a full assignment to `out`.
pub fn add_tree_features(
    index: &FeatureIndex,
    tree: &TreeInstance,
    labels: &[usize],
    scale: f64,
    out: &mut [f64],
) {
    for (v, node) in tree.nodes().iter().enumerate() {
        let y = labels[v];
        for pid in index.encode_predicates(&node.predicates) {
            if let Some(f) = index.state_feature(pid, y) {
                out[f] += scale;
            }
        }
        if let Some(x) = &node.dense {
            for (j, xj) in x.iter().enumerate() {
                out[index.dense_id(y, j)] += scale * xj;
            }
        }
        if let Some(p) = tree.parent(v) {
            if let Some(Some(f)) = index
                .edge_table(&node.relation)
                .map(|t| t[labels[p] * index.num_labels() + y])
            {
                out[f] += scale;
            }
        }
    }
}

/// Adds `scale` times the expected feature vector under `trellis` to `out`.
pub fn add_expected_features(
    index: &FeatureIndex,
    tree: &TreeInstance,
    trellis: &TreeTrellis,
    scale: f64,
    out: &mut [f64],
) {
    let l = index.num_labels();
    for (v, node) in tree.nodes().iter().enumerate() {
        let marg = &trellis.node_marginals[v];
        for pid in index.encode_predicates(&node.predicates) {
            for (y, p) in marg.iter().enumerate() {
                if let Some(f) = index.state_feature(pid, y) {
                    out[f] += scale * p;
                }
            }
        }
        if let Some(x) = &node.dense {
            for (y, p) in marg.iter().enumerate() {
                for (j, xj) in x.iter().enumerate() {
                    out[index.dense_id(y, j)] += scale * p * xj;
                }
            }
        }
        if tree.parent(v).is_some() {
            if let Some(table) = index.edge_table(&node.relation) {
                for (yp, row) in trellis.edge_marginals[v].iter().enumerate() {
                    for (y, p) in row.iter().enumerate() {
                        if let Some(f) = table[yp * l + y] {
                            out[f] += scale * p;
                        }
                    }
                }
            }
        }
    }
}

/// Regularized log-likelihood of fully labeled trees and its gradient.
pub fn tree_loglik_gradient(
    index: &FeatureIndex,
    weights: &[f64],
    batch: &[TreeInstance],
    lambda1: f64,
    lambda2: f64,
) -> Result<(f64, Vec<f64>)> {
    index.check_weights(weights)?;
    let mut value = 0.0;
    let mut grad = vec![0.0; index.len()];
    for (m, tree) in batch.iter().enumerate() {
        let gold = tree.fully_observed().ok_or(CrfError::Unlabeled(m))?;
        let pot = TreePotentials::new(index, weights, tree)?;
        let trellis = tree_upward_downward(&pot, None)?;
        value += pot.assignment_score(&gold)? - trellis.log_z;
        add_tree_features(index, tree, &gold, 1.0, &mut grad);
        add_expected_features(index, tree, &trellis, -1.0, &mut grad);
    }
    apply_regularizer(weights, lambda1, lambda2, &mut value, &mut grad);
    Ok((value, grad))
}
