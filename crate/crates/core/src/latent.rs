//! Partially observed tree CRFs trained from root labels alone.
//!
//! Both modes compare the correct root label against the most likely wrong
//! one. [`LatentMode::Lcrf`] scores a root label by its best completion of the
//! hidden nodes and minimizes a regularized margin objective;
//! [`LatentMode::Lmcrf`] scores it by summing over completions and maximizes
//! the log-ratio of the two marginal masses.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CrfError, Result};
use crate::features::FeatureIndex;
use crate::instance::TreeInstance;
use crate::tree::{
    add_expected_features, add_tree_features, tree_log_partition, tree_map_decode,
    tree_upward_downward, TreePotentials,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    Lcrf,
    Lmcrf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentObjectiveConfig {
    pub mode: LatentMode,
    pub epochs: usize,
    /// Initial step size; epoch `t` uses `eta0 / (1 + t)`.
    pub eta0: f64,
    /// Coefficient of `½‖θ‖²`.
    pub reg: f64,
    /// Relative objective change below which training stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LatentObjectiveConfig {
    fn default() -> Self {
        Self::for_mode(LatentMode::Lcrf)
    }
}

impl LatentObjectiveConfig {
    /// Defaults for `mode`.
    pub fn for_mode(mode: LatentMode) -> Self {
        let eta0 = match mode {
            LatentMode::Lcrf => 0.002,
            LatentMode::Lmcrf => 0.1,
        };
        Self {
            mode,
            epochs: 1000,
            eta0,
            reg: 1e-3,
            tol: 1e-6,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(CrfError::InvalidConfig("epochs must be at least 1".into()));
        }
        for (name, v) in [("eta0", self.eta0), ("reg", self.reg), ("tol", self.tol)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CrfError::InvalidConfig(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

fn clamp_with_root(tree: &TreeInstance, root_label: usize) -> Vec<Option<usize>> {
    let mut clamp = tree.observed().to_vec();
    clamp[tree.root()] = Some(root_label);
    clamp
}

fn check_root_label(index: &FeatureIndex, root_label: usize) -> Result<()> {
    if root_label >= index.num_labels() {
        return Err(CrfError::LabelOutOfRange {
            index: root_label,
            size: index.num_labels(),
        });
    }
    Ok(())
}

/// Best completion with observed nodes clamped and the root set to `root_label`.
pub fn constrained_map(
    index: &FeatureIndex,
    weights: &[f64],
    tree: &TreeInstance,
    root_label: usize,
) -> Result<(Vec<usize>, f64)> {
    check_root_label(index, root_label)?;
    let pot = TreePotentials::new(index, weights, tree)?;
    tree_map_decode(&pot, Some(&clamp_with_root(tree, root_label)))
}

/// Log of the summed exponentiated scores of all completions with observed
/// nodes clamped and the root set to `root_label`.
pub fn constrained_log_partition(
    index: &FeatureIndex,
    weights: &[f64],
    tree: &TreeInstance,
    root_label: usize,
) -> Result<f64> {
    check_root_label(index, root_label)?;
    let pot = TreePotentials::new(index, weights, tree)?;
    tree_log_partition(&pot, Some(&clamp_with_root(tree, root_label)))
}

fn observed_root(tree: &TreeInstance, m: usize) -> Result<usize> {
    tree.observed()[tree.root()].ok_or(CrfError::UnobservedRoot(m))
}

/// Index and value of the largest score among labels other than `skip`,
/// ties to the lowest label.
fn best_wrong(scores: &[f64], skip: usize) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (y, &s) in scores.iter().enumerate() {
        if y != skip && (best.0 == usize::MAX || s > best.1) {
            best = (y, s);
        }
    }
    best
}

/// `½c‖θ‖² − Σ θ·(f(y) − f(y'))` and a subgradient, where `y` is the best
/// completion under the correct root and `y'` the best assignment with a
/// wrong root.
pub fn lcrf_loss_subgradient(
    index: &FeatureIndex,
    weights: &[f64],
    batch: &[TreeInstance],
    reg: f64,
) -> Result<(f64, Vec<f64>)> {
    index.check_weights(weights)?;
    if index.num_labels() < 2 {
        return Err(CrfError::SingleLabel);
    }
    let mut value = 0.5 * reg * weights.iter().map(|w| w * w).sum::<f64>();
    let mut grad: Vec<f64> = weights.iter().map(|w| reg * w).collect();
    for (m, tree) in batch.iter().enumerate() {
        let root = observed_root(tree, m)?;
        let pot = TreePotentials::new(index, weights, tree)?;
        let decodes = (0..index.num_labels())
            .map(|y| tree_map_decode(&pot, Some(&clamp_with_root(tree, y))))
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<f64> = decodes.iter().map(|d| d.1).collect();
        let (wrong, wrong_score) = best_wrong(&scores, root);
        value -= scores[root] - wrong_score;
        add_tree_features(index, tree, &decodes[root].0, -1.0, &mut grad);
        add_tree_features(index, tree, &decodes[wrong].0, 1.0, &mut grad);
    }
    Ok((value, grad))
}

/// `Σ [ln Z(correct root) − ln Z(best wrong root)] − ½c‖θ‖²` and its gradient.
pub fn lmcrf_objective_gradient(
    index: &FeatureIndex,
    weights: &[f64],
    batch: &[TreeInstance],
    reg: f64,
) -> Result<(f64, Vec<f64>)> {
    index.check_weights(weights)?;
    if index.num_labels() < 2 {
        return Err(CrfError::SingleLabel);
    }
    let mut value = -0.5 * reg * weights.iter().map(|w| w * w).sum::<f64>();
    let mut grad: Vec<f64> = weights.iter().map(|w| -reg * w).collect();
    for (m, tree) in batch.iter().enumerate() {
        let root = observed_root(tree, m)?;
        let pot = TreePotentials::new(index, weights, tree)?;
        let log_zs = (0..index.num_labels())
            .map(|y| tree_log_partition(&pot, Some(&clamp_with_root(tree, y))))
            .collect::<Result<Vec<_>>>()?;
        let (wrong, wrong_z) = best_wrong(&log_zs, root);
        value += log_zs[root] - wrong_z;
        let correct = tree_upward_downward(&pot, Some(&clamp_with_root(tree, root)))?;
        add_expected_features(index, tree, &correct, 1.0, &mut grad);
        let wrong = tree_upward_downward(&pot, Some(&clamp_with_root(tree, wrong)))?;
        add_expected_features(index, tree, &wrong, -1.0, &mut grad);
    }
    Ok((value, grad))
}

/// Root label with the best constrained score: the best completion for
/// [`LatentMode::Lcrf`], the summed completions for [`LatentMode::Lmcrf`].
/// Observed non-root nodes stay clamped; ties go to the lowest label.
pub fn predict_root(
    index: &FeatureIndex,
    weights: &[f64],
    tree: &TreeInstance,
    mode: LatentMode,
) -> Result<usize> {
    let pot = TreePotentials::new(index, weights, tree)?;
    let mut best = (0, f64::NEG_INFINITY);
    for y in 0..index.num_labels() {
        let clamp = clamp_with_root(tree, y);
        let s = match mode {
            LatentMode::Lcrf => tree_map_decode(&pot, Some(&clamp))?.1,
            LatentMode::Lmcrf => tree_log_partition(&pot, Some(&clamp))?,
        };
        if s > best.1 {
            best = (y, s);
        }
    }
    Ok(best.0)
}

/// Fraction of trees whose observed root label `predict_root` recovers.
pub fn root_accuracy(
    index: &FeatureIndex,
    weights: &[f64],
    trees: &[TreeInstance],
    mode: LatentMode,
) -> Result<f64> {
    if trees.is_empty() {
        return Err(CrfError::EmptyCorpus);
    }
    let mut correct = 0;
    for (m, tree) in trees.iter().enumerate() {
        if predict_root(index, weights, tree, mode)? == observed_root(tree, m)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / trees.len() as f64)
}

/// Result of [`train_latent`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTraining {
    pub weights: Vec<f64>,
    /// Full-corpus objective of the averaged weights after each epoch.
    pub objective_trace: Vec<f64>,
    pub epochs: usize,
    pub dev_accuracy: Option<f64>,
}

/// Starting point: zero, except the dense block is the identity where it has
/// a column per label, so each label initially prefers its own dense score.
pub fn initial_weights(index: &FeatureIndex) -> Vec<f64> {
    let mut w = vec![0.0; index.len()];
    if index.dense_width() >= index.num_labels() {
        for y in 0..index.num_labels() {
            w[index.dense_id(y, y)] = 1.0;
        }
    }
    w
}

fn objective(
    index: &FeatureIndex,
    weights: &[f64],
    batch: &[TreeInstance],
    config: &LatentObjectiveConfig,
) -> Result<f64> {
    Ok(match config.mode {
        LatentMode::Lcrf => lcrf_loss_subgradient(index, weights, batch, config.reg)?.0,
        LatentMode::Lmcrf => lmcrf_objective_gradient(index, weights, batch, config.reg)?.0,
    })
}

/// Averaged stochastic (sub)gradient training over root-labeled trees.
///
/// Each epoch visits the trees in a seeded random order. With a dev set the
/// averaged weights with the best dev root accuracy are returned, otherwise
/// the final averaged weights.
pub fn train_latent(
    index: &FeatureIndex,
    train: &[TreeInstance],
    dev: Option<&[TreeInstance]>,
    config: &LatentObjectiveConfig,
) -> Result<LatentTraining> {
    if train.is_empty() {
        return Err(CrfError::EmptyCorpus);
    }
    config.validate()?;
    if let Some(dev) = dev {
        if dev.is_empty() {
            return Err(CrfError::EmptyCorpus);
        }
    }
    let n = train.len() as f64;
    let per_instance_reg = config.reg / n;
    // ascent direction for both modes
    let sign = match config.mode {
        LatentMode::Lcrf => -1.0,
        LatentMode::Lmcrf => 1.0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut weights = initial_weights(index);
    let mut average = weights.clone();
    let mut steps = 1.0;
    let mut trace = Vec::new();
    let mut best_dev: Option<(f64, Vec<f64>)> = None;
    let mut epochs = 0;

    for epoch in 0..config.epochs {
        let eta = config.eta0 / (1.0 + epoch as f64);
        order.shuffle(&mut rng);
        for &m in &order {
            let one = std::slice::from_ref(&train[m]);
            let (_, g) = match config.mode {
                LatentMode::Lcrf => lcrf_loss_subgradient(index, &weights, one, per_instance_reg)?,
                LatentMode::Lmcrf => {
                    lmcrf_objective_gradient(index, &weights, one, per_instance_reg)?
                }
            };
            for (w, gi) in weights.iter_mut().zip(&g) {
                *w += sign * eta * gi;
            }
            steps += 1.0;
            for (a, w) in average.iter_mut().zip(&weights) {
                *a += (w - *a) / steps;
            }
        }
        if let Some(i) = average.iter().position(|w| !w.is_finite()) {
            return Err(CrfError::NonFinite(format!("weight {i}")));
        }
        epochs = epoch + 1;
        if let Some(dev) = dev {
            let acc = root_accuracy(index, &average, dev, config.mode)?;
            if best_dev.as_ref().is_none_or(|(b, _)| acc > *b) {
                best_dev = Some((acc, average.clone()));
            }
        }
        let value = objective(index, &average, train, config)?;
        let converged = trace.last().is_some_and(|&prev: &f64| {
            (value - prev).abs() <= config.tol * prev.abs().max(f64::MIN_POSITIVE)
        });
        trace.push(value);
        if converged {
            break;
        }
    }

    let (weights, dev_accuracy) = match best_dev {
        Some((acc, w)) => (w, Some(acc)),
        None => (average, None),
    };
    Ok(LatentTraining {
        weights,
        objective_trace: trace,
        epochs,
        dev_accuracy,
    })
}
