//! Brute-force reference implementations and random instance generators.
//!
//! Scores here are computed straight from feature keys, without any of the
//! library's potentials or dynamic programs.

#![allow(dead_code)]

use std::collections::BTreeMap;

use crftk_core::{
    build_feature_index, ChainInstance, Corpus, FeatureIndex, FeatureKey, LabelAlphabet, Templates,
    TreeInstance, TreeNode,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn alphabet(n: usize) -> LabelAlphabet {
    LabelAlphabet::new((0..n).map(|i| format!("L{i}"))).unwrap()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Every vector in `[0, base)^len`, in lexicographic order.
pub fn all_assignments(len: usize, base: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..base).map(move |y| {
                    let mut next = prefix.clone();
                    next.push(y);
                    next
                })
            })
            .collect();
    }
    out
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Unlabeled chain whose positions each carry one or two of `p0..p3`.
pub fn random_chain(rng: &mut ChaCha8Rng, alphabet: &LabelAlphabet, len: usize) -> ChainInstance {
    let obs = (0..len)
        .map(|_| {
            let k = rng.gen_range(1..=2);
            (0..k)
                .map(|_| format!("p{}", rng.gen_range(0..4)))
                .collect()
        })
        .collect();
    ChainInstance::new(obs, None, alphabet).unwrap()
}

pub fn chain_index(
    chain: &ChainInstance,
    alphabet: &LabelAlphabet,
    templates: Templates,
) -> FeatureIndex {
    build_feature_index(
        Corpus::Chains(std::slice::from_ref(chain)),
        alphabet,
        templates,
        1,
    )
    .unwrap()
}

fn weight(index: &FeatureIndex, weights: &[f64], key: &FeatureKey) -> f64 {
    index.feature_id(key).map_or(0.0, |f| weights[f])
}

fn state_sum(index: &FeatureIndex, weights: &[f64], predicates: &[String], y: usize) -> f64 {
    predicates
        .iter()
        .map(|p| weight(index, weights, &FeatureKey::state(p.clone(), y)))
        .sum()
}

/// Score of a label sequence under a chain model of the index's order.
pub fn chain_score(
    index: &FeatureIndex,
    weights: &[f64],
    chain: &ChainInstance,
    labels: &[usize],
) -> f64 {
    let order = index.order();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        total += state_sum(index, weights, &chain.observations()[i], y);
        let context: Vec<Option<usize>> = (0..=order)
            .map(|back| {
                let j = i as isize - (order - back) as isize;
                (j >= 0).then(|| labels[j as usize])
            })
            .collect();
        total += weight(index, weights, &FeatureKey::chain_transition(context));
    }
    total
}

/// Every segmentation of `[0, len)` into segments of at most `max_len`
/// tokens with distinct adjacent labels, as `(start, end, label)` triples.
pub fn segmentations(len: usize, labels: usize, max_len: usize) -> Vec<Vec<(usize, usize, usize)>> {
    fn go(
        start: usize,
        len: usize,
        labels: usize,
        max_len: usize,
        prefix: &mut Vec<(usize, usize, usize)>,
        out: &mut Vec<Vec<(usize, usize, usize)>>,
    ) {
        if start == len {
            out.push(prefix.clone());
            return;
        }
        for end in start..(start + max_len).min(len) {
            for y in 0..labels {
                if prefix.last().is_some_and(|s| s.2 == y) {
                    continue;
                }
                prefix.push((start, end, y));
                go(end + 1, len, labels, max_len, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(0, len, labels, max_len, &mut Vec::new(), &mut out);
    out
}

pub fn segmentation_score(
    index: &FeatureIndex,
    weights: &[f64],
    chain: &ChainInstance,
    segments: &[(usize, usize, usize)],
) -> f64 {
    let mut total = 0.0;
    let mut prev = None;
    for &(s, e, y) in segments {
        for j in s..=e {
            total += state_sum(index, weights, &chain.observations()[j], y);
        }
        total += weight(
            index,
            weights,
            &FeatureKey::state(format!("#L={}", e - s + 1), y),
        );
        total += weight(
            index,
            weights,
            &FeatureKey::chain_transition(vec![prev, Some(y)]),
        );
        prev = Some(y);
    }
    total
}

/// Random tree with `n` nodes: node ids `1..=n`, each non-root node's parent
/// drawn among earlier ids, relations from `rels`, predicates `q0..q2`, and
/// optional dense vectors of width `dense`.
pub fn random_tree(
    rng: &mut ChaCha8Rng,
    alphabet: &LabelAlphabet,
    n: usize,
    rels: &[&str],
    dense: usize,
    observed: &BTreeMap<usize, usize>,
) -> TreeInstance {
    let nodes = (1..=n)
        .map(|id| {
            let parent = (id > 1).then(|| rng.gen_range(1..id));
            let rel = if id == 1 {
                "root"
            } else {
                rels[rng.gen_range(0..rels.len())]
            };
            let k = rng.gen_range(0..=2);
            let mut node = TreeNode::new(id, parent, rel)
                .with_predicates((0..k).map(|_| format!("q{}", rng.gen_range(0..3))));
            if dense > 0 {
                node = node.with_dense((0..dense).map(|_| rng.gen_range(-1.0..1.0)).collect());
            }
            node
        })
        .collect();
    TreeInstance::new(nodes, observed, alphabet).unwrap()
}

pub fn tree_index(trees: &[TreeInstance], alphabet: &LabelAlphabet) -> FeatureIndex {
    build_feature_index(Corpus::Trees(trees), alphabet, Templates::Tree, 1).unwrap()
}

pub fn tree_score(
    index: &FeatureIndex,
    weights: &[f64],
    tree: &TreeInstance,
    labels: &[usize],
) -> f64 {
    let mut total = 0.0;
    for (v, node) in tree.nodes().iter().enumerate() {
        let y = labels[v];
        total += state_sum(index, weights, &node.predicates, y);
        if let Some(x) = &node.dense {
            for (j, xj) in x.iter().enumerate() {
                total += weights[index.dense_id(y, j)] * xj;
            }
        }
        if let Some(p) = tree.parent(v) {
            total += weight(
                index,
                weights,
                &FeatureKey::edge(node.relation.clone(), labels[p], y),
            );
        }
    }
    total
}

/// Central differences of a scalar function.
pub fn finite_difference(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            t[k] = theta[k] + h;
            let up = f(&t);
            t[k] = theta[k] - h;
            let down = f(&t);
            t[k] = theta[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// First index of the strict maximum (lowest index on ties).
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Depth-one trees whose root label is the strict majority of the leaves'
/// dense-vector argmaxes.
///
/// Leaves carry `(p0, p1, p2, 1)` with one dominant entry in `[0.7, 0.9]`;
/// the root carries an uninformative `(1/3, 1/3, 1/3, 1)`.
pub fn majority_trees(
    rng: &mut ChaCha8Rng,
    alphabet: &LabelAlphabet,
    count: usize,
) -> Vec<TreeInstance> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let leaves = if rng.gen_bool(0.5) { 3 } else { 5 };
        let mut votes = [0usize; 3];
        let mut nodes = vec![TreeNode::new(1, None, "root").with_dense(vec![
            1.0 / 3.0,
            1.0 / 3.0,
            1.0 / 3.0,
            1.0,
        ])];
        for id in 2..=leaves + 1 {
            let top = rng.gen_range(0..3);
            votes[top] += 1;
            let main = rng.gen_range(0.7..0.9);
            let split = rng.gen_range(0.0..1.0);
            let mut x = vec![0.0; 4];
            x[top] = main;
            x[(top + 1) % 3] = (1.0 - main) * split;
            x[(top + 2) % 3] = (1.0 - main) * (1.0 - split);
            x[3] = 1.0;
            nodes.push(TreeNode::new(id, Some(1), "sat").with_dense(x));
        }
        let best = (0..3).max_by_key(|&y| votes[y]).unwrap();
        if votes.iter().filter(|&&v| v == votes[best]).count() > 1 {
            continue;
        }
        let observed = BTreeMap::from([(1, best)]);
        out.push(TreeInstance::new(nodes, &observed, alphabet).unwrap());
    }
    out
}

/// The four-token tagging lattice with hand-set weights in which the
/// locally best path loses to a globally better one.
///
/// Returns the alphabet (`KON ADV ADJA NN VA`), the instance, index and weights.
pub fn label_bias_model() -> (LabelAlphabet, ChainInstance, FeatureIndex, Vec<f64>) {
    let alphabet = LabelAlphabet::new(["KON", "ADV", "ADJA", "NN", "VA"]).unwrap();
    let words = ["Aber", "gerade", "Erwachsene", "haben"];
    let obs: Vec<Vec<String>> = words.iter().map(|w| vec![format!("w={w}")]).collect();
    let chain = ChainInstance::new(obs, None, &alphabet).unwrap();
    let index = chain_index(&chain, &alphabet, Templates::chain(1));
    let mut weights = vec![0.0; index.len()];
    let l = |name: &str| alphabet.index(name).unwrap();
    let allowed: [&[(&str, f64)]; 4] = [
        &[("KON", 1.0)],
        &[("ADV", 0.5), ("ADJA", 0.5)],
        &[("NN", 0.5), ("ADJA", 0.5)],
        &[("VA", 1.0)],
    ];
    for (i, word) in words.iter().enumerate() {
        for y in alphabet.labels() {
            let key = FeatureKey::state(format!("w={word}"), l(y));
            // labels outside the lattice get a prohibitive weight
            let w = allowed[i]
                .iter()
                .find(|(n, _)| n == y)
                .map_or(-1000.0, |(_, w)| *w);
            weights[index.feature_id(&key).unwrap()] = w;
        }
    }
    let transitions = [
        ("KON", "ADJA", 0.5),
        ("KON", "ADV", 0.5),
        ("ADJA", "ADJA", 0.3),
        ("ADJA", "NN", 0.7),
        ("ADV", "ADJA", 0.8),
        ("ADV", "NN", 0.2),
        ("ADJA", "VA", 0.1),
        ("NN", "VA", 0.9),
    ];
    for (a, b, w) in transitions {
        let key = FeatureKey::chain_transition(vec![Some(l(a)), Some(l(b))]);
        weights[index.feature_id(&key).unwrap()] = w;
    }
    (alphabet, chain, index, weights)
}

/// Index of the best score, ties (within 1e-9) resolved by the smallest key.
pub fn best_by_key(scores: &[f64], keys: &[Vec<usize>]) -> usize {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..scores.len())
        .filter(|&i| scores[i] >= max - 1e-9)
        .min_by(|&a, &b| keys[a].cmp(&keys[b]))
        .unwrap()
}

/// Tie-break key of a chain decode: the final context (oldest label first),
/// then earlier labels walking backwards.
pub fn chain_tie_key(labels: &[usize], order: usize) -> Vec<usize> {
    let n = labels.len();
    let split = n.saturating_sub(order);
    let mut key = labels[split..].to_vec();
    key.extend(labels[..split].iter().rev());
    key
}

/// Tie-break key of a semi-Markov decode: the last segment's label, then
/// walking backwards each segment's predecessor label (boundary last) and
/// length.
pub fn segmentation_tie_key(segments: &[(usize, usize, usize)]) -> Vec<usize> {
    let mut key = vec![segments.last().unwrap().2];
    for k in (0..segments.len()).rev() {
        key.push(if k == 0 {
            usize::MAX
        } else {
            segments[k - 1].2
        });
        key.push(segments[k].1 - segments[k].0);
    }
    key
}

/// Tie-break key of a tree decode: labels from the root downwards.
pub fn tree_tie_key(tree: &TreeInstance, labels: &[usize]) -> Vec<usize> {
    tree.post_order().iter().rev().map(|&v| labels[v]).collect()
}
