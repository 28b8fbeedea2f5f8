//! Synthetic workloads for the inference benchmarks.

use std::collections::BTreeMap;

use crftk_core::{
    build_feature_index, ChainInstance, Corpus, FeatureIndex, LabelAlphabet, Templates,
    TreeInstance, TreeNode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn alphabet(labels: usize) -> LabelAlphabet {
    LabelAlphabet::new((0..labels).map(|i| format!("L{i}"))).unwrap()
}

/// Labeled chains of length `len` with a few word-like predicates per token.
pub fn chains(seed: u64, count: usize, len: usize, alphabet: &LabelAlphabet) -> Vec<ChainInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let obs = (0..len)
                .map(|_| {
                    let w = rng.gen_range(0..200);
                    vec![
                        format!("w={w}"),
                        format!("s={}", w % 17),
                        format!("c={}", w % 3),
                    ]
                })
                .collect();
            let gold = (0..len).map(|_| rng.gen_range(0..alphabet.len())).collect();
            ChainInstance::new(obs, Some(gold), alphabet).unwrap()
        })
        .collect()
}

/// Random trees of `n` nodes with three relation types and dense node vectors.
pub fn trees(
    seed: u64,
    count: usize,
    n: usize,
    dense: usize,
    alphabet: &LabelAlphabet,
) -> Vec<TreeInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rels = ["elab", "attr", "contr"];
    (0..count)
        .map(|_| {
            let nodes = (1..=n)
                .map(|id| {
                    let parent = (id > 1).then(|| rng.gen_range(1..id));
                    let rel = if id == 1 {
                        "root"
                    } else {
                        rels[rng.gen_range(0..rels.len())]
                    };
                    TreeNode::new(id, parent, rel)
                        .with_predicates([format!("q{}", rng.gen_range(0..50))])
                        .with_dense((0..dense).map(|_| rng.gen_range(0.0..1.0)).collect())
                })
                .collect();
            let observed: BTreeMap<usize, usize> = (1..=n)
                .map(|id| (id, rng.gen_range(0..alphabet.len())))
                .collect();
            TreeInstance::new(nodes, &observed, alphabet).unwrap()
        })
        .collect()
}

pub fn chain_index(
    chains: &[ChainInstance],
    alphabet: &LabelAlphabet,
    templates: Templates,
) -> FeatureIndex {
    build_feature_index(Corpus::Chains(chains), alphabet, templates, 1).unwrap()
}

pub fn tree_index(trees: &[TreeInstance], alphabet: &LabelAlphabet) -> FeatureIndex {
    build_feature_index(Corpus::Trees(trees), alphabet, Templates::Tree, 1).unwrap()
}

pub fn weights(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
}
