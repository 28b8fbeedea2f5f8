use super::*;
use crate::alphabet::LabelAlphabet;
use crate::features::{build_feature_index, Corpus, FeatureKey};

fn labels(n: usize) -> LabelAlphabet {
    LabelAlphabet::new((0..n).map(|i| format!("L{i}"))).unwrap()
}

fn unlabeled(n: usize, alphabet: &LabelAlphabet) -> ChainInstance {
    let obs = (0..n)
        .map(|i| vec![format!("p{}", i % 2), "bias".to_string()])
        .collect();
    ChainInstance::new(obs, None, alphabet).unwrap()
}

fn index_for(chain: &ChainInstance, alphabet: &LabelAlphabet, order: usize) -> FeatureIndex {
    build_feature_index(
        Corpus::Chains(std::slice::from_ref(chain)),
        alphabet,
        Templates::chain(order),
        1,
    )
    .unwrap()
}

fn weights(index: &FeatureIndex, seed: u64) -> Vec<f64> {
    // small deterministic pseudo-random weights
    let mut x = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (0..index.len())
        .map(|_| {
            x = x
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((x >> 33) as f64 / (1u64 << 31) as f64) * 2.0 - 1.0
        })
        .collect()
}

#[test]
fn zero_weights_give_zero_scores() {
    let a = labels(3);
    let c = unlabeled(4, &a);
    let idx = index_for(&c, &a, 2);
    let pot =
        ChainPotentials::new(&idx, &vec![0.0; idx.len()], &EncodedChain::new(&idx, &c)).unwrap();
    for i in 0..4 {
        for y in 0..3 {
            assert_eq!(pot.state_score(i, y).unwrap(), 0.0);
        }
    }
    assert_eq!(pot.transition_score(&[None, Some(1)], 2).unwrap(), 0.0);
    assert!(pot.state_score(4, 0).is_err());
    assert!(pot.state_score(0, 3).is_err());
    assert!(pot.transition_score(&[Some(1)], 2).is_err());
}

#[test]
fn state_scores_add() {
    let a = labels(2);
    let c = ChainInstance::new(vec![vec!["f".into(), "g".into()]], None, &a).unwrap();
    let idx = index_for(&c, &a, 1);
    let mut w = vec![0.0; idx.len()];
    w[idx.feature_id(&FeatureKey::state("f", 1)).unwrap()] = 0.3;
    w[idx.feature_id(&FeatureKey::state("g", 1)).unwrap()] = -0.1;
    let pot = ChainPotentials::new(&idx, &w, &EncodedChain::new(&idx, &c)).unwrap();
    assert!((pot.state_score(0, 1).unwrap() - 0.2).abs() < 1e-15);
    assert_eq!(pot.state_score(0, 0).unwrap(), 0.0);
}

#[test]
fn uniform_partition() {
    let a = labels(4);
    let c = unlabeled(3, &a);
    for order in 1..=2 {
        let idx = index_for(&c, &a, order);
        let pot = ChainPotentials::new(&idx, &vec![0.0; idx.len()], &EncodedChain::new(&idx, &c))
            .unwrap();
        let t = forward_backward(&pot).unwrap();
        assert!((t.log_z - 3.0 * 4f64.ln()).abs() < 1e-12);
        for row in &t.state_marginals {
            for p in row {
                assert!((p - 0.25).abs() < 1e-12);
            }
        }
        assert!((log_partition(&pot).unwrap() - t.log_z).abs() < 1e-12);
    }
}

#[test]
fn single_label_has_probability_one() {
    let a = labels(1);
    let c = unlabeled(3, &a);
    let idx = index_for(&c, &a, 1);
    let pot = ChainPotentials::new(&idx, &weights(&idx, 3), &EncodedChain::new(&idx, &c)).unwrap();
    assert!(sequence_logprob(&pot, &[0, 0, 0]).unwrap().abs() < 1e-12);
    assert!(sequence_logprob(&pot, &[0, 0]).is_err());
}

#[test]
fn zero_weight_decode_takes_lowest_labels() {
    let a = labels(3);
    let c = unlabeled(5, &a);
    for order in 1..=3 {
        let idx = index_for(&c, &a, order);
        let pot = ChainPotentials::new(&idx, &vec![0.0; idx.len()], &EncodedChain::new(&idx, &c))
            .unwrap();
        assert_eq!(viterbi(&pot).unwrap(), (vec![0; 5], 0.0));
    }
}

#[test]
fn position_shift_moves_log_z_only() {
    let a = labels(3);
    let c = unlabeled(4, &a);
    for order in 1..=2 {
        let idx = index_for(&c, &a, order);
        let mut pot =
            ChainPotentials::new(&idx, &weights(&idx, 11), &EncodedChain::new(&idx, &c)).unwrap();
        let before = forward_backward(&pot).unwrap();
        pot.shift_position(2, 1.75);
        let after = forward_backward(&pot).unwrap();
        assert!((after.log_z - before.log_z - 1.75).abs() < 1e-12);
        for (r0, r1) in before.state_marginals.iter().zip(&after.state_marginals) {
            for (p0, p1) in r0.iter().zip(r1) {
                assert!((p0 - p1).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn marginals_are_consistent() {
    let a = labels(3);
    let c = unlabeled(5, &a);
    for order in 1..=3 {
        let idx = index_for(&c, &a, order);
        let pot =
            ChainPotentials::new(&idx, &weights(&idx, 5), &EncodedChain::new(&idx, &c)).unwrap();
        let t = forward_backward(&pot).unwrap();
        let base = 4;
        let contexts = pot.num_contexts();
        for i in 0..5 {
            let total: f64 = t.state_marginals[i].iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            let trans_total: f64 = t.transition_marginals[i].iter().flatten().sum();
            assert!((trans_total - 1.0).abs() < 1e-9);
            for y in 0..3 {
                let into: f64 = (0..contexts).map(|p| t.transition_marginals[i][p][y]).sum();
                assert!((into - t.state_marginals[i][y]).abs() < 1e-9);
            }
            if i > 0 {
                // mass leaving a context equals the mass of its newest label one step earlier
                for yp in 0..3 {
                    let out: f64 = (0..contexts)
                        .filter(|p| p % base == yp)
                        .map(|p| t.transition_marginals[i][p].iter().sum::<f64>())
                        .sum();
                    assert!((out - t.state_marginals[i - 1][yp]).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn zero_weight_gradient_by_hand() {
    // two tokens, labels A B, gold A B; features: a:A a:B b:A b:B and all bigrams
    let a = labels(2);
    let c = ChainInstance::new(
        vec![vec!["a".into()], vec!["b".into()]],
        Some(vec![0, 1]),
        &a,
    )
    .unwrap();
    let keys = [
        FeatureKey::state("a", 0),
        FeatureKey::state("a", 1),
        FeatureKey::state("b", 1),
        FeatureKey::chain_transition(vec![None, Some(0)]),
        FeatureKey::chain_transition(vec![None, Some(1)]),
        FeatureKey::chain_transition(vec![Some(0), Some(1)]),
        FeatureKey::chain_transition(vec![Some(1), Some(1)]),
    ];
    let idx = FeatureIndex::from_keys(2, Templates::chain(1), 0, 1, keys).unwrap();
    let enc = EncodedChain::new(&idx, &c);
    let (v, g) = loglik_gradient(&idx, &vec![0.0; idx.len()], &[enc], 0.0, 0.0).unwrap();
    assert!((v + 4f64.ln()).abs() < 1e-12);
    let at = |k: FeatureKey| g[idx.feature_id(&k).unwrap()];
    assert!((at(FeatureKey::state("a", 0)) - 0.5).abs() < 1e-12);
    assert!((at(FeatureKey::state("a", 1)) + 0.5).abs() < 1e-12);
    assert!((at(FeatureKey::state("b", 1)) - 0.5).abs() < 1e-12);
    assert!((at(FeatureKey::chain_transition(vec![None, Some(0)])) - 0.5).abs() < 1e-12);
    assert!((at(FeatureKey::chain_transition(vec![None, Some(1)])) + 0.5).abs() < 1e-12);
    assert!((at(FeatureKey::chain_transition(vec![Some(0), Some(1)])) - 0.75).abs() < 1e-12);
    assert!((at(FeatureKey::chain_transition(vec![Some(1), Some(1)])) + 0.25).abs() < 1e-12);
}

#[test]
fn unused_features_only_see_the_regularizer() {
    let a = labels(2);
    let c = ChainInstance::new(vec![vec!["a".into()]], Some(vec![0]), &a).unwrap();
    let keys = [
        FeatureKey::state("a", 0),
        FeatureKey::state("z", 0),
        FeatureKey::state("z", 1),
    ];
    let idx = FeatureIndex::from_keys(
        2,
        Templates::Chain {
            order: 1,
            bos: false,
        },
        0,
        1,
        keys,
    )
    .unwrap();
    let w = vec![0.0, 1.5, -2.0];
    let enc = EncodedChain::new(&idx, &c);
    let (_, g) = loglik_gradient(&idx, &w, &[enc], 0.25, 0.5).unwrap();
    let z0 = idx.feature_id(&FeatureKey::state("z", 0)).unwrap();
    let z1 = idx.feature_id(&FeatureKey::state("z", 1)).unwrap();
    assert_eq!(g[z0], -0.25 - 2.0 * 0.5 * w[z0]);
    assert_eq!(g[z1], 0.25 - 2.0 * 0.5 * w[z1]);
}

#[test]
fn errors() {
    let a = labels(2);
    let c = unlabeled(2, &a);
    let idx = index_for(&c, &a, 1);
    let enc = EncodedChain::new(&idx, &c);
    assert_eq!(
        loglik_gradient(&idx, &vec![0.0; idx.len()], &[enc.clone()], 0.0, 0.0).unwrap_err(),
        CrfError::Unlabeled(0)
    );
    assert!(matches!(
        ChainPotentials::new(&idx, &[0.0], &enc),
        Err(CrfError::ParameterMismatch { .. })
    ));
    let empty = EncodedChain {
        predicates: vec![],
        gold: vec![],
    };
    let pot = ChainPotentials::new(&idx, &vec![0.0; idx.len()], &empty).unwrap();
    assert_eq!(forward_backward(&pot).unwrap_err(), CrfError::EmptyInstance);
    assert_eq!(viterbi(&pot).unwrap_err(), CrfError::EmptyInstance);
}
