//! Symbolic feature keys, feature templates and the dense feature index.
//!
//! Index layout: for tree models the first `dense_width × |labels|` slots hold
//! the per-label weight blocks of dense node features (label-major). All keyed
//! features follow in lexicographic order of their feature string, then their
//! label context.

use std::collections::{BTreeMap, HashMap};

use crate::alphabet::LabelAlphabet;
use crate::error::{CrfError, Result};
use crate::instance::{ChainInstance, TreeInstance};

/// A tuple of label slots; `None` is the boundary context before position 0.
pub type LabelContext = Vec<Option<usize>>;

/// Relation tag used for linear-chain transitions.
pub const CHAIN_RELATION: &str = "";

pub(crate) const TRANSITION_TAG: &str = "#T";
pub(crate) const EDGE_PREFIX: &str = "#E:";
pub(crate) const DENSE_PREFIX: &str = "#D:";
pub(crate) const LENGTH_PREFIX: &str = "#L=";

/// Predicate string of the segment-length indicator for segments of `len` tokens.
pub fn length_predicate(len: usize) -> String {
    format!("{LENGTH_PREFIX}{len}")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FeatureKey {
    /// Observation predicate × current label.
    State { predicate: String, label: usize },
    /// Label-context tuple on an edge. Chains use [`CHAIN_RELATION`] and a
    /// context of `order + 1` slots (oldest first); trees use the edge's
    /// relation tag and `[parent, child]`.
    Transition {
        relation: String,
        context: LabelContext,
    },
}

impl FeatureKey {
    pub fn state(predicate: impl Into<String>, label: usize) -> Self {
        FeatureKey::State {
            predicate: predicate.into(),
            label,
        }
    }

    pub fn chain_transition(context: LabelContext) -> Self {
        FeatureKey::Transition {
            relation: CHAIN_RELATION.to_string(),
            context,
        }
    }

    pub fn edge(relation: impl Into<String>, parent: usize, child: usize) -> Self {
        FeatureKey::Transition {
            relation: relation.into(),
            context: vec![Some(parent), Some(child)],
        }
    }

    /// First column of the model file.
    pub fn feature_string(&self) -> String {
        match self {
            FeatureKey::State { predicate, .. } => predicate.clone(),
            FeatureKey::Transition { relation, .. } if relation.is_empty() => {
                TRANSITION_TAG.to_string()
            }
            FeatureKey::Transition { relation, .. } => format!("{EDGE_PREFIX}{relation}"),
        }
    }

    pub fn label_context(&self) -> LabelContext {
        match self {
            FeatureKey::State { label, .. } => vec![Some(*label)],
            FeatureKey::Transition { context, .. } => context.clone(),
        }
    }

    fn sort_key(&self) -> (String, LabelContext) {
        (self.feature_string(), self.label_context())
    }
}

/// Which feature families a model uses; fixed per instance kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Templates {
    /// Linear chain of the given Markov order. `bos` enables transitions out of
    /// the boundary context.
    Chain { order: usize, bos: bool },
    /// Semi-Markov chain with segments of at most `max_seg_len` tokens.
    SemiMarkov {
        max_seg_len: usize,
        bos: bool,
        length_features: bool,
    },
    /// Tree with relation-tagged edges and optional dense node features.
    Tree,
}

impl Templates {
    pub fn chain(order: usize) -> Self {
        Templates::Chain { order, bos: true }
    }

    pub fn semi_markov(max_seg_len: usize) -> Self {
        Templates::SemiMarkov {
            max_seg_len,
            bos: true,
            length_features: false,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Templates::Chain { order: 0, .. } => Err(CrfError::ZeroOrder),
            Templates::SemiMarkov { max_seg_len: 0, .. } => Err(CrfError::ZeroSegmentLength),
            _ => Ok(()),
        }
    }

    /// Number of label slots a transition context carries.
    fn context_len(&self) -> usize {
        match *self {
            Templates::Chain { order, .. } => order + 1,
            _ => 2,
        }
    }

    fn bos(&self) -> bool {
        match *self {
            Templates::Chain { bos, .. } | Templates::SemiMarkov { bos, .. } => bos,
            Templates::Tree => false,
        }
    }
}

/// What a dense feature id refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureRef<'a> {
    Dense { label: usize, column: usize },
    Keyed(&'a FeatureKey),
}

#[derive(Debug, Clone)]
pub struct FeatureIndex {
    num_labels: usize,
    templates: Templates,
    dense_width: usize,
    min_count: usize,
    keys: Vec<FeatureKey>,
    lookup: HashMap<FeatureKey, usize>,
    predicate_ids: HashMap<String, usize>,
    state_ids: Vec<Vec<Option<usize>>>,
    chain_transitions: Vec<(LabelContext, usize)>,
    edge_ids: BTreeMap<String, Vec<Option<usize>>>,
}

impl PartialEq for FeatureIndex {
    fn eq(&self, other: &Self) -> bool {
        self.num_labels == other.num_labels
            && self.templates == other.templates
            && self.dense_width == other.dense_width
            && self.min_count == other.min_count
            && self.keys == other.keys
    }
}

impl FeatureIndex {
    /// Builds an index over an explicit key set. Keys are sorted and deduplicated.
    pub fn from_keys<I>(
        num_labels: usize,
        templates: Templates,
        dense_width: usize,
        min_count: usize,
        keys: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = FeatureKey>,
    {
        templates.validate()?;
        if num_labels == 0 {
            return Err(CrfError::EmptyAlphabet);
        }
        if dense_width > 0 && templates != Templates::Tree {
            return Err(CrfError::TemplateMismatch);
        }
        let mut keys: Vec<FeatureKey> = keys.into_iter().collect();
        for key in &keys {
            validate_key(key, num_labels, &templates)?;
        }
        keys.sort_by_cached_key(FeatureKey::sort_key);
        keys.dedup();

        let offset = dense_width * num_labels;
        let mut lookup = HashMap::with_capacity(keys.len());
        let mut predicate_ids: HashMap<String, usize> = HashMap::new();
        let mut state_ids: Vec<Vec<Option<usize>>> = Vec::new();
        let mut chain_transitions = Vec::new();
        let mut edge_ids: BTreeMap<String, Vec<Option<usize>>> = BTreeMap::new();
        for (i, key) in keys.iter().enumerate() {
            let id = offset + i;
            lookup.insert(key.clone(), id);
            match key {
                FeatureKey::State { predicate, label } => {
                    let next = predicate_ids.len();
                    let pid = *predicate_ids.entry(predicate.clone()).or_insert(next);
                    if pid == state_ids.len() {
                        state_ids.push(vec![None; num_labels]);
                    }
                    state_ids[pid][*label] = Some(id);
                }
                FeatureKey::Transition { relation, context } if templates != Templates::Tree => {
                    debug_assert!(relation.is_empty());
                    chain_transitions.push((context.clone(), id));
                }
                FeatureKey::Transition { relation, context } => {
                    let table = edge_ids
                        .entry(relation.clone())
                        .or_insert_with(|| vec![None; num_labels * num_labels]);
                    let (p, c) = (context[0].unwrap(), context[1].unwrap());
                    table[p * num_labels + c] = Some(id);
                }
            }
        }
        Ok(Self {
            num_labels,
            templates,
            dense_width,
            min_count,
            keys,
            lookup,
            predicate_ids,
            state_ids,
            chain_transitions,
            edge_ids,
        })
    }

    /// Total parameter count, dense block included.
    pub fn len(&self) -> usize {
        self.dense_width * self.num_labels + self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn templates(&self) -> Templates {
        self.templates
    }

    pub fn dense_width(&self) -> usize {
        self.dense_width
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    /// Markov order of chain templates (1 for every other kind).
    pub fn order(&self) -> usize {
        match self.templates {
            Templates::Chain { order, .. } => order,
            _ => 1,
        }
    }

    pub fn keys(&self) -> &[FeatureKey] {
        &self.keys
    }

    pub fn num_state_features(&self) -> usize {
        self.keys
            .iter()
            .filter(|k| matches!(k, FeatureKey::State { .. }))
            .count()
    }

    pub fn num_transition_features(&self) -> usize {
        self.keys.len() - self.num_state_features()
    }

    pub fn feature_id(&self, key: &FeatureKey) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    pub fn dense_id(&self, label: usize, column: usize) -> usize {
        debug_assert!(label < self.num_labels && column < self.dense_width);
        label * self.dense_width + column
    }

    pub fn feature(&self, id: usize) -> Option<FeatureRef<'_>> {
        let offset = self.dense_width * self.num_labels;
        if id < offset {
            Some(FeatureRef::Dense {
                label: id / self.dense_width,
                column: id % self.dense_width,
            })
        } else {
            self.keys.get(id - offset).map(FeatureRef::Keyed)
        }
    }

    pub fn predicate_id(&self, predicate: &str) -> Option<usize> {
        self.predicate_ids.get(predicate).copied()
    }

    pub fn state_feature(&self, predicate_id: usize, label: usize) -> Option<usize> {
        self.state_ids[predicate_id][label]
    }

    /// Maps predicate strings to predicate ids, dropping unknown ones.
    pub fn encode_predicates(&self, predicates: &[String]) -> Vec<usize> {
        predicates
            .iter()
            .filter_map(|p| self.predicate_id(p))
            .collect()
    }

    pub fn transition_feature(&self, relation: &str, context: &[Option<usize>]) -> Option<usize> {
        self.lookup
            .get(&FeatureKey::Transition {
                relation: relation.to_string(),
                context: context.to_vec(),
            })
            .copied()
    }

    /// Chain (or semi-Markov) transition features with their contexts.
    pub fn chain_transitions(&self) -> &[(LabelContext, usize)] {
        &self.chain_transitions
    }

    /// `[parent * |labels| + child]` table of edge feature ids for a relation.
    pub fn edge_table(&self, relation: &str) -> Option<&[Option<usize>]> {
        self.edge_ids.get(relation).map(Vec::as_slice)
    }

    pub fn check_weights(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.len() {
            return Err(CrfError::ParameterMismatch {
                expected: self.len(),
                got: weights.len(),
            });
        }
        Ok(())
    }
}

fn validate_key(key: &FeatureKey, num_labels: usize, templates: &Templates) -> Result<()> {
    let check = |l: usize| {
        if l < num_labels {
            Ok(())
        } else {
            Err(CrfError::LabelOutOfRange {
                index: l,
                size: num_labels,
            })
        }
    };
    match key {
        FeatureKey::State { predicate, label } => {
            check(*label)?;
            if predicate.starts_with(LENGTH_PREFIX) {
                if !matches!(templates, Templates::SemiMarkov { .. }) {
                    return Err(CrfError::TemplateMismatch);
                }
                Ok(())
            } else {
                crate::instance::check_predicate(predicate)
            }
        }
        FeatureKey::Transition { relation, context } => {
            if context.len() != templates.context_len() {
                return Err(CrfError::TemplateMismatch);
            }
            let is_tree = *templates == Templates::Tree;
            if relation.is_empty() == is_tree {
                return Err(CrfError::TemplateMismatch);
            }
            if relation.chars().any(char::is_whitespace) {
                return Err(CrfError::InvalidTree(format!(
                    "bad relation tag `{relation}`"
                )));
            }
            // boundary slots may only form a prefix, and never in the current slot
            let leading = context.iter().take_while(|s| s.is_none()).count();
            if leading == context.len() || context[leading..].iter().any(Option::is_none) {
                return Err(CrfError::TemplateMismatch);
            }
            if leading > 0 && (is_tree || !templates.bos()) {
                return Err(CrfError::TemplateMismatch);
            }
            if let Templates::SemiMarkov { .. } = templates {
                if leading == 0 && context[0] == context[1] {
                    return Err(CrfError::InvalidSegmentation(
                        "semi-Markov transitions join different labels".into(),
                    ));
                }
            }
            context.iter().flatten().try_for_each(|&l| check(l))
        }
    }
}

/// A training corpus of one instance kind.
#[derive(Debug, Clone, Copy)]
pub enum Corpus<'a> {
    Chains(&'a [ChainInstance]),
    Trees(&'a [TreeInstance]),
}

impl Corpus<'_> {
    fn is_empty(&self) -> bool {
        match self {
            Corpus::Chains(c) => c.is_empty(),
            Corpus::Trees(t) => t.is_empty(),
        }
    }
}

/// Registers every feature occurring at least `min_count` times in `corpus`.
///
/// An occurrence of a feature is a place where it can fire consistently with
/// the gold labels: labeled slots contribute their gold label, unlabeled slots
/// contribute every label.
pub fn build_feature_index(
    corpus: Corpus<'_>,
    alphabet: &LabelAlphabet,
    templates: Templates,
    min_count: usize,
) -> Result<FeatureIndex> {
    if corpus.is_empty() {
        return Err(CrfError::EmptyCorpus);
    }
    if min_count == 0 {
        return Err(CrfError::ZeroMinCount);
    }
    templates.validate()?;
    let num_labels = alphabet.len();
    let mut counts: HashMap<FeatureKey, usize> = HashMap::new();
    let mut dense_width = 0;

    match (corpus, templates) {
        (Corpus::Chains(chains), Templates::Chain { order, bos }) => {
            for chain in chains {
                count_states(chain, num_labels, &mut counts);
                for i in 0..chain.len() {
                    let slots: Vec<Vec<Option<usize>>> = (0..=order)
                        .map(|back| {
                            let j = i as isize - (order - back) as isize;
                            if j < 0 {
                                vec![None]
                            } else {
                                candidates(chain.gold()[j as usize], num_labels)
                            }
                        })
                        .collect();
                    if !bos && slots[0] == [None] {
                        continue;
                    }
                    for context in cartesian(&slots) {
                        *counts
                            .entry(FeatureKey::chain_transition(context))
                            .or_default() += 1;
                    }
                }
            }
        }
        (
            Corpus::Chains(chains),
            Templates::SemiMarkov {
                max_seg_len,
                bos,
                length_features,
            },
        ) => {
            for chain in chains {
                count_states(chain, num_labels, &mut counts);
                let gold = chain.gold();
                for i in 0..chain.len() {
                    let cur = candidates(gold[i], num_labels);
                    if i == 0 {
                        if bos {
                            for &y in &cur {
                                *counts
                                    .entry(FeatureKey::chain_transition(vec![None, y]))
                                    .or_default() += 1;
                            }
                        }
                        continue;
                    }
                    for &prev in &candidates(gold[i - 1], num_labels) {
                        for &y in &cur {
                            if prev != y {
                                *counts
                                    .entry(FeatureKey::chain_transition(vec![prev, y]))
                                    .or_default() += 1;
                            }
                        }
                    }
                }
                if length_features {
                    for (start, end, label) in labeled_runs(gold) {
                        let len = end - start + 1;
                        if len <= max_seg_len {
                            *counts
                                .entry(FeatureKey::state(length_predicate(len), label))
                                .or_default() += 1;
                        }
                    }
                }
            }
        }
        (Corpus::Trees(trees), Templates::Tree) => {
            dense_width = trees[0].dense_width();
            for tree in trees {
                if tree.dense_width() != dense_width {
                    return Err(CrfError::InvalidTree(format!(
                        "dense width {} differs from corpus width {}",
                        tree.dense_width(),
                        dense_width
                    )));
                }
                for (v, node) in tree.nodes().iter().enumerate() {
                    let labels = candidates(tree.observed()[v], num_labels);
                    for p in &node.predicates {
                        for y in labels.iter().flatten() {
                            *counts.entry(FeatureKey::state(p.clone(), *y)).or_default() += 1;
                        }
                    }
                    if let Some(parent) = tree.parent(v) {
                        for yp in candidates(tree.observed()[parent], num_labels)
                            .into_iter()
                            .flatten()
                        {
                            for yc in labels.iter().flatten() {
                                *counts
                                    .entry(FeatureKey::edge(node.relation.clone(), yp, *yc))
                                    .or_default() += 1;
                            }
                        }
                    }
                }
            }
        }
        _ => return Err(CrfError::TemplateMismatch),
    }

    let keys = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .map(|(k, _)| k);
    FeatureIndex::from_keys(num_labels, templates, dense_width, min_count, keys)
}

fn candidates(gold: Option<usize>, num_labels: usize) -> Vec<Option<usize>> {
    match gold {
        Some(y) => vec![Some(y)],
        None => (0..num_labels).map(Some).collect(),
    }
}

fn count_states(chain: &ChainInstance, num_labels: usize, counts: &mut HashMap<FeatureKey, usize>) {
    for (obs, gold) in chain.observations().iter().zip(chain.gold()) {
        for p in obs {
            for y in candidates(*gold, num_labels).into_iter().flatten() {
                *counts.entry(FeatureKey::state(p.clone(), y)).or_default() += 1;
            }
        }
    }
}

fn cartesian(slots: &[Vec<Option<usize>>]) -> Vec<LabelContext> {
    slots.iter().fold(vec![Vec::new()], |acc, choices| {
        acc.into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |c| {
                    let mut next = prefix.clone();
                    next.push(*c);
                    next
                })
            })
            .collect()
    })
}

/// Maximal runs of identical labels lying entirely in labeled territory.
fn labeled_runs(gold: &[Option<usize>]) -> Vec<(usize, usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < gold.len() {
        let Some(y) = gold[i] else {
            i += 1;
            continue;
        };
        let start = i;
        while i + 1 < gold.len() && gold[i + 1] == Some(y) {
            i += 1;
        }
        let bounded_left = start == 0 || gold[start - 1].is_some();
        let bounded_right = i + 1 == gold.len() || gold[i + 1].is_some();
        if bounded_left && bounded_right {
            runs.push((start, i, y));
        }
        i += 1;
    }
    runs
}
