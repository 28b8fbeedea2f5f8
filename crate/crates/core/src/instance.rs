//! Chain and tree instances, validated on construction.

use std::collections::{BTreeMap, HashMap};

use crate::alphabet::LabelAlphabet;
use crate::error::{CrfError, Result};

pub(crate) fn check_predicate(p: &str) -> Result<()> {
    if p.is_empty() || p.starts_with('#') || p.chars().any(char::is_whitespace) {
        Err(CrfError::InvalidPredicate(p.to_string()))
    } else {
        Ok(())
    }
}

/// A token sequence: per-position predicate strings plus (possibly partial) gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainInstance {
    observations: Vec<Vec<String>>,
    gold: Vec<Option<usize>>,
}

impl ChainInstance {
    /// Fully labeled (`Some`) or unlabeled (`None`) chain.
    pub fn new(
        observations: Vec<Vec<String>>,
        gold: Option<Vec<usize>>,
        alphabet: &LabelAlphabet,
    ) -> Result<Self> {
        let n = observations.len();
        let gold = match gold {
            Some(g) => g.into_iter().map(Some).collect(),
            None => vec![None; n],
        };
        Self::partial(observations, gold, alphabet)
    }

    pub fn partial(
        observations: Vec<Vec<String>>,
        gold: Vec<Option<usize>>,
        alphabet: &LabelAlphabet,
    ) -> Result<Self> {
        if gold.len() != observations.len() {
            return Err(CrfError::LengthMismatch {
                expected: observations.len(),
                got: gold.len(),
            });
        }
        for label in gold.iter().flatten() {
            alphabet.check(*label)?;
        }
        for p in observations.iter().flatten() {
            check_predicate(p)?;
        }
        Ok(Self { observations, gold })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Vec<String>] {
        &self.observations
    }

    pub fn gold(&self) -> &[Option<usize>] {
        &self.gold
    }

    /// The gold sequence if every position is labeled.
    pub fn full_gold(&self) -> Option<Vec<usize>> {
        self.gold.iter().copied().collect()
    }
}

/// One node record of a [`TreeInstance`].
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub relation: String,
    pub predicates: Vec<String>,
    pub dense: Option<Vec<f64>>,
}

impl TreeNode {
    pub fn new(id: usize, parent: Option<usize>, relation: impl Into<String>) -> Self {
        Self {
            id,
            parent,
            relation: relation.into(),
            predicates: Vec::new(),
            dense: None,
        }
    }

    pub fn with_predicates<I, S>(mut self, predicates: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.predicates = predicates.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_dense(mut self, dense: Vec<f64>) -> Self {
        self.dense = Some(dense);
        self
    }
}

/// A rooted tree of nodes with a partial map of observed labels.
///
/// Nodes are stored in ascending id order; all position-based accessors
/// refer to that order.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeInstance {
    nodes: Vec<TreeNode>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    post_order: Vec<usize>,
    root: usize,
    observed: Vec<Option<usize>>,
    dense_width: usize,
}

impl TreeInstance {
    pub fn new(
        mut nodes: Vec<TreeNode>,
        observed: &BTreeMap<usize, usize>,
        alphabet: &LabelAlphabet,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(CrfError::EmptyInstance);
        }
        nodes.sort_by_key(|n| n.id);
        let mut position = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if position.insert(node.id, i).is_some() {
                return Err(CrfError::InvalidTree(format!(
                    "duplicate node id {}",
                    node.id
                )));
            }
            for p in &node.predicates {
                check_predicate(p)?;
            }
            let bad_relation = node.relation.chars().any(|c| c.is_whitespace() || c == '|')
                || (node.relation.is_empty() && node.parent.is_some());
            if bad_relation {
                return Err(CrfError::InvalidTree(format!(
                    "node {} has an empty or malformed relation tag",
                    node.id
                )));
            }
        }

        let mut parent = vec![None; nodes.len()];
        let mut children = vec![Vec::new(); nodes.len()];
        let mut root: Option<usize> = None;
        for (i, node) in nodes.iter().enumerate() {
            match node.parent {
                None => {
                    if let Some(r) = root {
                        return Err(CrfError::InvalidTree(format!(
                            "two roots: nodes {} and {}",
                            nodes[r].id, node.id
                        )));
                    }
                    root = Some(i);
                }
                Some(pid) => {
                    let p = *position.get(&pid).ok_or_else(|| {
                        CrfError::InvalidTree(format!(
                            "node {} has unknown parent {}",
                            node.id, pid
                        ))
                    })?;
                    if p == i {
                        return Err(CrfError::InvalidTree(format!(
                            "node {} is its own parent",
                            node.id
                        )));
                    }
                    parent[i] = Some(p);
                    children[p].push(i);
                }
            }
        }
        let root = root.ok_or_else(|| CrfError::InvalidTree("no root".into()))?;

        // children are pushed in position order, i.e. node-id order
        let mut post_order = Vec::with_capacity(nodes.len());
        let mut stack = vec![(root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                post_order.push(v);
            } else {
                stack.push((v, true));
                for &c in children[v].iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        if post_order.len() != nodes.len() {
            return Err(CrfError::InvalidTree(
                "parent links contain a cycle or a disconnected component".into(),
            ));
        }

        let widths: Vec<usize> = nodes
            .iter()
            .filter_map(|n| n.dense.as_ref().map(Vec::len))
            .collect();
        let dense_width = match widths.first() {
            None => 0,
            Some(&w) => {
                if widths.len() != nodes.len() || widths.iter().any(|&x| x != w) {
                    return Err(CrfError::InvalidTree(
                        "dense feature vectors must be present on every node with one shared width"
                            .into(),
                    ));
                }
                if nodes
                    .iter()
                    .flat_map(|n| n.dense.iter().flatten())
                    .any(|v| !v.is_finite())
                {
                    return Err(CrfError::NonFinite("dense node feature".into()));
                }
                w
            }
        };

        let mut obs = vec![None; nodes.len()];
        for (&id, &label) in observed {
            let &i = position.get(&id).ok_or_else(|| {
                CrfError::InvalidTree(format!("observed label for unknown node {id}"))
            })?;
            alphabet.check(label)?;
            obs[i] = Some(label);
        }

        Ok(Self {
            nodes,
            parent,
            children,
            post_order,
            root,
            observed: obs,
            dense_width,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Every node after all of its descendants.
    pub fn post_order(&self) -> &[usize] {
        &self.post_order
    }

    pub fn observed(&self) -> &[Option<usize>] {
        &self.observed
    }

    pub fn dense_width(&self) -> usize {
        self.dense_width
    }

    pub fn fully_observed(&self) -> Option<Vec<usize>> {
        self.observed.iter().copied().collect()
    }

    /// Same tree with a different observation map (by position).
    pub fn with_observed(
        &self,
        observed: Vec<Option<usize>>,
        alphabet: &LabelAlphabet,
    ) -> Result<Self> {
        if observed.len() != self.len() {
            return Err(CrfError::LengthMismatch {
                expected: self.len(),
                got: observed.len(),
            });
        }
        for l in observed.iter().flatten() {
            alphabet.check(*l)?;
        }
        let mut t = self.clone();
        t.observed = observed;
        Ok(t)
    }
}
