//! Semi-Markov CRFs over segmentations into labeled spans.
//!
//! Adjacent segments always carry different labels; transition features fire
//! once per segment boundary (or out of the boundary context for the first
//! segment), state features fire at every position a segment covers, and the
//! optional length indicator fires once per segment.

use std::collections::HashMap;

use crate::chain::{context_code, EncodedChain};
use crate::error::{CrfError, Result};
use crate::features::{length_predicate, FeatureIndex, FeatureKey, Templates};
use crate::logspace::log_sum_exp_iter;
use crate::params::apply_regularizer;

/// A labeled span `[start, end]` (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub label: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize, label: usize) -> Self {
        Self { start, end, label }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A tiling of `[0, n)` into segments of at most `max_len` tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLabeling {
    segments: Vec<Segment>,
    max_len: usize,
}

impl SegmentLabeling {
    pub fn new(segments: Vec<Segment>, len: usize, max_len: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(CrfError::ZeroSegmentLength);
        }
        let mut next = 0;
        for (k, seg) in segments.iter().enumerate() {
            if seg.start != next || seg.end < seg.start {
                return Err(CrfError::InvalidSegmentation(format!(
                    "segment {k} [{}, {}] does not continue at {next}",
                    seg.start, seg.end
                )));
            }
            if seg.len() > max_len {
                return Err(CrfError::SegmentTooLong {
                    instance: 0,
                    start: seg.start,
                    end: seg.end,
                    max_len,
                });
            }
            if k > 0 && segments[k - 1].label == seg.label {
                return Err(CrfError::InvalidSegmentation(format!(
                    "adjacent segments {} and {k} share label {}",
                    k - 1,
                    seg.label
                )));
            }
            next = seg.end + 1;
        }
        if next != len {
            return Err(CrfError::InvalidSegmentation(format!(
                "segments cover {next} of {len} positions"
            )));
        }
        Ok(Self { segments, max_len })
    }

    /// Canonical labeling from per-token labels: maximal runs become segments.
    pub fn from_labels(labels: &[usize], max_len: usize) -> Result<Self> {
        let mut segments: Vec<Segment> = Vec::new();
        for (i, &y) in labels.iter().enumerate() {
            match segments.last_mut() {
                Some(seg) if seg.label == y => seg.end = i,
                _ => segments.push(Segment::new(i, i, y)),
            }
        }
        Self::new(segments, labels.len(), max_len)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn to_labels(&self) -> Vec<usize> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat(s.label).take(s.len()))
            .collect()
    }
}

/// Log-domain scores of one chain under a semi-Markov model.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiMarkovPotentials {
    num_labels: usize,
    max_len: usize,
    len: usize,
    state: Vec<f64>,
    trans: Vec<f64>,
    length: Vec<f64>,
}

impl SemiMarkovPotentials {
    pub fn new(index: &FeatureIndex, weights: &[f64], chain: &EncodedChain) -> Result<Self> {
        index.check_weights(weights)?;
        let Templates::SemiMarkov { max_seg_len, .. } = index.templates() else {
            return Err(CrfError::TemplateMismatch);
        };
        let l = index.num_labels();
        let mut state = vec![0.0; chain.len() * l];
        for (i, preds) in chain.predicates.iter().enumerate() {
            for &pid in preds {
                for y in 0..l {
                    if let Some(f) = index.state_feature(pid, y) {
                        state[i * l + y] += weights[f];
                    }
                }
            }
        }
        let mut trans = vec![0.0; (l + 1) * (l + 1)];
        for (context, f) in index.chain_transitions() {
            trans[context_code(context, l)] += weights[*f];
        }
        let mut length = vec![0.0; max_seg_len * l];
        for d in 1..=max_seg_len {
            if let Some(pid) = index.predicate_id(&length_predicate(d)) {
                for y in 0..l {
                    if let Some(f) = index.state_feature(pid, y) {
                        length[(d - 1) * l + y] = weights[f];
                    }
                }
            }
        }
        Ok(Self {
            num_labels: l,
            max_len: max_seg_len,
            len: chain.len(),
            state,
            trans,
            length,
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

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Log score of labeling `[start, end]` as one segment with label `y`.
    pub fn segment_state_score(&self, y: usize, start: usize, end: usize) -> Result<f64> {
        if start > end || end >= self.len || end - start >= self.max_len {
            return Err(CrfError::InvalidSpan {
                start,
                end,
                max_len: self.max_len,
                len: self.len,
            });
        }
        if y >= self.num_labels {
            return Err(CrfError::LabelOutOfRange {
                index: y,
                size: self.num_labels,
            });
        }
        Ok(self.seg(y, start, end))
    }

    fn seg(&self, y: usize, start: usize, end: usize) -> f64 {
        let l = self.num_labels;
        let mut s = 0.0;
        for j in start..=end {
            s += self.state[j * l + y];
        }
        s + self.length[(end - start) * l + y]
    }

    /// Transition score from `prev` (`None` for the boundary) into `y`.
    pub fn transition_score(&self, prev: Option<usize>, y: usize) -> f64 {
        self.trans[prev.unwrap_or(self.num_labels) * (self.num_labels + 1) + y]
    }

    pub fn labeling_score(&self, labeling: &SegmentLabeling) -> Result<f64> {
        let mut prev = None;
        let mut total = 0.0;
        for seg in labeling.segments() {
            total += self.transition_score(prev, seg.label)
                + self.segment_state_score(seg.label, seg.start, seg.end)?;
            prev = Some(seg.label);
        }
        Ok(total)
    }

    /// `[start][len - 1][label]` segment scores, `-inf` past the end.
    fn segment_table(&self) -> Vec<Vec<Vec<f64>>> {
        let (n, l) = (self.len, self.num_labels);
        let mut table = vec![vec![vec![f64::NEG_INFINITY; l]; self.max_len]; n];
        for (s, per_start) in table.iter_mut().enumerate() {
            for y in 0..l {
                let mut acc = 0.0;
                for d in 0..self.max_len.min(n - s) {
                    acc += self.state[(s + d) * l + y];
                    per_start[d][y] = acc + self.length[d * l + y];
                }
            }
        }
        table
    }
}

/// Semi-Markov forward/backward tables and marginals.
///
/// `alpha[i][y]`: all segmentations of `[0, i]` whose last segment ends at `i`
/// with label `y`. `beta[i][y]`: all continuations after a `y` segment ending
/// at `i`. `segment_marginals[start][len - 1][y]`; `boundary_marginals[i][prev][y]`
/// is the probability that a `y` segment starts at `i` after a `prev` segment
/// (`prev = |labels|` is the boundary context, only at `i = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTrellis {
    pub log_z: f64,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub segment_marginals: Vec<Vec<Vec<f64>>>,
    pub boundary_marginals: Vec<Vec<Vec<f64>>>,
}

impl SegmentTrellis {
    pub fn segment_marginal(&self, y: usize, start: usize, end: usize) -> f64 {
        self.segment_marginals
            .get(start)
            .and_then(|s| s.get(end.wrapping_sub(start)))
            .map_or(0.0, |d| d[y])
    }

    /// `[position][label]` probability that a `label` segment covers the position.
    pub fn coverage_marginals(&self) -> Vec<Vec<f64>> {
        let n = self.segment_marginals.len();
        let l = self.alpha.first().map_or(0, Vec::len);
        let mut cov = vec![vec![0.0; l]; n];
        for (s, per_start) in self.segment_marginals.iter().enumerate() {
            for (d, probs) in per_start.iter().enumerate() {
                for j in s..(s + d + 1).min(n) {
                    for (y, p) in probs.iter().enumerate() {
                        cov[j][y] += p;
                    }
                }
            }
        }
        cov
    }
}

pub fn sm_forward_backward(pot: &SemiMarkovPotentials) -> Result<SegmentTrellis> {
    if pot.is_empty() {
        return Err(CrfError::EmptyInstance);
    }
    let (n, l, max_len) = (pot.len, pot.num_labels, pot.max_len);
    let seg = pot.segment_table();
    let neg = f64::NEG_INFINITY;

    // entry[s][y]: everything before a y segment starting at s, plus the transition into it
    let mut entry = vec![vec![neg; l]; n];
    let mut alpha = vec![vec![neg; l]; n];
    for e in 0..n {
        for y in 0..l {
            entry[e][y] = if e == 0 {
                pot.transition_score(None, y)
            } else {
                log_sum_exp_iter(
                    (0..l)
                        .filter(|&yp| yp != y)
                        .map(|yp| alpha[e - 1][yp] + pot.transition_score(Some(yp), y)),
                )
            };
        }
        for y in 0..l {
            alpha[e][y] = log_sum_exp_iter(
                (0..max_len.min(e + 1)).map(|d| entry[e - d][y] + seg[e - d][d][y]),
            );
        }
    }
    let log_z = log_sum_exp_iter(alpha[n - 1].iter().copied());
    if !log_z.is_finite() {
        return Err(CrfError::NonFinite("log partition".into()));
    }

    // exit[s][y]: a y segment starting at s and everything after it
    let mut beta = vec![vec![neg; l]; n];
    let mut exit = vec![vec![neg; l]; n];
    for s in (0..n).rev() {
        for y in 0..l {
            beta[s][y] = if s == n - 1 {
                0.0
            } else {
                log_sum_exp_iter(
                    (0..l)
                        .filter(|&yn| yn != y)
                        .map(|yn| pot.transition_score(Some(y), yn) + exit[s + 1][yn]),
                )
            };
        }
        for y in 0..l {
            exit[s][y] =
                log_sum_exp_iter((0..max_len.min(n - s)).map(|d| seg[s][d][y] + beta[s + d][y]));
        }
    }

    let mut segment_marginals = vec![vec![vec![0.0; l]; max_len]; n];
    for s in 0..n {
        for d in 0..max_len.min(n - s) {
            for y in 0..l {
                segment_marginals[s][d][y] =
                    (entry[s][y] + seg[s][d][y] + beta[s + d][y] - log_z).exp();
            }
        }
    }
    let mut boundary_marginals = vec![vec![vec![0.0; l]; l + 1]; n];
    for y in 0..l {
        boundary_marginals[0][l][y] = (pot.transition_score(None, y) + exit[0][y] - log_z).exp();
    }
    for s in 1..n {
        for yp in 0..l {
            for y in 0..l {
                if yp != y {
                    boundary_marginals[s][yp][y] =
                        (alpha[s - 1][yp] + pot.transition_score(Some(yp), y) + exit[s][y] - log_z)
                            .exp();
                }
            }
        }
    }
    Ok(SegmentTrellis {
        log_z,
        alpha,
        beta,
        segment_marginals,
        boundary_marginals,
    })
}

/// Best segmentation and its log score. Ties prefer the lowest predecessor
/// label (the boundary context last), then the shortest segment; the final
/// segment takes the lowest label.
pub fn sm_viterbi(pot: &SemiMarkovPotentials) -> Result<(SegmentLabeling, f64)> {
    if pot.is_empty() {
        return Err(CrfError::EmptyInstance);
    }
    let (n, l, max_len) = (pot.len, pot.num_labels, pot.max_len);
    let seg = pot.segment_table();
    let mut delta = vec![vec![f64::NEG_INFINITY; l]; n];
    let mut back: Vec<Vec<(usize, Option<usize>)>> = vec![vec![(0, None); l]; n];
    for e in 0..n {
        for y in 0..l {
            let mut best = f64::NEG_INFINITY;
            let mut arg = (0, None);
            for yp in (0..l).map(Some).chain(std::iter::once(None)) {
                for d in 0..max_len.min(e + 1) {
                    let s = e - d;
                    let prefix = match yp {
                        None if s == 0 => pot.transition_score(None, y),
                        Some(yp) if s > 0 && yp != y => {
                            delta[s - 1][yp] + pot.transition_score(Some(yp), y)
                        }
                        _ => continue,
                    };
                    let v = prefix + seg[s][d][y];
                    if v > best {
                        best = v;
                        arg = (d, yp);
                    }
                }
            }
            delta[e][y] = best;
            back[e][y] = arg;
        }
    }
    let mut y = 0;
    for c in 1..l {
        if delta[n - 1][c] > delta[n - 1][y] {
            y = c;
        }
    }
    let score = delta[n - 1][y];
    if !score.is_finite() {
        return Err(CrfError::NonFinite("no admissible segmentation".into()));
    }
    let mut segments = Vec::new();
    let mut e = n - 1;
    loop {
        let (d, prev) = back[e][y];
        segments.push(Segment::new(e - d, e, y));
        match prev {
            Some(p) => {
                e = e - d - 1;
                y = p;
            }
            None => break,
        }
    }
    segments.reverse();
    Ok((SegmentLabeling::new(segments, n, max_len)?, score))
}

/// Regularized log-likelihood of fully labeled chains under a semi-Markov
/// model; gold labels are canonicalized to maximal runs.
pub fn sm_loglik_gradient(
    index: &FeatureIndex,
    weights: &[f64],
    batch: &[EncodedChain],
    lambda1: f64,
    lambda2: f64,
) -> Result<(f64, Vec<f64>)> {
    index.check_weights(weights)?;
    let Templates::SemiMarkov { max_seg_len, .. } = index.templates() else {
        return Err(CrfError::TemplateMismatch);
    };
    let l = index.num_labels();
    let trans_ids: HashMap<usize, usize> = index
        .chain_transitions()
        .iter()
        .map(|(context, f)| (context_code(context, l), *f))
        .collect();
    let length_ids: Vec<Vec<Option<usize>>> = (1..=max_seg_len)
        .map(|d| {
            (0..l)
                .map(|y| index.feature_id(&FeatureKey::state(length_predicate(d), y)))
                .collect()
        })
        .collect();

    let mut value = 0.0;
    let mut grad = vec![0.0; index.len()];
    for (m, chain) in batch.iter().enumerate() {
        let labels: Vec<usize> = chain
            .gold
            .iter()
            .copied()
            .collect::<Option<_>>()
            .ok_or(CrfError::Unlabeled(m))?;
        let gold = SegmentLabeling::from_labels(&labels, max_seg_len).map_err(|e| match e {
            CrfError::SegmentTooLong {
                start,
                end,
                max_len,
                ..
            } => CrfError::SegmentTooLong {
                instance: m,
                start,
                end,
                max_len,
            },
            other => other,
        })?;
        let pot = SemiMarkovPotentials::new(index, weights, chain)?;
        let trellis = sm_forward_backward(&pot)?;
        value += pot.labeling_score(&gold)? - trellis.log_z;

        let mut prev = l;
        for seg in gold.segments() {
            for j in seg.start..=seg.end {
                for &pid in &chain.predicates[j] {
                    if let Some(f) = index.state_feature(pid, seg.label) {
                        grad[f] += 1.0;
                    }
                }
            }
            if let Some(f) = length_ids[seg.len() - 1][seg.label] {
                grad[f] += 1.0;
            }
            if let Some(&f) = trans_ids.get(&(prev * (l + 1) + seg.label)) {
                grad[f] += 1.0;
            }
            prev = seg.label;
        }

        let coverage = trellis.coverage_marginals();
        for (j, preds) in chain.predicates.iter().enumerate() {
            for &pid in preds {
                for (y, p) in coverage[j].iter().enumerate() {
                    if let Some(f) = index.state_feature(pid, y) {
                        grad[f] -= p;
                    }
                }
            }
        }
        for per_start in &trellis.segment_marginals {
            for (d, probs) in per_start.iter().enumerate() {
                for (y, p) in probs.iter().enumerate() {
                    if let Some(f) = length_ids[d][y] {
                        grad[f] -= p;
                    }
                }
            }
        }
        for (&code, &f) in &trans_ids {
            let (prev, y) = (code / (l + 1), code % (l + 1));
            grad[f] -= trellis
                .boundary_marginals
                .iter()
                .map(|b| b[prev][y])
                .sum::<f64>();
        }
    }
    apply_regularizer(weights, lambda1, lambda2, &mut value, &mut grad);
    Ok((value, grad))
}
