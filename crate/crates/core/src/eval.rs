//! Span-overlap scores, class-level F measures and span agreement.

use std::collections::BTreeSet;

use crate::error::{CrfError, Result};

/// A labeled inclusive token span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: usize,
}

impl Span {
    pub fn new(start: usize, end: usize, label: usize) -> Self {
        Self { start, end, label }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn overlap(&self, other: &Span) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        if lo <= hi {
            hi - lo + 1
        } else {
            0
        }
    }
}

/// Spans over a universe of `size` tokens. Spans may overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanSet {
    spans: Vec<Span>,
    size: usize,
}

impl SpanSet {
    pub fn new(spans: Vec<Span>, size: usize) -> Result<Self> {
        for s in &spans {
            if s.start > s.end || s.end >= size {
                return Err(CrfError::SpanOutOfUniverse {
                    start: s.start,
                    end: s.end,
                    size,
                });
            }
        }
        Ok(Self { spans, size })
    }

    pub fn empty(size: usize) -> Self {
        Self {
            spans: Vec::new(),
            size,
        }
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Labels that occur on at least one span.
    pub fn labels(&self) -> BTreeSet<usize> {
        self.spans.iter().map(|s| s.label).collect()
    }

    fn with_label(&self, label: usize) -> Vec<Span> {
        self.spans
            .iter()
            .filter(|s| s.label == label)
            .copied()
            .collect()
    }
}

/// Maximal runs of one non-background label.
pub fn tags_to_spans(labels: &[usize], background: Option<usize>) -> SpanSet {
    let mut spans: Vec<Span> = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if Some(y) == background {
            continue;
        }
        match spans.last_mut() {
            Some(s) if s.label == y && s.end + 1 == i => s.end = i,
            _ => spans.push(Span::new(i, i, y)),
        }
    }
    SpanSet {
        spans,
        size: labels.len(),
    }
}

/// Precision, recall and F1 of one label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Proportional span overlap for spans of `label`: each gold/predicted pair
/// earns `|g∩p| / |p|` toward precision and `|g∩p| / |g|` toward recall.
pub fn span_prf(gold: &SpanSet, pred: &SpanSet, label: usize) -> Result<Prf> {
    if gold.size != pred.size {
        return Err(CrfError::UniverseMismatch(gold.size, pred.size));
    }
    let g = gold.with_label(label);
    let p = pred.with_label(label);
    match (g.is_empty(), p.is_empty()) {
        (true, true) => return Ok(Prf::new(1.0, 1.0)),
        (true, false) | (false, true) => {
            return Ok(Prf {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            })
        }
        _ => {}
    }
    let mut precision = 0.0;
    let mut recall = 0.0;
    for gs in &g {
        for ps in &p {
            let o = gs.overlap(ps) as f64;
            precision += o / ps.len() as f64;
            recall += o / gs.len() as f64;
        }
    }
    Ok(Prf::new(
        precision / p.len() as f64,
        recall / g.len() as f64,
    ))
}

/// Square count matrix, `[gold][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    counts: Vec<Vec<u64>>,
}

impl ConfusionCounts {
    pub fn new(num_labels: usize) -> Self {
        Self {
            counts: vec![vec![0; num_labels]; num_labels],
        }
    }

    pub fn from_matrix(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if let Some(row) = counts.iter().find(|r| r.len() != n) {
            return Err(CrfError::LengthMismatch {
                expected: n,
                got: row.len(),
            });
        }
        Ok(Self { counts })
    }

    pub fn from_pairs(
        num_labels: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut c = Self::new(num_labels);
        for (g, p) in pairs {
            c.add(g, p)?;
        }
        Ok(c)
    }

    pub fn add(&mut self, gold: usize, pred: usize) -> Result<()> {
        let n = self.counts.len();
        for y in [gold, pred] {
            if y >= n {
                return Err(CrfError::LabelOutOfRange { index: y, size: n });
            }
        }
        self.counts[gold][pred] += 1;
        Ok(())
    }

    pub fn num_labels(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold][pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn check(&self, label: usize) -> Result<()> {
        if self.total() == 0 {
            return Err(CrfError::EmptyConfusion);
        }
        if label >= self.counts.len() {
            return Err(CrfError::LabelOutOfRange {
                index: label,
                size: self.counts.len(),
            });
        }
        Ok(())
    }

    /// Per-class scores; zero denominators give 0.
    pub fn class_prf(&self, label: usize) -> Result<Prf> {
        self.check(label)?;
        let tp = self.counts[label][label] as f64;
        let predicted: u64 = self.counts.iter().map(|r| r[label]).sum();
        let actual: u64 = self.counts[label].iter().sum();
        let ratio = |d: u64| if d == 0 { 0.0 } else { tp / d as f64 };
        Ok(Prf::new(ratio(predicted), ratio(actual)))
    }
}

/// Mean F1 of the positive and negative classes.
pub fn macro_f_posneg(counts: &ConfusionCounts, pos: usize, neg: usize) -> Result<f64> {
    if pos == neg {
        return Err(CrfError::InvalidConfig(
            "positive and negative classes must differ".into(),
        ));
    }
    Ok((counts.class_prf(pos)?.f1 + counts.class_prf(neg)?.f1) / 2.0)
}

/// Mean F1 over the given classes.
pub fn macro_f(counts: &ConfusionCounts, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(CrfError::InvalidConfig("no classes to average".into()));
    }
    let mut total = 0.0;
    for &y in labels {
        total += counts.class_prf(y)?.f1;
    }
    Ok(total / labels.len() as f64)
}

/// Accuracy: diagonal mass over total.
pub fn micro_f(counts: &ConfusionCounts) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(CrfError::EmptyConfusion);
    }
    let diag: u64 = (0..counts.num_labels()).map(|y| counts.counts[y][y]).sum();
    Ok(diag as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaMode {
    /// Tokens count once per covering span; a span matches in full if it
    /// shares any token with a span of the other annotation.
    Binary,
    /// Tokens count once; matches are tokens labeled on both sides.
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaReport {
    pub kappa: f64,
    pub m1: usize,
    pub a1: usize,
    pub m2: usize,
    pub a2: usize,
    pub observed: f64,
    pub chance: f64,
}

/// Chance-corrected token agreement between two annotations of one markable
/// class over `size` tokens. Span labels are ignored.
pub fn kappa(ann1: &SpanSet, ann2: &SpanSet, size: usize, mode: KappaMode) -> Result<KappaReport> {
    for ann in [ann1, ann2] {
        if ann.size != size {
            return Err(CrfError::UniverseMismatch(ann.size, size));
        }
    }
    let (m1, a1, m2, a2) = match mode {
        KappaMode::Binary => {
            let count = |a: &SpanSet, b: &SpanSet| {
                let total: usize = a.spans.iter().map(Span::len).sum();
                let matched: usize = a
                    .spans
                    .iter()
                    .filter(|s| b.spans.iter().any(|o| s.overlap(o) > 0))
                    .map(Span::len)
                    .sum();
                (matched, total)
            };
            let (m1, a1) = count(ann1, ann2);
            let (m2, a2) = count(ann2, ann1);
            (m1, a1, m2, a2)
        }
        KappaMode::Proportional => {
            let tokens = |a: &SpanSet| {
                a.spans
                    .iter()
                    .flat_map(|s| s.start..=s.end)
                    .collect::<BTreeSet<usize>>()
            };
            let (t1, t2) = (tokens(ann1), tokens(ann2));
            let m = t1.intersection(&t2).count();
            for a in [t1.len(), t2.len()] {
                if a > size {
                    return Err(CrfError::KappaOverflow { count: a, size });
                }
            }
            (m, t1.len(), m, t2.len())
        }
    };
    if size == 0 {
        return Ok(KappaReport {
            kappa: 1.0,
            m1,
            a1,
            m2,
            a2,
            observed: 1.0,
            chance: 1.0,
        });
    }
    let t = size as f64;
    let observed = (t - a1 as f64 + m1 as f64 - a2 as f64 + m2 as f64) / t;
    let (c1, c2) = (a1 as f64 / t, a2 as f64 / t);
    let chance = c1 * c2 + (1.0 - c1) * (1.0 - c2);
    let kappa = if observed == 1.0 {
        1.0
    } else if chance == 1.0 {
        0.0
    } else {
        (observed - chance) / (1.0 - chance)
    };
    Ok(KappaReport {
        kappa,
        m1,
        a1,
        m2,
        a2,
        observed,
        chance,
    })
}
