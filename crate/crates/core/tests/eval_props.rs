use crftk_core::eval::{
    kappa, macro_f, macro_f_posneg, micro_f, span_prf, tags_to_spans, ConfusionCounts, KappaMode,
    Span, SpanSet,
};
use proptest::prelude::*;

const BACKGROUND: usize = 3;

/// Spans that may overlap one another.
fn overlapping(size: usize) -> impl Strategy<Value = SpanSet> {
    prop::collection::vec((0..size, 0..size, 0..3usize), 0..6).prop_map(move |raw| {
        let spans = raw
            .into_iter()
            .map(|(a, b, y)| Span::new(a.min(b), a.max(b), y))
            .collect();
        SpanSet::new(spans, size).unwrap()
    })
}

/// Tag sequences over three span labels plus a background tag.
fn tags(size: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..=BACKGROUND, size)
}

fn pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1..25usize).prop_flat_map(|n| (tags(n), tags(n)))
}

fn relabel(set: &SpanSet, perm: &[usize]) -> SpanSet {
    let spans = set
        .spans()
        .iter()
        .map(|s| Span::new(s.start, s.end, perm[s.label]))
        .collect();
    SpanSet::new(spans, set.size()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn precision_and_recall_swap_with_roles(
        (g, p) in (1..20usize).prop_flat_map(|n| (overlapping(n), overlapping(n))),
        label in 0..3usize,
    ) {
        let forward = span_prf(&g, &p, label).unwrap();
        let backward = span_prf(&p, &g, label).unwrap();
        prop_assert!((forward.precision - backward.recall).abs() < 1e-12);
        prop_assert!((forward.recall - backward.precision).abs() < 1e-12);
    }

    #[test]
    fn scores_stay_in_unit_interval((g, p) in pair(), label in 0..3usize) {
        let prf = span_prf(&tags_to_spans(&g, Some(BACKGROUND)), &tags_to_spans(&p, Some(BACKGROUND)), label).unwrap();
        for v in [prf.precision, prf.recall, prf.f1] {
            prop_assert!((0.0..=1.0).contains(&v), "{prf:?}");
        }
        let counts = ConfusionCounts::from_pairs(4, g.iter().copied().zip(p.iter().copied())).unwrap();
        let micro = micro_f(&counts).unwrap();
        prop_assert!((0.0..=1.0).contains(&micro));
        prop_assert!((0.0..=1.0).contains(&macro_f(&counts, &[0, 1, 2]).unwrap()));
    }

    #[test]
    fn proportional_kappa_never_exceeds_binary((g, p) in pair()) {
        let (a, b) = (tags_to_spans(&g, Some(BACKGROUND)), tags_to_spans(&p, Some(BACKGROUND)));
        let n = g.len();
        let binary = kappa(&a, &b, n, KappaMode::Binary).unwrap().kappa;
        let proportional = kappa(&a, &b, n, KappaMode::Proportional).unwrap().kappa;
        prop_assert!(proportional <= binary + 1e-12, "{proportional} > {binary}");
        prop_assert!(binary <= 1.0 && proportional <= 1.0);
    }

    #[test]
    fn kappa_ignores_label_names((g, p) in pair(), shift in 1..3usize) {
        let (a, b) = (tags_to_spans(&g, Some(BACKGROUND)), tags_to_spans(&p, Some(BACKGROUND)));
        let perm: Vec<usize> = (0..3).map(|y| (y + shift) % 3).collect();
        for mode in [KappaMode::Binary, KappaMode::Proportional] {
            let before = kappa(&a, &b, g.len(), mode).unwrap();
            let after = kappa(&relabel(&a, &perm), &relabel(&b, &perm), g.len(), mode).unwrap();
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn identical_annotations_agree_fully(g in (1..25usize).prop_flat_map(tags)) {
        let a = tags_to_spans(&g, Some(BACKGROUND));
        for mode in [KappaMode::Binary, KappaMode::Proportional] {
            prop_assert_eq!(kappa(&a, &a, g.len(), mode).unwrap().kappa, 1.0);
        }
        for label in 0..3 {
            let prf = span_prf(&a, &a, label).unwrap();
            prop_assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
        }
    }
}

#[test]
fn partial_overlap_example() {
    let g = SpanSet::new(vec![Span::new(2, 4, 0)], 8).unwrap();
    let p = SpanSet::new(vec![Span::new(3, 6, 0)], 8).unwrap();
    let prf = span_prf(&g, &p, 0).unwrap();
    assert!((prf.precision - 0.5).abs() < 1e-12);
    assert!((prf.recall - 2.0 / 3.0).abs() < 1e-12);
    assert!((prf.f1 - 0.5714).abs() < 1e-4);
}

#[test]
fn worked_agreement_example() {
    let a = SpanSet::new(vec![Span::new(0, 6, 0), Span::new(3, 5, 0)], 7).unwrap();
    let b = SpanSet::new(vec![Span::new(1, 6, 0), Span::new(3, 5, 0)], 7).unwrap();
    let binary = kappa(&a, &b, 7, KappaMode::Binary).unwrap();
    assert_eq!((binary.a1, binary.a2, binary.m1, binary.m2), (10, 9, 10, 9));
    assert_eq!(binary.kappa, 1.0);
    let proportional = kappa(&a, &b, 7, KappaMode::Proportional).unwrap();
    assert_eq!(
        (
            proportional.a1,
            proportional.a2,
            proportional.m1,
            proportional.m2
        ),
        (7, 6, 6, 6)
    );
    assert_eq!(proportional.kappa, 0.0);
}

#[test]
fn one_sided_annotation_has_zero_kappa() {
    let all = SpanSet::new(vec![Span::new(0, 4, 0)], 5).unwrap();
    let report = kappa(&all, &SpanSet::empty(5), 5, KappaMode::Proportional).unwrap();
    assert_eq!(
        (report.observed, report.chance, report.kappa),
        (0.0, 0.0, 0.0)
    );
    assert_eq!(
        kappa(&SpanSet::empty(5), &SpanSet::empty(5), 5, KappaMode::Binary)
            .unwrap()
            .kappa,
        1.0
    );
}

#[test]
fn overlapping_spans_can_invert_kappa_order() {
    // double counting inflates the chance term on the binary side
    let a = SpanSet::new(vec![Span::new(0, 1, 0), Span::new(0, 1, 0)], 10).unwrap();
    let b = SpanSet::new(vec![Span::new(5, 5, 0)], 10).unwrap();
    let binary = kappa(&a, &b, 10, KappaMode::Binary).unwrap().kappa;
    let proportional = kappa(&a, &b, 10, KappaMode::Proportional).unwrap().kappa;
    assert!(proportional > binary);
}

#[test]
fn class_scores() {
    // rows gold pos/neg/neu, columns predicted
    let counts =
        ConfusionCounts::from_matrix(vec![vec![8, 0, 2], vec![5, 5, 0], vec![0, 0, 10]]).unwrap();
    assert!((macro_f_posneg(&counts, 0, 1).unwrap() - 0.6812).abs() < 1e-4);
    assert!((micro_f(&counts).unwrap() - 23.0 / 30.0).abs() < 1e-12);

    let neutral =
        ConfusionCounts::from_matrix(vec![vec![0, 0, 3], vec![0, 0, 2], vec![0, 0, 5]]).unwrap();
    assert_eq!(macro_f_posneg(&neutral, 0, 1).unwrap(), 0.0);
    assert_eq!(micro_f(&neutral).unwrap(), 0.5);
    assert!(micro_f(&ConfusionCounts::new(3)).is_err());
}
