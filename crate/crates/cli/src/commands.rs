use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crftk_core::chain::{loglik_gradient, viterbi};
use crftk_core::eval::{kappa, macro_f, macro_f_posneg, micro_f, span_prf, tags_to_spans};
use crftk_core::latent::{constrained_map, predict_root, train_latent};
use crftk_core::semimarkov::{sm_loglik_gradient, sm_viterbi};
use crftk_core::tree::{tree_loglik_gradient, tree_map_decode};
use crftk_core::{
    build_feature_index, fit, ChainInstance, ChainPotentials, ConfusionCounts, Corpus,
    EncodedChain, FeatureIndex, FitConfig, KappaMode, LabelAlphabet, LatentMode,
    LatentObjectiveConfig, Model, ModelKind, SemiMarkovPotentials, Span, SpanSet, Templates,
    TreeInstance, TreeNode, TreePotentials,
};

use crate::formats::{parse_chains, parse_spans, parse_trees, ChainToken, Format, TreeLine};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub kind: ModelKind,
    /// Markov order for `chainK`.
    pub order: usize,
    pub max_seg_len: usize,
    pub length_features: bool,
    pub l1: f64,
    pub l2: f64,
    /// Defaults to 200 for likelihood training and 1000 for latent training.
    pub epochs: Option<usize>,
    pub tol: f64,
    pub min_count: usize,
    pub seed: u64,
    pub background: String,
    /// Coefficient of `½‖θ‖²` for latent kinds.
    pub reg: f64,
    pub eta0: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            kind: ModelKind::Chain1,
            order: 2,
            max_seg_len: 10,
            length_features: false,
            l1: 0.0,
            l2: 0.01,
            epochs: None,
            tol: 1e-6,
            min_count: 2,
            seed: 0,
            background: "NON".to_string(),
            reg: 1e-3,
            eta0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    pub objective: f64,
    pub epochs: usize,
}

fn alphabet_from(labels: BTreeSet<&str>, background: &str) -> Result<LabelAlphabet, CliError> {
    if labels.is_empty() {
        return Err(CliError::Data("training data carries no labels".into()));
    }
    let has_background = labels.contains(background);
    let alphabet = LabelAlphabet::new(labels)?;
    Ok(if has_background {
        alphabet.with_background(background)?
    } else {
        alphabet
    })
}

fn label_index(
    alphabet: &LabelAlphabet,
    label: &str,
    file: &str,
    line: usize,
) -> Result<usize, CliError> {
    alphabet.get(label).ok_or_else(|| {
        CliError::Data(format!(
            "{file}:{line}: label `{label}` is not in the model's label set ({})",
            alphabet.labels().join(" ")
        ))
    })
}

fn chain_instances(
    chains: &[Vec<ChainToken>],
    alphabet: &LabelAlphabet,
    file: &str,
    labeled: bool,
) -> Result<Vec<ChainInstance>, CliError> {
    chains
        .iter()
        .map(|tokens| {
            let obs = tokens.iter().map(|t| t.features.clone()).collect();
            let gold = if labeled {
                let gold = tokens
                    .iter()
                    .map(|t| match &t.label {
                        Some(l) => label_index(alphabet, l, file, t.line),
                        None => Err(CliError::parse(file, t.line, "token has no label")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Some(gold)
            } else {
                for t in tokens {
                    if let Some(l) = &t.label {
                        label_index(alphabet, l, file, t.line)?;
                    }
                }
                None
            };
            ChainInstance::new(obs, gold, alphabet).map_err(CliError::from)
        })
        .collect()
}

fn tree_instance(
    lines: &[TreeLine],
    alphabet: &LabelAlphabet,
    file: &str,
    keep_labels: bool,
) -> Result<TreeInstance, CliError> {
    let mut observed = BTreeMap::new();
    let nodes = lines
        .iter()
        .map(|l| {
            if let Some(label) = &l.label {
                let y = label_index(alphabet, label, file, l.line)?;
                if keep_labels {
                    observed.insert(l.id, y);
                }
            }
            let mut node = TreeNode::new(l.id, l.parent, l.relation.clone())
                .with_predicates(l.features.clone());
            node.dense = l.dense.clone();
            Ok(node)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    TreeInstance::new(nodes, &observed, alphabet).map_err(|e| match lines.first() {
        Some(first) => CliError::parse(file, first.line, e.to_string()),
        None => e.into(),
    })
}

fn templates_for(options: &TrainOptions) -> Result<Templates, CliError> {
    Ok(match options.kind {
        ModelKind::Chain1 => Templates::chain(1),
        ModelKind::ChainK => {
            if options.order == 0 {
                return Err(CliError::Usage("--order must be at least 1".into()));
            }
            Templates::chain(options.order)
        }
        ModelKind::SemiMarkov => {
            if options.max_seg_len == 0 {
                return Err(CliError::Usage("--max-seg-len must be at least 1".into()));
            }
            Templates::SemiMarkov {
                max_seg_len: options.max_seg_len,
                bos: true,
                length_features: options.length_features,
            }
        }
        _ => Templates::Tree,
    })
}

fn likelihood_fit<F>(
    objective: F,
    len: usize,
    options: &TrainOptions,
) -> Result<crftk_core::FitResult, CliError>
where
    F: FnMut(&[f64]) -> crftk_core::Result<(f64, Vec<f64>)>,
{
    let config = FitConfig {
        max_epochs: options.epochs.unwrap_or(200),
        tol: options.tol,
        ..FitConfig::default()
    };
    Ok(fit(objective, vec![0.0; len], &config)?)
}

/// Trains a model of `options.kind` on the labeled data in `text`.
pub fn train(text: &str, file: &str, options: &TrainOptions) -> Result<TrainOutcome, CliError> {
    let templates = templates_for(options)?;
    let kind = options.kind;
    let (alphabet, index, weights, objective, epochs) = if kind.is_tree() {
        let parsed = parse_trees(text, file, false)?;
        let labels = parsed
            .iter()
            .flatten()
            .filter_map(|l| l.label.as_deref())
            .collect();
        let alphabet = alphabet_from(labels, &options.background)?;
        let trees = parsed
            .iter()
            .map(|t| tree_instance(t, &alphabet, file, true))
            .collect::<Result<Vec<_>, _>>()?;
        let index = build_feature_index(
            Corpus::Trees(&trees),
            &alphabet,
            templates,
            options.min_count,
        )?;
        if kind == ModelKind::Tree {
            let r = likelihood_fit(
                |w| tree_loglik_gradient(&index, w, &trees, options.l1, options.l2),
                index.len(),
                options,
            )?;
            (alphabet, index, r.weights, r.objective, r.epochs)
        } else {
            let mode = if kind == ModelKind::Latent {
                LatentMode::Lcrf
            } else {
                LatentMode::Lmcrf
            };
            let defaults = LatentObjectiveConfig::for_mode(mode);
            let config = LatentObjectiveConfig {
                epochs: options.epochs.unwrap_or(defaults.epochs),
                eta0: options.eta0.unwrap_or(defaults.eta0),
                reg: options.reg,
                tol: options.tol,
                seed: options.seed,
                ..defaults
            };
            let r = train_latent(&index, &trees, None, &config)?;
            let objective = r.objective_trace.last().copied().unwrap_or(f64::NAN);
            (alphabet, index, r.weights, objective, r.epochs)
        }
    } else {
        let parsed = parse_chains(text, file, false)?;
        let labels = parsed
            .iter()
            .flatten()
            .filter_map(|t| t.label.as_deref())
            .collect();
        let alphabet = alphabet_from(labels, &options.background)?;
        let chains = chain_instances(&parsed, &alphabet, file, true)?;
        let index = build_feature_index(
            Corpus::Chains(&chains),
            &alphabet,
            templates,
            options.min_count,
        )?;
        let enc: Vec<EncodedChain> = chains
            .iter()
            .map(|c| EncodedChain::new(&index, c))
            .collect();
        let r = if kind == ModelKind::SemiMarkov {
            likelihood_fit(
                |w| sm_loglik_gradient(&index, w, &enc, options.l1, options.l2),
                index.len(),
                options,
            )?
        } else {
            likelihood_fit(
                |w| loglik_gradient(&index, w, &enc, options.l1, options.l2),
                index.len(),
                options,
            )?
        };
        (alphabet, index, r.weights, r.objective, r.epochs)
    };
    let reg = if kind.is_latent() { options.reg } else { 0.0 };
    let model = Model::new(kind, alphabet, index, weights)?
        .with_regularization(options.l1, options.l2, reg)?;
    Ok(TrainOutcome {
        model,
        objective,
        epochs,
    })
}

fn decode_chain(
    index: &FeatureIndex,
    weights: &[f64],
    chain: &ChainInstance,
    semi: bool,
) -> Result<Vec<usize>, CliError> {
    let enc = EncodedChain::new(index, chain);
    if semi {
        let pot = SemiMarkovPotentials::new(index, weights, &enc)?;
        Ok(sm_viterbi(&pot)?.0.to_labels())
    } else {
        let pot = ChainPotentials::new(index, weights, &enc)?;
        Ok(viterbi(&pot)?.0)
    }
}

fn decode_tree(model: &Model, tree: &TreeInstance) -> Result<Vec<usize>, CliError> {
    let (index, w) = (model.index(), model.weights());
    let mode = match model.kind() {
        ModelKind::Latent => LatentMode::Lcrf,
        ModelKind::LatentMarg => LatentMode::Lmcrf,
        _ => {
            let pot = TreePotentials::new(index, w, tree)?;
            return Ok(tree_map_decode(&pot, None)?.0);
        }
    };
    let root = predict_root(index, w, tree, mode)?;
    Ok(constrained_map(index, w, tree, root)?.0)
}

/// Appends the predicted label to every input line.
pub fn tag(model: &Model, text: &str, file: &str) -> Result<String, CliError> {
    let alphabet = model.alphabet();
    let mut out = String::new();
    if model.kind().is_tree() {
        for (n, lines) in parse_trees(text, file, false)?.iter().enumerate() {
            let tree = tree_instance(lines, alphabet, file, false)?;
            let labels = decode_tree(model, &tree)?;
            // nodes are stored by ascending id
            let mut ids: Vec<usize> = lines.iter().map(|l| l.id).collect();
            ids.sort_unstable();
            if n > 0 {
                out.push('\n');
            }
            for l in lines {
                let pos = ids
                    .binary_search(&l.id)
                    .expect("node ids come from this tree");
                writeln!(out, "{}\t{}", l.raw, alphabet.label(labels[pos])?).unwrap();
            }
        }
    } else {
        let parsed = parse_chains(text, file, false)?;
        let chains = chain_instances(&parsed, alphabet, file, false)?;
        let semi = model.kind() == ModelKind::SemiMarkov;
        for (n, (tokens, chain)) in parsed.iter().zip(&chains).enumerate() {
            let labels = decode_chain(model.index(), model.weights(), chain, semi)?;
            if n > 0 {
                out.push('\n');
            }
            for (t, y) in tokens.iter().zip(labels) {
                writeln!(out, "{}\t{}", t.raw, alphabet.label(y)?).unwrap();
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub format: Format,
    pub background: String,
    /// Positive and negative classes for the two-class macro-F.
    pub polarity: Option<(String, String)>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            format: Format::Chain,
            background: "NON".to_string(),
            polarity: None,
        }
    }
}

/// Gold and predicted label names per instance, aligned.
type Aligned = Vec<(Vec<String>, Vec<String>)>;

fn aligned_labels(
    gold: &str,
    gold_file: &str,
    pred: &str,
    pred_file: &str,
    format: Format,
) -> Result<Aligned, CliError> {
    let mismatch =
        |what: String| CliError::Data(format!("{gold_file} and {pred_file} differ: {what}"));
    let mut out = Vec::new();
    match format {
        Format::Chain => {
            let (g, p) = (
                parse_chains(gold, gold_file, false)?,
                parse_chains(pred, pred_file, true)?,
            );
            if g.len() != p.len() {
                return Err(mismatch(format!("{} vs {} instances", g.len(), p.len())));
            }
            for (gi, pi) in g.iter().zip(&p) {
                if gi.len() != pi.len() {
                    return Err(mismatch(format!(
                        "instance at line {} has {} vs {} tokens",
                        gi[0].line,
                        gi.len(),
                        pi.len()
                    )));
                }
                let mut pair = (Vec::new(), Vec::new());
                for (gt, pt) in gi.iter().zip(pi) {
                    let gl = gt
                        .label
                        .clone()
                        .ok_or_else(|| CliError::parse(gold_file, gt.line, "token has no label"))?;
                    let pl = pt
                        .label
                        .clone()
                        .ok_or_else(|| CliError::parse(pred_file, pt.line, "token has no label"))?;
                    pair.0.push(gl);
                    pair.1.push(pl);
                }
                out.push(pair);
            }
        }
        Format::Tree => {
            let (g, p) = (
                parse_trees(gold, gold_file, false)?,
                parse_trees(pred, pred_file, true)?,
            );
            if g.len() != p.len() {
                return Err(mismatch(format!("{} vs {} trees", g.len(), p.len())));
            }
            for (gi, pi) in g.iter().zip(&p) {
                let predicted: BTreeMap<usize, &TreeLine> = pi.iter().map(|l| (l.id, l)).collect();
                let mut pair = (Vec::new(), Vec::new());
                // nodes without a gold label are not scored
                for gl in gi {
                    let Some(label) = &gl.label else { continue };
                    let pl = predicted.get(&gl.id).ok_or_else(|| {
                        mismatch(format!(
                            "node {} of the tree at line {} is missing",
                            gl.id, gi[0].line
                        ))
                    })?;
                    let pred_label = pl
                        .label
                        .clone()
                        .ok_or_else(|| CliError::parse(pred_file, pl.line, "node has no label"))?;
                    pair.0.push(label.clone());
                    pair.1.push(pred_label);
                }
                out.push(pair);
            }
        }
    }
    Ok(out)
}

fn row(out: &mut String, name: &str, p: f64, r: f64, f: f64) {
    writeln!(out, "{name}\t{p:.4}\t{r:.4}\t{f:.4}").unwrap();
}

/// Per-label scores followed by macro- and micro-F.
///
/// Chain files are scored by proportional span overlap with spans taken as
/// runs of non-background labels; tree files by per-node class scores. The
/// macro-F averages token-level class F over the polarity pair when given,
/// otherwise over every non-background label. Micro-F is accuracy.
pub fn eval(
    gold: &str,
    gold_file: &str,
    pred: &str,
    pred_file: &str,
    options: &EvalOptions,
) -> Result<String, CliError> {
    let aligned = aligned_labels(gold, gold_file, pred, pred_file, options.format)?;
    let names: BTreeSet<&str> = aligned
        .iter()
        .flat_map(|(g, p)| g.iter().chain(p))
        .map(String::as_str)
        .collect();
    if names.is_empty() {
        return Err(CliError::Data("nothing to evaluate".into()));
    }
    let alphabet = LabelAlphabet::new(names.iter().copied())?;
    let background = alphabet.get(&options.background);
    let ids = |v: &[String]| {
        v.iter()
            .map(|l| alphabet.get(l).expect("collected above"))
            .collect::<Vec<_>>()
    };

    let mut counts = ConfusionCounts::new(alphabet.len());
    let (mut gold_spans, mut pred_spans, mut offset) = (Vec::new(), Vec::new(), 0);
    for (g, p) in &aligned {
        let (g, p) = (ids(g), ids(p));
        for (&a, &b) in g.iter().zip(&p) {
            counts.add(a, b)?;
        }
        for (tags, spans) in [(&g, &mut gold_spans), (&p, &mut pred_spans)] {
            spans.extend(
                tags_to_spans(tags, background)
                    .spans()
                    .iter()
                    .map(|s| Span::new(s.start + offset, s.end + offset, s.label)),
            );
        }
        offset += g.len();
    }
    let scored: Vec<usize> = (0..alphabet.len())
        .filter(|&y| Some(y) != background)
        .collect();

    let mut out = String::from("label\tP\tR\tF\n");
    match options.format {
        Format::Chain => {
            let gold_set = SpanSet::new(gold_spans, offset)?;
            let pred_set = SpanSet::new(pred_spans, offset)?;
            for &y in &scored {
                let s = span_prf(&gold_set, &pred_set, y)?;
                row(&mut out, alphabet.label(y)?, s.precision, s.recall, s.f1);
            }
        }
        Format::Tree => {
            for &y in &scored {
                let s = counts.class_prf(y)?;
                row(&mut out, alphabet.label(y)?, s.precision, s.recall, s.f1);
            }
        }
    }
    let macro_score = match &options.polarity {
        Some((pos, neg)) => {
            let find = |l: &str| {
                alphabet
                    .get(l)
                    .ok_or_else(|| CliError::Data(format!("class `{l}` occurs in neither file")))
            };
            macro_f_posneg(&counts, find(pos)?, find(neg)?)?
        }
        None if scored.is_empty() => 0.0,
        None => macro_f(&counts, &scored)?,
    };
    writeln!(out, "macro-F\t{macro_score:.4}").unwrap();
    writeln!(out, "micro-F\t{:.4}", micro_f(&counts)?).unwrap();
    Ok(out)
}

/// Agreement table with one row per span label over a text of `size` tokens.
pub fn agree(
    first: &str,
    first_file: &str,
    second: &str,
    second_file: &str,
    size: usize,
    mode: KappaMode,
) -> Result<String, CliError> {
    let (a, b) = (
        parse_spans(first, first_file)?,
        parse_spans(second, second_file)?,
    );
    let labels: BTreeSet<&str> = a.iter().chain(&b).map(|(_, _, l)| l.as_str()).collect();
    let select = |spans: &[(usize, usize, String)], label: &str| {
        let chosen = spans
            .iter()
            .filter(|(_, _, l)| l == label)
            .map(|&(s, e, _)| Span::new(s, e, 0))
            .collect();
        SpanSet::new(chosen, size)
    };
    let mut out = String::from("Element\tM1\tA1\tM2\tA2\tκ\n");
    for label in labels {
        let r = kappa(&select(&a, label)?, &select(&b, label)?, size, mode)?;
        writeln!(
            out,
            "{label}\t{}\t{}\t{}\t{}\t{:.4}",
            r.m1, r.a1, r.m2, r.a2, r.kappa
        )
        .unwrap();
    }
    Ok(out)
}
