//! Line-based model files.
//!
//! ```text
//! CRFTK 1 chain1
//! [labels]
//! A
//! B
//! [params]
//! lambda1 0.0
//! lambda2 0.1
//! ...
//! [features]
//! w=the	A	0.25
//! #T	<s>|A	-1.5
//! [end]
//! ```
//!
//! Feature lines are `feature<TAB>label context<TAB>weight` in index order.
//! Weights are printed as shortest round-trip decimals, so loading a saved
//! model restores every weight bit for bit.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::alphabet::{LabelAlphabet, BOS};
use crate::error::{CrfError, Result};
use crate::features::{
    FeatureIndex, FeatureKey, FeatureRef, Templates, DENSE_PREFIX, EDGE_PREFIX, TRANSITION_TAG,
};

pub const MAGIC: &str = "CRFTK";
pub const FORMAT_VERSION: u32 = 1;
const END: &str = "[end]";
const NONE: &str = "_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Chain1,
    ChainK,
    SemiMarkov,
    Tree,
    Latent,
    LatentMarg,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Chain1,
        ModelKind::ChainK,
        ModelKind::SemiMarkov,
        ModelKind::Tree,
        ModelKind::Latent,
        ModelKind::LatentMarg,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Chain1 => "chain1",
            ModelKind::ChainK => "chainK",
            ModelKind::SemiMarkov => "semimarkov",
            ModelKind::Tree => "tree",
            ModelKind::Latent => "latent",
            ModelKind::LatentMarg => "latentmarg",
        }
    }

    pub fn is_latent(&self) -> bool {
        matches!(self, ModelKind::Latent | ModelKind::LatentMarg)
    }

    pub fn is_tree(&self) -> bool {
        matches!(
            self,
            ModelKind::Tree | ModelKind::Latent | ModelKind::LatentMarg
        )
    }

    fn accepts(&self, templates: Templates) -> bool {
        match (self, templates) {
            (ModelKind::Chain1, Templates::Chain { order, .. }) => order == 1,
            (ModelKind::ChainK, Templates::Chain { .. }) => true,
            (ModelKind::SemiMarkov, Templates::SemiMarkov { .. }) => true,
            (k, Templates::Tree) => k.is_tree(),
            _ => false,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = CrfError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CrfError::InvalidConfig(format!("unknown model kind {s:?}")))
    }
}

/// A trained model: labels, feature index, weights and training settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    kind: ModelKind,
    alphabet: LabelAlphabet,
    index: FeatureIndex,
    weights: Vec<f64>,
    lambda1: f64,
    lambda2: f64,
    reg: f64,
}

impl Model {
    pub fn new(
        kind: ModelKind,
        alphabet: LabelAlphabet,
        index: FeatureIndex,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if !kind.accepts(index.templates()) {
            return Err(CrfError::TemplateMismatch);
        }
        if alphabet.len() != index.num_labels() {
            return Err(CrfError::LengthMismatch {
                expected: alphabet.len(),
                got: index.num_labels(),
            });
        }
        index.check_weights(&weights)?;
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(CrfError::NonFinite(format!("weight {i}")));
        }
        Ok(Self {
            kind,
            alphabet,
            index,
            weights,
            lambda1: 0.0,
            lambda2: 0.0,
            reg: 0.0,
        })
    }

    /// Records the regularization strengths used in training.
    pub fn with_regularization(mut self, lambda1: f64, lambda2: f64, reg: f64) -> Result<Self> {
        for v in [lambda1, lambda2, reg] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CrfError::InvalidConfig(
                    "regularization strengths must be finite and non-negative".into(),
                ));
            }
        }
        self.lambda1 = lambda1;
        self.lambda2 = lambda2;
        self.reg = reg;
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    pub fn index(&self) -> &FeatureIndex {
        &self.index
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }
}

fn context_string(alphabet: &LabelAlphabet, context: &[Option<usize>]) -> Result<String> {
    Ok(context
        .iter()
        .map(|slot| alphabet.context_name(*slot))
        .collect::<Result<Vec<_>>>()?
        .join("|"))
}

/// Serializes a model to its text form.
pub fn save_model(model: &Model) -> Result<String> {
    let mut out = String::new();
    let index = &model.index;
    let alphabet = &model.alphabet;
    let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION} {}", model.kind);
    out.push_str("[labels]\n");
    for label in alphabet.labels() {
        out.push_str(label);
        out.push('\n');
    }
    out.push_str("[params]\n");
    let _ = writeln!(out, "lambda1 {:?}", model.lambda1);
    let _ = writeln!(out, "lambda2 {:?}", model.lambda2);
    let _ = writeln!(out, "min_count {}", index.min_count());
    let background = match alphabet.background() {
        Some(b) => alphabet.label(b)?,
        None => NONE,
    };
    let _ = writeln!(out, "background {background}");
    match index.templates() {
        Templates::Chain { order, bos } => {
            let _ = writeln!(out, "order {order}");
            let _ = writeln!(out, "bos {bos}");
        }
        Templates::SemiMarkov {
            max_seg_len,
            bos,
            length_features,
        } => {
            let _ = writeln!(out, "max_seg_len {max_seg_len}");
            let _ = writeln!(out, "bos {bos}");
            let _ = writeln!(out, "length_features {length_features}");
        }
        Templates::Tree => {
            let _ = writeln!(out, "dense_width {}", index.dense_width());
        }
    }
    if model.kind.is_latent() {
        let _ = writeln!(out, "reg {:?}", model.reg);
    }
    out.push_str("[features]\n");
    for (id, w) in model.weights.iter().enumerate() {
        let (feature, context) = match index.feature(id).expect("weights aligned with index") {
            FeatureRef::Dense { label, column } => (
                format!("{DENSE_PREFIX}{column}"),
                alphabet.label(label)?.to_string(),
            ),
            FeatureRef::Keyed(key) => (
                key.feature_string(),
                context_string(alphabet, &key.label_context())?,
            ),
        };
        let _ = writeln!(out, "{feature}\t{context}\t{w:?}");
    }
    out.push_str(END);
    out.push('\n');
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    current: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        let (i, line) = self.inner.next().ok_or(CrfError::Truncated)?;
        self.current = i + 1;
        Ok(line)
    }

    fn error(&self, message: impl Into<String>) -> CrfError {
        CrfError::MalformedModel {
            line: self.current,
            message: message.into(),
        }
    }

    fn expect(&mut self, section: &str) -> Result<()> {
        let line = self.next()?;
        if line != section {
            return Err(self.error(format!("expected {section}, found {line:?}")));
        }
        Ok(())
    }
}

fn parse_header(line: &str) -> Result<ModelKind> {
    let parts: Vec<&str> = line.split(' ').collect();
    let [magic, version, kind] = parts[..] else {
        return Err(CrfError::MalformedHeader(line.to_string()));
    };
    if magic != MAGIC {
        return Err(CrfError::MalformedHeader(line.to_string()));
    }
    if version != FORMAT_VERSION.to_string() {
        return Err(CrfError::VersionMismatch(version.to_string()));
    }
    kind.parse()
        .map_err(|_| CrfError::MalformedHeader(line.to_string()))
}

#[derive(Default)]
struct Params {
    entries: Vec<(String, String)>,
}

impl Params {
    fn take<T: FromStr>(&self, key: &str, lines: &Lines<'_>) -> Result<T> {
        let value = self
            .entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| lines.error(format!("missing parameter {key}")))?;
        value
            .parse()
            .map_err(|_| lines.error(format!("bad value {value:?} for {key}")))
    }
}

/// Parses a model written by [`save_model`].
pub fn load_model(text: &str) -> Result<Model> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        current: 0,
    };
    let header = lines
        .next()
        .map_err(|_| CrfError::MalformedHeader(String::new()))?;
    let kind = parse_header(header)?;

    lines.expect("[labels]")?;
    let mut labels = Vec::new();
    loop {
        let line = lines.next()?;
        if line == "[params]" {
            break;
        }
        labels.push(line.to_string());
    }
    let mut alphabet = LabelAlphabet::new(labels).map_err(|e| lines.error(e.to_string()))?;

    let mut params = Params::default();
    loop {
        let line = lines.next()?;
        if line == "[features]" {
            break;
        }
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| lines.error(format!("bad parameter line {line:?}")))?;
        if params.entries.iter().any(|(key, _)| key == k) {
            return Err(lines.error(format!("duplicate parameter {k}")));
        }
        params.entries.push((k.to_string(), v.to_string()));
    }
    let background: String = params.take("background", &lines)?;
    if background != NONE {
        alphabet = alphabet
            .with_background(&background)
            .map_err(|e| lines.error(e.to_string()))?;
    }
    let min_count: usize = params.take("min_count", &lines)?;
    let (templates, dense_width) = match kind {
        ModelKind::Chain1 | ModelKind::ChainK => (
            Templates::Chain {
                order: params.take("order", &lines)?,
                bos: params.take("bos", &lines)?,
            },
            0,
        ),
        ModelKind::SemiMarkov => (
            Templates::SemiMarkov {
                max_seg_len: params.take("max_seg_len", &lines)?,
                bos: params.take("bos", &lines)?,
                length_features: params.take("length_features", &lines)?,
            },
            0,
        ),
        _ => (Templates::Tree, params.take("dense_width", &lines)?),
    };
    let lambda1: f64 = params.take("lambda1", &lines)?;
    let lambda2: f64 = params.take("lambda2", &lines)?;
    let reg: f64 = if kind.is_latent() {
        params.take("reg", &lines)?
    } else {
        0.0
    };

    let l = alphabet.len();
    let mut dense = vec![None; l * dense_width];
    let mut keyed = Vec::new();
    loop {
        let line = lines.next()?;
        if line == END {
            break;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [feature, context, weight] = fields[..] else {
            return Err(lines.error(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        };
        let weight: f64 = weight
            .parse()
            .map_err(|_| lines.error(format!("bad weight {weight:?}")))?;
        if !weight.is_finite() {
            return Err(lines.error("non-finite weight"));
        }
        if let Some(column) = feature.strip_prefix(DENSE_PREFIX) {
            let column: usize = column
                .parse()
                .map_err(|_| lines.error(format!("bad dense column {column:?}")))?;
            let label = alphabet
                .index(context)
                .map_err(|e| lines.error(e.to_string()))?;
            if column >= dense_width {
                return Err(
                    lines.error(format!("dense column {column} beyond width {dense_width}"))
                );
            }
            let slot = &mut dense[label * dense_width + column];
            if slot.replace(weight).is_some() {
                return Err(lines.error("duplicate dense feature"));
            }
        } else {
            let key =
                parse_key(feature, context, &alphabet).map_err(|e| lines.error(e.to_string()))?;
            keyed.push((key, weight));
        }
    }
    if lines.inner.next().is_some() {
        return Err(lines.error("content after end marker"));
    }
    if dense.iter().any(Option::is_none) {
        return Err(lines.error("incomplete dense block"));
    }

    let count = keyed.len();
    let index = FeatureIndex::from_keys(
        l,
        templates,
        dense_width,
        min_count,
        keyed.iter().map(|(k, _)| k.clone()),
    )
    .map_err(|e| lines.error(e.to_string()))?;
    if index.keys().len() != count {
        return Err(lines.error("duplicate feature"));
    }
    let mut weights: Vec<f64> = dense.into_iter().flatten().collect();
    weights.resize(index.len(), 0.0);
    for (key, w) in keyed {
        weights[index.feature_id(&key).expect("key registered")] = w;
    }
    Model::new(kind, alphabet, index, weights)?.with_regularization(lambda1, lambda2, reg)
}

fn parse_key(feature: &str, context: &str, alphabet: &LabelAlphabet) -> Result<FeatureKey> {
    let slot = |name: &str| -> Result<Option<usize>> {
        if name == BOS {
            Ok(None)
        } else {
            alphabet.index(name).map(Some)
        }
    };
    if feature == TRANSITION_TAG {
        let ctx = context.split('|').map(slot).collect::<Result<Vec<_>>>()?;
        return Ok(FeatureKey::chain_transition(ctx));
    }
    if let Some(relation) = feature.strip_prefix(EDGE_PREFIX) {
        let (p, c) = context
            .split_once('|')
            .ok_or_else(|| CrfError::InvalidPredicate(format!("edge context {context:?}")))?;
        return Ok(FeatureKey::edge(
            relation,
            alphabet.index(p)?,
            alphabet.index(c)?,
        ));
    }
    Ok(FeatureKey::state(feature, alphabet.index(context)?))
}
