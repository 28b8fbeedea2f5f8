//! Line-oriented readers for chain, tree and span files.
//!
//! Chain files hold one token per line, `token<TAB>features<TAB>label`, with
//! features separated by spaces and a blank line between instances. Tree
//! files hold one node per line,
//! `id<TAB>parent-or-0<TAB>relation<TAB>[dense:v1,v2,...|]features<TAB>label-or-_`.
//! Span files hold `start<TAB>end<TAB>label` with inclusive token offsets.
//! Lines starting with `#` are comments everywhere.

use crate::CliError;

/// One token line. `raw` keeps the input text so tagging can echo it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainToken {
    pub line: usize,
    pub raw: String,
    pub features: Vec<String>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeLine {
    pub line: usize,
    pub raw: String,
    pub id: usize,
    pub parent: Option<usize>,
    pub relation: String,
    pub features: Vec<String>,
    pub dense: Option<Vec<f64>>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Chain,
    Tree,
}

fn blocks<'a>(text: &'a str) -> Vec<Vec<(usize, &'a str)>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        } else {
            current.push((i + 1, line));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

fn split_features(column: &str) -> Vec<String> {
    column.split_whitespace().map(str::to_string).collect()
}

/// Label column, or `None` for `_`. `last` selects the final column when
/// tagged output has an extra prediction appended.
fn label_column(columns: &[&str], at: usize, last: bool) -> Option<String> {
    let col = if last {
        columns.last()
    } else {
        columns.get(at)
    };
    match col {
        Some(&"_") | None => None,
        Some(l) => Some(l.trim().to_string()),
    }
}

/// Parses a chain file. With `last_label`, the label is the final column of
/// each line (so tagger output can be read back).
pub fn parse_chains(
    text: &str,
    source: &str,
    last_label: bool,
) -> Result<Vec<Vec<ChainToken>>, CliError> {
    blocks(text)
        .into_iter()
        .map(|block| {
            block
                .into_iter()
                .map(|(line, raw)| {
                    let columns: Vec<&str> = raw.split('\t').collect();
                    if columns.len() < 2 {
                        return Err(CliError::parse(
                            source,
                            line,
                            "expected token<TAB>features[<TAB>label]",
                        ));
                    }
                    let label = if columns.len() > 2 {
                        label_column(&columns, 2, last_label)
                    } else {
                        None
                    };
                    Ok(ChainToken {
                        line,
                        raw: raw.to_string(),
                        features: split_features(columns[1]),
                        label,
                    })
                })
                .collect()
        })
        .collect()
}

fn parse_dense(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|v| {
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| format!("bad dense value {v:?}"))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(format!("non-finite dense value {v:?}"))
            }
        })
        .collect()
}

pub fn parse_trees(
    text: &str,
    source: &str,
    last_label: bool,
) -> Result<Vec<Vec<TreeLine>>, CliError> {
    blocks(text)
        .into_iter()
        .map(|block| {
            block
                .into_iter()
                .map(|(line, raw)| {
                    let columns: Vec<&str> = raw.split('\t').collect();
                    if columns.len() < 4 {
                        return Err(CliError::parse(
                            source,
                            line,
                            "expected id<TAB>parent<TAB>relation<TAB>features[<TAB>label]",
                        ));
                    }
                    let id: usize = columns[0]
                        .trim()
                        .parse()
                        .ok()
                        .filter(|&id| id > 0)
                        .ok_or_else(|| {
                            CliError::parse(source, line, "node id must be a positive integer")
                        })?;
                    let parent: usize = columns[1].trim().parse().map_err(|_| {
                        CliError::parse(source, line, "parent must be an integer (0 for the root)")
                    })?;
                    let (dense, features) = match columns[3].strip_prefix("dense:") {
                        Some(rest) => {
                            let (values, feats) = rest.split_once('|').unwrap_or((rest, ""));
                            let dense = parse_dense(values)
                                .map_err(|m| CliError::parse(source, line, m))?;
                            (Some(dense), split_features(feats))
                        }
                        None => (None, split_features(columns[3])),
                    };
                    let label = if columns.len() > 4 {
                        label_column(&columns, 4, last_label)
                    } else {
                        None
                    };
                    Ok(TreeLine {
                        line,
                        raw: raw.to_string(),
                        id,
                        parent: (parent > 0).then_some(parent),
                        relation: columns[2].trim().to_string(),
                        features,
                        dense,
                        label,
                    })
                })
                .collect()
        })
        .collect()
}

/// `(start, end, label)` triples.
pub fn parse_spans(text: &str, source: &str) -> Result<Vec<(usize, usize, String)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let columns: Vec<&str> = line.split('\t').collect();
        let bad = || CliError::parse(source, i + 1, "expected start<TAB>end<TAB>label");
        if columns.len() != 3 {
            return Err(bad());
        }
        let start: usize = columns[0].trim().parse().map_err(|_| bad())?;
        let end: usize = columns[1].trim().parse().map_err(|_| bad())?;
        if start > end {
            return Err(CliError::parse(source, i + 1, "span start exceeds its end"));
        }
        out.push((start, end, columns[2].trim().to_string()));
    }
    Ok(out)
}
