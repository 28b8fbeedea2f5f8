use std::collections::HashMap;

use crate::error::{CrfError, Result};

/// Printed name of the boundary context that precedes position 0.
pub const BOS: &str = "<s>";

/// The tagset with stable integer indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAlphabet {
    labels: Vec<String>,
    lookup: HashMap<String, usize>,
    background: Option<usize>,
}

impl LabelAlphabet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(CrfError::EmptyAlphabet);
        }
        let mut lookup = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if !valid_label_name(label) {
                return Err(CrfError::InvalidLabelName(label.clone()));
            }
            if lookup.insert(label.clone(), i).is_some() {
                return Err(CrfError::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self {
            labels,
            lookup,
            background: None,
        })
    }

    /// Marks `label` as the "no annotation" label used when converting tags to spans.
    pub fn with_background(mut self, label: &str) -> Result<Self> {
        let idx = self.index(label)?;
        self.background = Some(idx);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn background(&self) -> Option<usize> {
        self.background
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.lookup
            .get(label)
            .copied()
            .ok_or_else(|| CrfError::UnknownLabel(label.to_string()))
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.lookup.get(label).copied()
    }

    pub fn label(&self, index: usize) -> Result<&str> {
        self.labels
            .get(index)
            .map(String::as_str)
            .ok_or(CrfError::LabelOutOfRange {
                index,
                size: self.labels.len(),
            })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn check(&self, index: usize) -> Result<()> {
        if index < self.labels.len() {
            Ok(())
        } else {
            Err(CrfError::LabelOutOfRange {
                index,
                size: self.labels.len(),
            })
        }
    }

    /// Label name for a context slot, `None` being the boundary context.
    pub fn context_name(&self, slot: Option<usize>) -> Result<&str> {
        match slot {
            None => Ok(BOS),
            Some(i) => self.label(i),
        }
    }
}

/// Label names end up in tab-separated files and `|`-joined contexts.
fn valid_label_name(label: &str) -> bool {
    !label.is_empty()
        && label != BOS
        && label != "_"
        && !label.contains('|')
        && !label.chars().any(char::is_whitespace)
}
