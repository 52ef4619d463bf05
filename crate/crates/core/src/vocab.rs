//! Token vocabulary. On disk: one token per line, line number = id.
//! Id 0 is the unknown token and id 1 is padding.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::corpus::Dataset;
use crate::error::{CsrlError, Result};

pub const UNK: usize = 0;
pub const PAD: usize = 1;
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_TOKEN: &str = "<pad>";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN)
            || tokens.get(1).map(String::as_str) != Some(PAD_TOKEN)
        {
            return Err(CsrlError::Config(format!(
                "vocabulary must start with {UNK_TOKEN} and {PAD_TOKEN}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(CsrlError::Config(format!(
                    "duplicate vocabulary entry {t:?}"
                )));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Every distinct token of `dataset`, sorted, after the two reserved ids.
    pub fn build(dataset: &Dataset) -> Self {
        let distinct: BTreeSet<&str> = dataset
            .instances
            .iter()
            .flat_map(|i| i.conversation.utterances.iter())
            .flat_map(|u| u.tokens.iter().map(String::as_str))
            .filter(|t| *t != UNK_TOKEN && *t != PAD_TOKEN)
            .collect();
        let mut tokens = vec![UNK_TOKEN.to_string(), PAD_TOKEN.to_string()];
        tokens.extend(distinct.into_iter().map(str::to_string));
        Vocab::from_tokens(tokens).expect("distinct tokens")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Vocab::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}
