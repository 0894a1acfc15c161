//! Word-level vocabulary shared by the tiny backends.
//!
//! Special tokens are registered as dedicated vocabulary items so they are
//! never split across generated tokens.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::seqformat::{self, STRUCTURAL_TOKENS};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from training texts. Word tokens are sorted so
    /// the id assignment is independent of input order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, n_speaker_tags: usize) -> Self {
        let mut words: BTreeSet<String> = BTreeSet::new();
        for text in texts {
            for tok in seqformat::tokenize(text) {
                if !seqformat::is_special_token(&tok) {
                    words.insert(tok);
                }
            }
        }
        let mut tokens: Vec<String> = vec![PAD.to_string(), UNK.to_string()];
        tokens.extend(STRUCTURAL_TOKENS.iter().map(|s| s.to_string()));
        for k in 0..n_speaker_tags.max(2) {
            tokens.push(format!("<person_{k}>"));
        }
        tokens.extend(words);
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, tok: &str) -> usize {
        self.index.get(tok).copied().unwrap_or(1) // <unk>
    }

    pub fn contains(&self, tok: &str) -> bool {
        self.index.contains_key(tok)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        seqformat::tokenize(text)
            .iter()
            .map(|t| self.id(t))
            .collect()
    }

    /// Joins token surfaces with single spaces.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn special_ids(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                seqformat::is_special_token(t) || t.as_str() == PAD || t.as_str() == UNK
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}
