use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::smiles::tokenize;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
const SPECIALS: [&str; 3] = ["<pad>", "<bos>", "<eos>"];

/// SMILES token vocabulary; specials occupy indices 0–2, corpus tokens follow in sorted order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(corpus_tokens: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = corpus_tokens
            .into_iter()
            .filter(|t| !SPECIALS.contains(&t.as_str()))
            .collect();
        let tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).chain(set).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    /// Vocabulary of every lexeme in `corpus`.
    pub fn from_corpus<S: AsRef<str>>(corpus: &[S]) -> Result<Self> {
        let mut all = Vec::new();
        for s in corpus {
            all.extend(tokenize(s.as_ref())?.into_iter().map(|t| t.lexeme));
        }
        Ok(Self::from_tokens(all))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Corpus tokens only, in index order (what a checkpoint records).
    pub fn corpus_tokens(&self) -> &[String] {
        &self.tokens[SPECIALS.len()..]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, idx: usize) -> Option<&str> {
        self.tokens.get(idx).map(String::as_str)
    }

    /// Token indices of `s` (no specials added).
    pub fn encode(&self, s: &str) -> Result<Vec<usize>> {
        tokenize(s)?
            .into_iter()
            .map(|t| {
                self.index_of(&t.lexeme).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "token {:?} at {} is not in the vocabulary",
                        t.lexeme, t.position
                    ))
                })
            })
            .collect()
    }

    /// Concatenates token lexemes, dropping specials.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i > EOS)
            .filter_map(|&i| self.token(i))
            .collect()
    }
}
