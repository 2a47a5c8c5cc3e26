//! Token vocabulary and the whitespace tokenizer used by the reference model.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = usize;

/// Token ids in logical left-to-right order.
pub type TokenSeq = Vec<TokenId>;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Tokens that close a sentence for post-processing.
pub const SENTENCE_TERMINALS: [&str; 3] = [".", "?", "!"];

/// Dense bijection between token strings and ids `0..len`.
///
/// Ids 0, 1 and 2 are always begin-of-text, end-of-text and unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub const BOS_ID: TokenId = 0;
    pub const EOS_ID: TokenId = 1;
    pub const UNK_ID: TokenId = 2;

    /// Builds a vocabulary from words in first-seen order. Duplicates and
    /// the special markers are skipped.
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for special in [BOS, EOS, UNK] {
            vocab.push(special);
        }
        for word in words {
            vocab.push(word.as_ref());
        }
        vocab
    }

    /// Rebuilds a vocabulary from its full token list, specials included.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let field_err = |message: String| Error::InvalidField {
            field: "vocabulary".into(),
            message,
        };
        if tokens.len() < 3 || tokens[0] != BOS || tokens[1] != EOS || tokens[2] != UNK {
            return Err(field_err(format!(
                "must start with {BOS}, {EOS}, {UNK}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id).is_some() {
                return Err(field_err(format!("duplicate token {tok:?} at index {id}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    fn push(&mut self, word: &str) {
        if !self.index.contains_key(word) {
            self.index.insert(word.to_owned(), self.tokens.len());
            self.tokens.push(word.to_owned());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Maps unknown strings to the unknown marker.
    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn bos(&self) -> TokenId {
        Self::BOS_ID
    }

    pub fn eos(&self) -> TokenId {
        Self::EOS_ID
    }

    pub fn unk(&self) -> TokenId {
        Self::UNK_ID
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id <= Self::UNK_ID
    }

    pub fn is_sentence_terminal(&self, id: TokenId) -> bool {
        self.token(id)
            .is_some_and(|t| SENTENCE_TERMINALS.contains(&t))
    }

    pub fn validate(&self, seq: &[TokenId]) -> Result<()> {
        match seq.iter().find(|&&id| id >= self.len()) {
            Some(&id) => Err(Error::InvalidToken {
                id,
                vocab_size: self.len(),
            }),
            None => Ok(()),
        }
    }

    pub fn encode(&self, words: &[String]) -> TokenSeq {
        words.iter().map(|w| self.id_or_unk(w)).collect()
    }

    /// Space-joined surface form; out-of-range ids render as the unknown marker.
    pub fn decode(&self, seq: &[TokenId]) -> String {
        seq.iter()
            .map(|&id| self.token(id).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Whitespace tokenizer with optional lowercasing and punctuation splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub lowercase: bool,
    pub split_punctuation: bool,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer {
            lowercase: true,
            split_punctuation: true,
        }
    }
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            let word = if self.lowercase {
                word.to_lowercase()
            } else {
                word.to_owned()
            };
            if !self.split_punctuation {
                out.push(word);
                continue;
            }
            let mut current = String::new();
            for ch in word.chars() {
                if ch.is_ascii_punctuation() && ch != '\'' && ch != '-' {
                    if !current.is_empty() {
                        out.push(std::mem::take(&mut current));
                    }
                    out.push(ch.to_string());
                } else {
                    current.push(ch);
                }
            }
            if !current.is_empty() {
                out.push(current);
            }
        }
        out
    }

    /// Reads a corpus: one document per line, blank lines ignored.
    pub fn tokenize_corpus(&self, text: &str) -> Vec<Vec<String>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| self.tokenize(l))
            .collect()
    }
}
