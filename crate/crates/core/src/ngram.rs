//! Reference n-gram language model.
//!
//! Conditional distributions use interpolated add-k smoothing: the order-`n`
//! estimate for history `h` with lower-order estimate `q` is
//!
//! ```text
//! P_n(w | h) = (c(h, w) + k·|V|·q(w)) / (c(h) + k·|V|)
//! ```
//!
//! starting from the uniform distribution. With an unseen history the
//! estimate falls back to the lower order unchanged; at order one it is plain
//! add-k. Every token therefore keeps nonzero probability in every context.
//!
//! Backward models are trained on reversed documents and reverse the history
//! on every query, so callers always work in logical order.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{sequence_logprob, Direction, LanguageModel};
use crate::vocab::{TokenId, TokenSeq, Tokenizer, Vocabulary};

pub const FORMAT_NAME: &str = "refdec-ngram";
pub const FORMAT_VERSION: u64 = 1;
pub const DEFAULT_MAX_ORDER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    /// Pseudo-count per vocabulary entry at every order.
    pub k: f64,
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing { k: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramConfig {
    pub order: usize,
    pub smoothing: Smoothing,
    pub max_order: usize,
}

impl NgramConfig {
    pub fn new(order: usize) -> Self {
        NgramConfig {
            order,
            smoothing: Smoothing::default(),
            max_order: DEFAULT_MAX_ORDER,
        }
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.smoothing.k = k;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    /// Sorted by token id.
    next: Vec<(TokenId, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramLm {
    direction: Direction,
    order: usize,
    smoothing: Smoothing,
    tokenizer: Tokenizer,
    vocab: Vocabulary,
    /// `tables[n]` holds histories of length `n`.
    tables: Vec<HashMap<TokenSeq, ContextCounts>>,
}

/// Trains a reference model on documents given in logical order.
pub fn train_reference_lm(
    corpus: &[TokenSeq],
    vocab: Vocabulary,
    direction: Direction,
    cfg: &NgramConfig,
) -> Result<NgramLm> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.order < 1 || cfg.order > cfg.max_order {
        return Err(Error::OrderOutOfRange {
            order: cfg.order,
            max: cfg.max_order,
        });
    }
    if !(cfg.smoothing.k.is_finite() && cfg.smoothing.k > 0.0) {
        return Err(Error::invalid("k", "smoothing pseudo-count must be positive"));
    }
    let mut raw: Vec<HashMap<TokenSeq, BTreeMap<TokenId, u64>>> = vec![HashMap::new(); cfg.order];
    for doc in corpus {
        vocab.validate(doc)?;
        let mut framed = Vec::with_capacity(doc.len() + 2);
        framed.push(vocab.bos());
        match direction {
            Direction::Forward => framed.extend_from_slice(doc),
            Direction::Backward => framed.extend(doc.iter().rev()),
        }
        framed.push(vocab.eos());
        for i in 1..framed.len() {
            let target = framed[i];
            for ctx_len in 0..cfg.order.min(i + 1) {
                let ctx = framed[i - ctx_len..i].to_vec();
                *raw[ctx_len].entry(ctx).or_default().entry(target).or_insert(0) += 1;
            }
        }
    }
    let tables = raw
        .into_iter()
        .map(|table| {
            table
                .into_iter()
                .map(|(ctx, next)| {
                    let total = next.values().sum();
                    (ctx, ContextCounts { total, next: next.into_iter().collect() })
                })
                .collect()
        })
        .collect();
    Ok(NgramLm {
        direction,
        order: cfg.order,
        smoothing: cfg.smoothing,
        tokenizer: Tokenizer::default(),
        vocab,
        tables,
    })
}

/// Trains forward and backward models over one shared vocabulary built from
/// the corpus.
pub fn train_pair(
    docs: &[Vec<String>],
    tokenizer: Tokenizer,
    cfg: &NgramConfig,
) -> Result<(NgramLm, NgramLm)> {
    let vocab = Vocabulary::new(docs.iter().flatten());
    let corpus: Vec<TokenSeq> = docs.iter().map(|d| vocab.encode(d)).collect();
    let fwd = train_reference_lm(&corpus, vocab.clone(), Direction::Forward, cfg)?
        .with_tokenizer(tokenizer);
    let bwd =
        train_reference_lm(&corpus, vocab, Direction::Backward, cfg)?.with_tokenizer(tokenizer);
    Ok((fwd, bwd))
}

impl NgramLm {
    pub fn with_tokenizer(mut self, tokenizer: Tokenizer) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn tokenizer(&self) -> Tokenizer {
        self.tokenizer
    }

    /// Tokenizes and encodes text with this model's tokenizer and vocabulary.
    pub fn encode_text(&self, text: &str) -> TokenSeq {
        self.vocab.encode(&self.tokenizer.tokenize(text))
    }

    /// History in storage order, framed by begin-of-text and cut to the
    /// longest usable length.
    fn storage_context(&self, history: &[TokenId]) -> Vec<TokenId> {
        let keep = self.order - 1;
        let mut framed = Vec::with_capacity(keep.min(history.len() + 1));
        let take = keep.min(history.len());
        match self.direction {
            Direction::Forward => {
                if take < keep {
                    framed.push(self.vocab.bos());
                }
                framed.extend_from_slice(&history[history.len() - take..]);
            }
            Direction::Backward => {
                if take < keep {
                    framed.push(self.vocab.bos());
                }
                framed.extend(history[..take].iter().rev());
            }
        }
        framed
    }

    /// Counts for each usable history length, shortest first.
    fn matching_nodes<'a>(&'a self, ctx: &'a [TokenId]) -> impl Iterator<Item = &'a ContextCounts> + 'a {
        (0..self.order)
            .take_while(move |&len| len <= ctx.len())
            .map(move |len| self.tables[len].get(&ctx[ctx.len() - len..]))
            .take_while(Option::is_some)
            .flatten()
    }

    pub fn probabilities(&self, history: &[TokenId]) -> Result<Vec<f64>> {
        self.vocab.validate(history)?;
        let v = self.vocab.len();
        let kv = self.smoothing.k * v as f64;
        let mut p = vec![1.0 / v as f64; v];
        let ctx = self.storage_context(history);
        for node in self.matching_nodes(&ctx) {
            let denom = node.total as f64 + kv;
            let keep = kv / denom;
            for x in p.iter_mut() {
                *x *= keep;
            }
            for &(w, c) in &node.next {
                p[w] += c as f64 / denom;
            }
        }
        Ok(p)
    }

    fn serializable(&self) -> ModelFile {
        let mut counts: Vec<CountEntry> = self
            .tables
            .iter()
            .flat_map(|t| {
                t.iter().map(|(ctx, node)| CountEntry {
                    context: ctx.clone(),
                    total: node.total,
                    next: node.next.clone(),
                })
            })
            .collect();
        counts.sort_by(|a, b| {
            a.context
                .len()
                .cmp(&b.context.len())
                .then_with(|| a.context.cmp(&b.context))
        });
        ModelFile {
            format: FORMAT_NAME.to_owned(),
            version: FORMAT_VERSION,
            direction: self.direction,
            order: self.order,
            smoothing: self.smoothing,
            tokenizer: self.tokenizer,
            vocabulary: self.vocab.tokens().to_vec(),
            counts,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.serializable()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text).map_err(parse_error)?;
        if header.format != FORMAT_NAME {
            return Err(Error::InvalidField {
                field: "format".into(),
                message: format!("expected {FORMAT_NAME:?}, found {:?}", header.format),
            });
        }
        if header.version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: header.version,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(text).map_err(parse_error)?;
        file.into_model()
    }
}

impl LanguageModel for NgramLm {
    fn direction(&self) -> Direction {
        self.direction
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token_logprobs(&self, history: &[TokenId]) -> Result<Vec<f64>> {
        Ok(self.probabilities(history)?.into_iter().map(f64::ln).collect())
    }

    fn token_logprob(&self, history: &[TokenId], token: TokenId) -> Result<f64> {
        self.vocab.validate(history)?;
        self.vocab.validate(&[token])?;
        let kv = self.smoothing.k * self.vocab.len() as f64;
        let mut p = 1.0 / self.vocab.len() as f64;
        let ctx = self.storage_context(history);
        for node in self.matching_nodes(&ctx) {
            let c = node
                .next
                .binary_search_by_key(&token, |&(w, _)| w)
                .map_or(0, |i| node.next[i].1);
            p = (c as f64 + kv * p) / (node.total as f64 + kv);
        }
        Ok(p.ln())
    }
}

pub fn save_lm(lm: &NgramLm, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, lm.to_json()).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_lm(path: impl AsRef<Path>) -> Result<NgramLm> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    NgramLm::from_json(&text)
}

/// Log-probability of a whole document, including the end-of-text event.
pub fn document_logprob<L: LanguageModel + ?Sized>(lm: &L, doc: &[TokenId]) -> Result<f64> {
    let eos = lm.vocab().eos();
    let mut seq = Vec::with_capacity(doc.len() + 1);
    match lm.direction() {
        Direction::Forward => {
            seq.extend_from_slice(doc);
            seq.push(eos);
        }
        Direction::Backward => {
            seq.push(eos);
            seq.extend_from_slice(doc);
        }
    }
    sequence_logprob(lm, &seq, &[])
}

/// Per-token perplexity (end-of-text events counted) over `docs`.
pub fn perplexity<L: LanguageModel + ?Sized>(lm: &L, docs: &[TokenSeq]) -> Result<f64> {
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for doc in docs {
        nll -= document_logprob(lm, doc)?;
        tokens += doc.len() + 1;
    }
    if tokens == 0 {
        return Err(Error::EmptyInput("held-out set"));
    }
    Ok((nll / tokens as f64).exp())
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u64,
    direction: Direction,
    order: usize,
    smoothing: Smoothing,
    tokenizer: Tokenizer,
    vocabulary: Vec<String>,
    counts: Vec<CountEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountEntry {
    context: TokenSeq,
    total: u64,
    next: Vec<(TokenId, u64)>,
}

impl ModelFile {
    fn into_model(self) -> Result<NgramLm> {
        let field = |field: String, message: String| Error::InvalidField { field, message };
        if self.order < 1 || self.order > DEFAULT_MAX_ORDER {
            return Err(Error::OrderOutOfRange {
                order: self.order,
                max: DEFAULT_MAX_ORDER,
            });
        }
        if !(self.smoothing.k.is_finite() && self.smoothing.k > 0.0) {
            return Err(field("smoothing.k".into(), "must be positive".into()));
        }
        let vocab = Vocabulary::from_tokens(self.vocabulary)?;
        let mut tables: Vec<HashMap<TokenSeq, ContextCounts>> = vec![HashMap::new(); self.order];
        for (i, entry) in self.counts.into_iter().enumerate() {
            let name = |f: &str| format!("counts[{i}].{f}");
            if entry.context.len() >= self.order {
                return Err(field(name("context"), "longer than order - 1".into()));
            }
            if entry.context.iter().any(|&id| id >= vocab.len()) {
                return Err(field(name("context"), "token id out of range".into()));
            }
            if entry.next.iter().any(|&(id, _)| id >= vocab.len()) {
                return Err(field(name("next"), "token id out of range".into()));
            }
            if entry.next.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(field(name("next"), "ids must be strictly increasing".into()));
            }
            if entry.next.iter().any(|&(_, c)| c == 0) {
                return Err(field(name("next"), "counts must be positive".into()));
            }
            let sum: u64 = entry.next.iter().map(|&(_, c)| c).sum();
            if sum != entry.total {
                return Err(field(
                    name("total"),
                    format!("{} does not match the sum of counts {sum}", entry.total),
                ));
            }
            let len = entry.context.len();
            let node = ContextCounts {
                total: entry.total,
                next: entry.next,
            };
            if tables[len].insert(entry.context, node).is_some() {
                return Err(field(name("context"), "duplicate context".into()));
            }
        }
        if tables[0].is_empty() {
            return Err(field("counts".into(), "missing unigram counts".into()));
        }
        Ok(NgramLm {
            direction: self.direction,
            order: self.order,
            smoothing: self.smoothing,
            tokenizer: self.tokenizer,
            vocab,
            tables,
        })
    }
}
