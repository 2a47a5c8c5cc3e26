//! Trimming fixed-length generations to sentence boundaries.

use serde::{Deserialize, Serialize};

use crate::lm::Direction;
use crate::vocab::{TokenId, TokenSeq, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostprocessMode {
    /// Keep the single complete sentence next to the conditioning side.
    Paraphrase,
    /// Keep every complete sentence, dropping the cut-off one at the far end.
    Infill,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trimmed {
    pub tokens: TokenSeq,
    /// Set when no sentence terminal was found and the input was kept as is.
    pub untrimmed: bool,
}

/// Trims `raw`, produced by a sampler decoding in `generation` direction.
///
/// Left-to-right output is anchored at its left edge, right-to-left output at
/// its right edge. Special markers at either edge are removed first.
pub fn postprocess(
    raw: &[TokenId],
    mode: PostprocessMode,
    generation: Direction,
    vocab: &Vocabulary,
) -> Trimmed {
    let is_special = |t: &TokenId| vocab.is_special(*t) && *t != vocab.unk();
    let start = raw.iter().position(|t| !is_special(t)).unwrap_or(raw.len());
    let end = raw.iter().rposition(|t| !is_special(t)).map_or(start, |e| e + 1);
    let mut seq = &raw[start..end.max(start)];

    if generation == Direction::Forward {
        // Terminals at the anchored edge close the preceding context.
        while seq.first().is_some_and(|&t| vocab.is_sentence_terminal(t)) {
            seq = &seq[1..];
        }
    }

    let terminals: Vec<usize> = seq
        .iter()
        .enumerate()
        .filter(|(_, &t)| vocab.is_sentence_terminal(t))
        .map(|(i, _)| i)
        .collect();
    if terminals.is_empty() {
        return Trimmed { tokens: seq.to_vec(), untrimmed: true };
    }

    let last = seq.len() - 1;
    let kept = match (generation, mode) {
        (Direction::Forward, PostprocessMode::Paraphrase) => &seq[..=terminals[0]],
        (Direction::Forward, PostprocessMode::Infill) => &seq[..=*terminals.last().unwrap()],
        (Direction::Backward, PostprocessMode::Paraphrase) => {
            match terminals.iter().rev().find(|&&i| i < last) {
                Some(&i) => &seq[i + 1..],
                None => seq,
            }
        }
        (Direction::Backward, PostprocessMode::Infill) => {
            match terminals.iter().find(|&&i| i < last) {
                Some(&i) => &seq[i + 1..],
                None => seq,
            }
        }
    };
    let tokens = if kept.iter().all(|&t| vocab.is_sentence_terminal(t)) {
        Vec::new()
    } else {
        kept.to_vec()
    };
    Trimmed { tokens, untrimmed: false }
}
