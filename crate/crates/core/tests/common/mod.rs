#![allow(dead_code)]

use refdec::lm::{DelegateLm, Direction};
use refdec::logspace::log_sum_exp;
use refdec::vocab::{TokenId, TokenSeq, Vocabulary};

/// Vocabulary with `words` ordinary words after the three specials.
pub fn vocab(words: usize) -> Vocabulary {
    Vocabulary::new((0..words).map(|i| format!("w{i}")))
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Pseudo-random log-probabilities keyed on the whole history.
pub fn hashed_logprobs(seed: u64, history: &[TokenId], n: usize, sharpness: f64) -> Vec<f64> {
    let mut h = mix(seed);
    for &t in history {
        h = mix(h ^ (t as u64 + 1));
    }
    let logits: Vec<f64> = (0..n)
        .map(|t| {
            let u = mix(h ^ ((t as u64 + 1) << 32)) as f64 / u64::MAX as f64;
            sharpness * (2.0 * u - 1.0)
        })
        .collect();
    let z = log_sum_exp(&logits);
    logits.iter().map(|l| l - z).collect()
}

pub fn hashed_lm(direction: Direction, vocab: Vocabulary, seed: u64, sharpness: f64) -> DelegateLm {
    let n = vocab.len();
    DelegateLm::new(direction, vocab, move |h| hashed_logprobs(seed, h, n, sharpness))
}

/// The model that sees every history reversed: the mirror image of
/// `hashed_lm(direction, ..)` with the opposite direction.
pub fn mirrored_hashed_lm(direction: Direction, vocab: Vocabulary, seed: u64, sharpness: f64) -> DelegateLm {
    let n = vocab.len();
    DelegateLm::new(direction.reversed(), vocab, move |h| {
        let r: Vec<TokenId> = h.iter().rev().copied().collect();
        hashed_logprobs(seed, &r, n, sharpness)
    })
}

pub fn reversed(s: &[TokenId]) -> TokenSeq {
    s.iter().rev().copied().collect()
}

/// Ordinary word ids of a vocabulary built by [`vocab`].
pub fn word_ids(v: &Vocabulary) -> Vec<TokenId> {
    (3..v.len()).collect()
}

/// Independent product-of-experts next-token distribution. `history` is the
/// logical-order text between the contexts and the predicted position
/// (already containing the inner context).
pub fn poe_oracle(
    lm: &DelegateLm,
    direction: Direction,
    contexts: &[TokenSeq],
    weights: &[f64],
    history: &[TokenId],
) -> Vec<f64> {
    use refdec::lm::LanguageModel;
    let n = lm.vocab().len();
    let mut acc = vec![0.0; n];
    for (c, &w) in contexts.iter().zip(weights) {
        let full: Vec<TokenId> = match direction {
            Direction::Backward => history.iter().chain(c).copied().collect(),
            Direction::Forward => c.iter().chain(history).copied().collect(),
        };
        let lp = lm.next_token_logprobs(&full).unwrap();
        for (a, l) in acc.iter_mut().zip(lp) {
            *a += w * l.max(-60.0);
        }
    }
    let z = log_sum_exp(&acc);
    acc.iter().map(|a| a - z).collect()
}

/// Tiny corpus used by pipeline tests: templated sentences.
pub fn templated_corpus() -> Vec<String> {
    let subjects = ["the cat", "the dog", "a bird", "my friend", "the teacher", "our neighbor"];
    let verbs = ["sees", "likes", "finds", "watches", "greets"];
    let objects = ["the ball", "a tree", "the house", "the river", "a car"];
    let mut docs = Vec::new();
    for (i, s) in subjects.iter().enumerate() {
        for (j, v) in verbs.iter().enumerate() {
            let o = objects[(i + j) % objects.len()];
            let o2 = objects[(i + 2 * j + 1) % objects.len()];
            docs.push(format!("{s} {v} {o} . then {s} {v} {o2} . it was nice ."));
            docs.push(format!("yesterday {s} {v} {o2} . {s} was happy ."));
        }
    }
    docs
}
