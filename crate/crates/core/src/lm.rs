//! The unidirectional language-model contract.
//!
//! Every model predicts one token at a time given a *history* passed in
//! logical (left-to-right) order. For a forward model the history is the text
//! to the left of the predicted position; for a backward model it is the text
//! to the right. Backward implementations handle any reversal internally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn reversed(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    /// Logical-order history for predicting next to `generated` given the
    /// fixed `conditioning` text on the far side.
    pub fn history(self, conditioning: &[TokenId], generated: &[TokenId]) -> Vec<TokenId> {
        let mut h = Vec::with_capacity(conditioning.len() + generated.len());
        match self {
            Direction::Forward => {
                h.extend_from_slice(conditioning);
                h.extend_from_slice(generated);
            }
            Direction::Backward => {
                h.extend_from_slice(generated);
                h.extend_from_slice(conditioning);
            }
        }
        h
    }
}

/// A next-token distribution provider with a reading direction.
///
/// Implementations must be immutable after construction; they are shared
/// across threads.
pub trait LanguageModel: Send + Sync {
    fn direction(&self) -> Direction;

    fn vocab(&self) -> &Vocabulary;

    /// Log-probabilities over the whole vocabulary. The result is normalized
    /// in probability space; entries may be `-inf`.
    fn next_token_logprobs(&self, history: &[TokenId]) -> Result<Vec<f64>>;

    fn token_logprob(&self, history: &[TokenId], token: TokenId) -> Result<f64> {
        let logp = self.next_token_logprobs(history)?;
        logp.get(token).copied().ok_or(Error::InvalidToken {
            id: token,
            vocab_size: logp.len(),
        })
    }
}

impl<L: LanguageModel + ?Sized> LanguageModel for &L {
    fn direction(&self) -> Direction {
        (**self).direction()
    }
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }
    fn next_token_logprobs(&self, history: &[TokenId]) -> Result<Vec<f64>> {
        (**self).next_token_logprobs(history)
    }
    fn token_logprob(&self, history: &[TokenId], token: TokenId) -> Result<f64> {
        (**self).token_logprob(history, token)
    }
}

impl<L: LanguageModel + ?Sized> LanguageModel for std::sync::Arc<L> {
    fn direction(&self) -> Direction {
        (**self).direction()
    }
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }
    fn next_token_logprobs(&self, history: &[TokenId]) -> Result<Vec<f64>> {
        (**self).next_token_logprobs(history)
    }
    fn token_logprob(&self, history: &[TokenId], token: TokenId) -> Result<f64> {
        (**self).token_logprob(history, token)
    }
}

/// Log-probability of `seq` next to `conditioning`, summed in the model's
/// factorization order. For a forward model `conditioning` precedes `seq`;
/// for a backward model it follows it.
pub fn sequence_logprob<L: LanguageModel + ?Sized>(
    lm: &L,
    seq: &[TokenId],
    conditioning: &[TokenId],
) -> Result<f64> {
    let vocab = lm.vocab();
    vocab.validate(seq)?;
    vocab.validate(conditioning)?;
    let mut total = 0.0;
    match lm.direction() {
        Direction::Forward => {
            let mut history = conditioning.to_vec();
            for &tok in seq {
                total += lm.token_logprob(&history, tok)?;
                history.push(tok);
            }
        }
        Direction::Backward => {
            for j in (0..seq.len()).rev() {
                let history = Direction::Backward.history(conditioning, &seq[j + 1..]);
                total += lm.token_logprob(&history, seq[j])?;
            }
        }
    }
    Ok(total)
}

type DistFn = dyn Fn(&[TokenId]) -> Vec<f64> + Send + Sync;

/// Adapter turning a closure into a [`LanguageModel`].
///
/// The closure receives the history exactly as passed by the caller and must
/// return a normalized log-probability vector of vocabulary length. This is
/// the hook for plugging in externally trained models.
pub struct DelegateLm {
    direction: Direction,
    vocab: Vocabulary,
    dist: Box<DistFn>,
}

impl DelegateLm {
    pub fn new<F>(direction: Direction, vocab: Vocabulary, dist: F) -> Self
    where
        F: Fn(&[TokenId]) -> Vec<f64> + Send + Sync + 'static,
    {
        DelegateLm {
            direction,
            vocab,
            dist: Box::new(dist),
        }
    }

    pub fn uniform(direction: Direction, vocab: Vocabulary) -> Self {
        let n = vocab.len();
        Self::new(direction, vocab, move |_| vec![-(n as f64).ln(); n])
    }

    /// Always predicts `token` with probability one.
    pub fn deterministic(direction: Direction, vocab: Vocabulary, token: TokenId) -> Self {
        let n = vocab.len();
        Self::new(direction, vocab, move |_| {
            let mut v = vec![f64::NEG_INFINITY; n];
            v[token] = 0.0;
            v
        })
    }
}

impl std::fmt::Debug for DelegateLm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DelegateLm")
            .field("direction", &self.direction)
            .field("vocab_size", &self.vocab.len())
            .finish_non_exhaustive()
    }
}

impl LanguageModel for DelegateLm {
    fn direction(&self) -> Direction {
        self.direction
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token_logprobs(&self, history: &[TokenId]) -> Result<Vec<f64>> {
        self.vocab.validate(history)?;
        let v = (self.dist)(history);
        if v.len() != self.vocab.len() {
            return Err(Error::invalid(
                "delegate output",
                format!("length {} != vocabulary size {}", v.len(), self.vocab.len()),
            ));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logspace::log_sum_exp;

    fn vocab4() -> Vocabulary {
        Vocabulary::new(["x"])
    }

    #[test]
    fn deterministic_delegate_has_single_zero() {
        let lm = DelegateLm::deterministic(Direction::Forward, vocab4(), 3);
        let v = lm.next_token_logprobs(&[]).unwrap();
        assert_eq!(v.iter().filter(|&&x| x == 0.0).count(), 1);
        assert_eq!(v[3], 0.0);
        assert!(v.iter().enumerate().all(|(i, &x)| i == 3 || x == f64::NEG_INFINITY));
    }

    #[test]
    fn uniform_delegate() {
        let lm = DelegateLm::uniform(Direction::Forward, vocab4());
        let v = lm.next_token_logprobs(&[3, 3]).unwrap();
        assert!(v.iter().all(|&x| x == 0.25f64.ln()));
        assert!(log_sum_exp(&v).abs() < 1e-12);
    }

    #[test]
    fn sequence_logprob_of_uniform_and_empty() {
        let lm = DelegateLm::uniform(Direction::Backward, vocab4());
        assert_eq!(sequence_logprob(&lm, &[], &[3]).unwrap(), 0.0);
        let lp = sequence_logprob(&lm, &[3, 3, 0], &[]).unwrap();
        assert!((lp - 3.0 * 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_token_is_rejected() {
        let lm = DelegateLm::uniform(Direction::Forward, vocab4());
        assert!(matches!(
            lm.next_token_logprobs(&[9]),
            Err(Error::InvalidToken { id: 9, .. })
        ));
        assert!(sequence_logprob(&lm, &[7], &[]).is_err());
    }

    #[test]
    fn backward_history_is_text_to_the_right() {
        // Records which history each position sees.
        let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let log = seen.clone();
        let lm = DelegateLm::new(Direction::Backward, Vocabulary::new(["a", "b", "c"]), move |h| {
            log.lock().unwrap().push(h.to_vec());
            vec![-(6f64).ln(); 6]
        });
        sequence_logprob(&lm, &[3, 4], &[5]).unwrap();
        assert_eq!(*seen.lock().unwrap(), vec![vec![5], vec![4, 5]]);
    }
}
