//! Synthetic token corpus for pretraining the toy encoder.
//!
//! Sequences come from a seeded first-order Markov chain over the content
//! vocabulary: each token has a few preferred successors that absorb most of
//! the transition mass, so the corpus has learnable bigram structure and the
//! embedding table acquires non-degenerate token geometry during MLM
//! pretraining. Token ids 0 and 1 are reserved (padding and mask) and never
//! appear as content.

use crate::error::{EptError, Result};
use crate::rng::{rng_from_seed, sample_without_replacement};
use rand::Rng;

/// Reserved padding token; sequences shorter than the maximum length are
/// extended with it.
pub const PAD_TOKEN: usize = 0;
/// Reserved mask token used by the MLM objective.
pub const MASK_TOKEN: usize = 1;
/// First usable content token id.
pub const FIRST_CONTENT_TOKEN: usize = 2;

/// Probability that a transition follows one of the preferred successors.
const PREFERRED_MASS: f64 = 0.75;
/// Preferred successors per token.
const N_PREFERRED: usize = 3;

/// Seeded bigram structure over the content tokens.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    vocab_size: usize,
    /// `preferred[v]` lists the favored successors of content token `v`.
    preferred: Vec<[usize; N_PREFERRED]>,
}

impl MarkovChain {
    pub fn new(vocab_size: usize, seed: u64) -> Result<Self> {
        let content = vocab_size.saturating_sub(FIRST_CONTENT_TOKEN);
        if content < N_PREFERRED + 1 {
            return Err(EptError::Data(format!(
                "vocabulary of {vocab_size} leaves too few content tokens"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let preferred = (0..content)
            .map(|_| {
                let picks = sample_without_replacement(content, N_PREFERRED, &mut rng);
                let mut arr = [0usize; N_PREFERRED];
                for (slot, &p) in arr.iter_mut().zip(&picks) {
                    *slot = p + FIRST_CONTENT_TOKEN;
                }
                arr
            })
            .collect();
        Ok(MarkovChain {
            vocab_size,
            preferred,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn content_count(&self) -> usize {
        self.vocab_size - FIRST_CONTENT_TOKEN
    }

    fn step<R: Rng>(&self, current: usize, rng: &mut R) -> usize {
        if rng.gen::<f64>() < PREFERRED_MASS {
            let slot = rng.gen_range(0..N_PREFERRED);
            self.preferred[current - FIRST_CONTENT_TOKEN][slot]
        } else {
            FIRST_CONTENT_TOKEN + rng.gen_range(0..self.content_count())
        }
    }

    /// One sequence of exactly `len` content tokens.
    pub fn sample_sequence<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        let mut cur = FIRST_CONTENT_TOKEN + rng.gen_range(0..self.content_count());
        for _ in 0..len {
            out.push(cur);
            cur = self.step(cur, rng);
        }
        out
    }
}

/// Generate `n` sequences with lengths uniform in `[min_len, max_len]`.
///
/// `chain_seed` fixes the transition structure and `sample_seed` the draws,
/// so train and held-out splits can share one chain while staying disjoint
/// streams.
pub fn markov_corpus(
    vocab_size: usize,
    n: usize,
    min_len: usize,
    max_len: usize,
    chain_seed: u64,
    sample_seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if min_len == 0 || min_len > max_len {
        return Err(EptError::Data(format!(
            "bad length range [{min_len}, {max_len}]"
        )));
    }
    let chain = MarkovChain::new(vocab_size, chain_seed)?;
    let mut rng = rng_from_seed(sample_seed);
    Ok((0..n)
        .map(|_| {
            let len = rng.gen_range(min_len..=max_len);
            chain.sample_sequence(len, &mut rng)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic_per_seed() {
        let a = markov_corpus(64, 20, 4, 16, 5, 50).unwrap();
        let b = markov_corpus(64, 20, 4, 16, 5, 50).unwrap();
        let c = markov_corpus(64, 20, 4, 16, 5, 51).unwrap();
        let d = markov_corpus(64, 20, 4, 16, 6, 50).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn sequences_respect_length_and_vocabulary() {
        let corpus = markov_corpus(64, 50, 4, 16, 9, 90).unwrap();
        assert_eq!(corpus.len(), 50);
        for seq in &corpus {
            assert!((4..=16).contains(&seq.len()));
            for &t in seq {
                assert!(
                    (FIRST_CONTENT_TOKEN..64).contains(&t),
                    "token {t} outside content range"
                );
            }
        }
    }

    #[test]
    fn reserved_tokens_never_appear() {
        let corpus = markov_corpus(64, 100, 8, 16, 11, 110).unwrap();
        for seq in &corpus {
            assert!(!seq.contains(&PAD_TOKEN));
            assert!(!seq.contains(&MASK_TOKEN));
        }
    }

    #[test]
    fn preferred_successors_dominate_transitions() {
        let chain = MarkovChain::new(64, 3).unwrap();
        let mut rng = rng_from_seed(4);
        let mut preferred_hits = 0usize;
        let mut total = 0usize;
        for _ in 0..200 {
            let seq = chain.sample_sequence(20, &mut rng);
            for w in seq.windows(2) {
                total += 1;
                if chain.preferred[w[0] - FIRST_CONTENT_TOKEN].contains(&w[1]) {
                    preferred_hits += 1;
                }
            }
        }
        let frac = preferred_hits as f64 / total as f64;
        assert!(frac > 0.6, "preferred fraction only {frac}");
    }

    #[test]
    fn tiny_vocab_is_rejected() {
        assert!(MarkovChain::new(4, 0).is_err());
        assert!(markov_corpus(64, 5, 0, 4, 0, 1).is_err());
    }
}
