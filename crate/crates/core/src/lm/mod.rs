//! Language-model priors over word strings.
//!
//! A model assigns every prefix a [`NextTokenDistribution`] over its
//! vocabulary plus the end-of-string marker; the probability of a string is
//! the product of its per-word conditionals and the final EOS conditional.

mod ngram;
pub mod remote;
mod tabular;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logspace::{ln, log_sum_exp, NEG_INF};

pub use ngram::{read_corpus, train_ngram, NgramConfig, NgramLm};
pub use tabular::TabularLm;

/// Reserved end-of-string marker; never part of a [`Vocabulary`].
pub const EOS: &str = "<eos>";
/// Sentence-start padding used by n-gram histories.
pub const BOS: &str = "<s>";

const FORMAT: &str = "syntax-smc/lm";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("unknown token {token:?} at position {position}")]
    UnknownToken { token: String, position: usize },
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("duplicate token {0:?} in vocabulary")]
    DuplicateToken(String),
    #[error("token {0:?} is reserved")]
    ReservedToken(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid model file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Remote(#[from] remote::BridgeError),
}

/// Ordered set of tokens, indexed from 0; index `len()` stands for EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new<I, S>(items: I) -> Result<Self, LmError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let items: Vec<String> = items.into_iter().map(Into::into).collect();
        if items.is_empty() {
            return Err(LmError::EmptyVocabulary);
        }
        let mut index = HashMap::with_capacity(items.len());
        for (i, w) in items.iter().enumerate() {
            if w == EOS {
                return Err(LmError::ReservedToken(w.clone()));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(LmError::DuplicateToken(w.clone()));
            }
        }
        Ok(Vocabulary { items, index })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.items[id]
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// Looks up every word of `prefix`, reporting the first unknown one.
    pub fn ids(&self, prefix: &[String]) -> Result<Vec<usize>, LmError> {
        prefix
            .iter()
            .enumerate()
            .map(|(position, w)| {
                self.id(w).ok_or_else(|| LmError::UnknownToken {
                    token: w.clone(),
                    position,
                })
            })
            .collect()
    }
}

/// The outcome of one generation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Word(usize),
    Eos,
}

/// Distribution over a vocabulary plus EOS, stored as log-probabilities.
#[derive(Debug, Clone)]
pub struct NextTokenDistribution {
    vocab: Arc<Vocabulary>,
    logprobs: Vec<f64>,
}

impl NextTokenDistribution {
    /// `logprobs` holds one entry per word followed by the EOS entry and
    /// must normalize to 1 within 1e-9.
    pub fn from_logprobs(vocab: Arc<Vocabulary>, logprobs: Vec<f64>) -> Result<Self, LmError> {
        if logprobs.len() != vocab.len() + 1 {
            return Err(LmError::InvalidDistribution(format!(
                "expected {} entries, got {}",
                vocab.len() + 1,
                logprobs.len()
            )));
        }
        if logprobs.iter().any(|p| p.is_nan() || *p > 1e-12) {
            return Err(LmError::InvalidDistribution("probability outside [0, 1]".into()));
        }
        let total = log_sum_exp(&logprobs).exp();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LmError::InvalidDistribution(format!("sums to {total}")));
        }
        Ok(NextTokenDistribution { vocab, logprobs })
    }

    pub fn from_probs(vocab: Arc<Vocabulary>, probs: &[f64]) -> Result<Self, LmError> {
        if probs.iter().any(|&p| p < 0.0) {
            return Err(LmError::InvalidDistribution("negative probability".into()));
        }
        Self::from_logprobs(vocab, probs.iter().map(|&p| ln(p)).collect())
    }

    /// Normalizes arbitrary nonnegative log-weights.
    pub fn normalized(vocab: Arc<Vocabulary>, mut logweights: Vec<f64>) -> Result<Self, LmError> {
        let z = log_sum_exp(&logweights);
        if z == NEG_INF || !z.is_finite() {
            return Err(LmError::InvalidDistribution("no mass to normalize".into()));
        }
        for w in &mut logweights {
            *w -= z;
        }
        Self::from_logprobs(vocab, logweights)
    }

    /// Point mass on EOS.
    pub fn eos_only(vocab: Arc<Vocabulary>) -> Self {
        let mut logprobs = vec![NEG_INF; vocab.len() + 1];
        logprobs[vocab.len()] = 0.0;
        NextTokenDistribution { vocab, logprobs }
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn logprob(&self, s: Symbol) -> f64 {
        match s {
            Symbol::Word(i) => self.logprobs[i],
            Symbol::Eos => self.logprobs[self.vocab.len()],
        }
    }

    pub fn prob(&self, s: Symbol) -> f64 {
        self.logprob(s).exp()
    }

    pub fn eos_logprob(&self) -> f64 {
        self.logprobs[self.vocab.len()]
    }

    /// Log-probability of a word by string; `-inf` for unknown words.
    pub fn word_logprob(&self, word: &str) -> f64 {
        self.vocab.id(word).map_or(NEG_INF, |i| self.logprobs[i])
    }

    pub fn symbol(&self, i: usize) -> Symbol {
        if i == self.vocab.len() {
            Symbol::Eos
        } else {
            Symbol::Word(i)
        }
    }

    /// Iterates `(symbol, logprob)` over words then EOS.
    pub fn iter(&self) -> impl Iterator<Item = (Symbol, f64)> + '_ {
        self.logprobs
            .iter()
            .enumerate()
            .map(|(i, &lp)| (self.symbol(i), lp))
    }

    pub fn total_prob(&self) -> f64 {
        log_sum_exp(&self.logprobs).exp()
    }

    /// Ids of the `k` most probable words (EOS excluded), ties by id.
    pub fn top_words(&self, k: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.vocab.len())
            .filter(|&i| self.logprobs[i] > NEG_INF)
            .collect();
        ids.sort_by(|&a, &b| {
            self.logprobs[b]
                .partial_cmp(&self.logprobs[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        ids.truncate(k);
        ids
    }

    /// Inverse-CDF draw; one uniform per call.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Symbol {
        self.symbol(sample_index(&self.logprobs, rng))
    }

    pub fn word_string(&self, s: Symbol) -> Option<&str> {
        match s {
            Symbol::Word(i) => Some(self.vocab.word(i)),
            Symbol::Eos => None,
        }
    }
}

/// Draws an index proportionally to `exp(logweights)`.
pub(crate) fn sample_index<R: Rng + ?Sized>(logweights: &[f64], rng: &mut R) -> usize {
    let max = logweights.iter().copied().fold(NEG_INF, f64::max);
    let weights: Vec<f64> = logweights.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// A prior over strings of words.
pub trait LanguageModel: Send + Sync {
    fn vocabulary(&self) -> &Arc<Vocabulary>;

    /// `p(· | prefix)` over the vocabulary and EOS.
    fn conditional(&self, prefix: &[String]) -> Result<NextTokenDistribution, LmError>;

    /// `log p(words)`, including the final EOS.
    fn string_logprob(&self, words: &[String]) -> Result<f64, LmError> {
        let vocab = self.vocabulary();
        let mut total = 0.0;
        for n in 0..=words.len() {
            let dist = self.conditional(&words[..n])?;
            let lp = match words.get(n) {
                Some(w) => {
                    let id = vocab.id(w).ok_or_else(|| LmError::UnknownToken {
                        token: w.clone(),
                        position: n,
                    })?;
                    dist.logprob(Symbol::Word(id))
                }
                None => dist.eos_logprob(),
            };
            total += lp;
            if total == NEG_INF {
                return Ok(NEG_INF);
            }
        }
        Ok(total)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for Arc<T> {
    fn vocabulary(&self) -> &Arc<Vocabulary> {
        (**self).vocabulary()
    }

    fn conditional(&self, prefix: &[String]) -> Result<NextTokenDistribution, LmError> {
        (**self).conditional(prefix)
    }

    fn string_logprob(&self, words: &[String]) -> Result<f64, LmError> {
        (**self).string_logprob(words)
    }
}

/// Any built-in model as stored on disk.
#[derive(Debug, Clone)]
pub enum StoredLm {
    Ngram(NgramLm),
    Tabular(TabularLm),
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
}

impl StoredLm {
    pub fn from_json(text: &str) -> Result<Self, LmError> {
        let header: Header =
            serde_json::from_str(text).map_err(|e| LmError::Format(e.to_string()))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(LmError::Format(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        match header.kind.as_str() {
            "ngram" => Ok(StoredLm::Ngram(NgramLm::from_json(text)?)),
            "tabular" => Ok(StoredLm::Tabular(TabularLm::from_json(text)?)),
            other => Err(LmError::Format(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LmError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        match self {
            StoredLm::Ngram(m) => m.to_json(),
            StoredLm::Tabular(m) => m.to_json(),
        }
    }
}

impl LanguageModel for StoredLm {
    fn vocabulary(&self) -> &Arc<Vocabulary> {
        match self {
            StoredLm::Ngram(m) => m.vocabulary(),
            StoredLm::Tabular(m) => m.vocabulary(),
        }
    }

    fn conditional(&self, prefix: &[String]) -> Result<NextTokenDistribution, LmError> {
        match self {
            StoredLm::Ngram(m) => m.conditional(prefix),
            StoredLm::Tabular(m) => m.conditional(prefix),
        }
    }
}

#[cfg(test)]
pub(crate) fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> Arc<Vocabulary> {
        Arc::new(Vocabulary::new(["a", "b"]).unwrap())
    }

    #[test]
    fn vocabulary_rules() {
        assert!(matches!(
            Vocabulary::new(Vec::<String>::new()),
            Err(LmError::EmptyVocabulary)
        ));
        assert!(matches!(
            Vocabulary::new(["a", "a"]),
            Err(LmError::DuplicateToken(_))
        ));
        assert!(matches!(
            Vocabulary::new(["a", EOS]),
            Err(LmError::ReservedToken(_))
        ));
    }

    #[test]
    fn distribution_validation() {
        assert!(NextTokenDistribution::from_probs(vocab(), &[0.5, 0.25, 0.25]).is_ok());
        assert!(NextTokenDistribution::from_probs(vocab(), &[0.5, 0.25, 0.2]).is_err());
        assert!(NextTokenDistribution::from_probs(vocab(), &[0.5, 0.5]).is_err());
        assert!(NextTokenDistribution::from_probs(vocab(), &[1.5, -0.25, -0.25]).is_err());
    }

    #[test]
    fn sampling_frequencies() {
        let d = NextTokenDistribution::from_probs(vocab(), &[0.2, 0.0, 0.8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let eos = (0..n).filter(|_| d.sample(&mut rng) == Symbol::Eos).count();
        let f = eos as f64 / n as f64;
        assert!((f - 0.8).abs() < 0.02, "{f}");
        for _ in 0..1000 {
            assert_ne!(d.sample(&mut rng), Symbol::Word(1));
        }
    }

    #[test]
    fn top_words_skips_zeros() {
        let d = NextTokenDistribution::from_probs(vocab(), &[0.0, 0.3, 0.7]).unwrap();
        assert_eq!(d.top_words(5), vec![1]);
    }
}
