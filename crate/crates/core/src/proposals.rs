//! Proposal distributions `q` for the next word.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{LanguageModel, LmError, NextTokenDistribution, Symbol};
use crate::logspace::ln;

/// Row key standing for the position after the last word.
pub const END: &str = "END";
pub const DEFAULT_FLOOR: f64 = 1e-6;
pub const DEFAULT_TOP_K: usize = 50;

#[derive(Debug, Error)]
pub enum ProposalError {
    #[error("no candidate words at position {position}")]
    EmptyCandidateSet { position: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("sentence {0}: words and tags differ in length")]
    LengthMismatch(usize),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// `q(· | prefix)` over the next word and EOS.
pub trait Proposal: Send + Sync {
    fn propose(&self, prefix: &[String]) -> Result<NextTokenDistribution, ProposalError>;

    fn logprob(&self, prefix: &[String], symbol: Symbol) -> Result<f64, ProposalError> {
        Ok(self.propose(prefix)?.logprob(symbol))
    }
}

impl<T: Proposal + ?Sized> Proposal for Arc<T> {
    fn propose(&self, prefix: &[String]) -> Result<NextTokenDistribution, ProposalError> {
        (**self).propose(prefix)
    }
}

/// The prior as its own proposal.
#[derive(Debug, Clone)]
pub struct PriorProposal<L> {
    lm: L,
}

impl<L: LanguageModel> PriorProposal<L> {
    pub fn new(lm: L) -> Self {
        PriorProposal { lm }
    }
}

impl<L: LanguageModel> Proposal for PriorProposal<L> {
    fn propose(&self, prefix: &[String]) -> Result<NextTokenDistribution, ProposalError> {
        Ok(self.lm.conditional(prefix)?)
    }
}

/// Word distributions conditioned on the part-of-speech tags at the
/// current and next position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosBigramModel {
    pub pairs: BTreeMap<String, BTreeMap<String, f64>>,
    pub backoff: BTreeMap<String, BTreeMap<String, f64>>,
    pub floor: f64,
}

pub fn pair_key(pos: &str, next: Option<&str>) -> String {
    format!("{pos}|{}", next.unwrap_or(END))
}

fn normalize(counts: BTreeMap<String, BTreeMap<String, u64>>) -> BTreeMap<String, BTreeMap<String, f64>> {
    counts
        .into_iter()
        .map(|(k, row)| {
            let total: u64 = row.values().sum();
            let row = row
                .into_iter()
                .map(|(w, c)| (w, c as f64 / total as f64))
                .collect();
            (k, row)
        })
        .collect()
}

/// Maximum-likelihood tables from `(words, pos)` pairs.
pub fn train_pos_bigram(
    corpus: &[(Vec<String>, Vec<String>)],
    floor: f64,
) -> Result<PosBigramModel, ProposalError> {
    if corpus.is_empty() {
        return Err(ProposalError::EmptyCorpus);
    }
    if !(0.0..1.0).contains(&floor) {
        return Err(ProposalError::Format("floor must lie in [0, 1)".into()));
    }
    let mut pairs: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut backoff: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for (s, (words, pos)) in corpus.iter().enumerate() {
        if words.len() != pos.len() {
            return Err(ProposalError::LengthMismatch(s));
        }
        for (i, w) in words.iter().enumerate() {
            let key = pair_key(&pos[i], pos.get(i + 1).map(String::as_str));
            *pairs.entry(key).or_default().entry(w.clone()).or_default() += 1;
            *backoff
                .entry(pos[i].clone())
                .or_default()
                .entry(w.clone())
                .or_default() += 1;
        }
    }
    if backoff.is_empty() {
        return Err(ProposalError::EmptyCorpus);
    }
    Ok(PosBigramModel {
        pairs: normalize(pairs),
        backoff: normalize(backoff),
        floor,
    })
}

impl PosBigramModel {
    /// The pair row, or the backoff row when the pair was never seen.
    pub fn row(&self, pos: &str, next: Option<&str>) -> Option<&BTreeMap<String, f64>> {
        self.pairs
            .get(&pair_key(pos, next))
            .or_else(|| self.backoff.get(pos))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, ProposalError> {
        let m: PosBigramModel =
            serde_json::from_str(text).map_err(|e| ProposalError::Format(e.to_string()))?;
        for (key, row) in m.pairs.iter().chain(&m.backoff) {
            let total: f64 = row.values().sum();
            if (total - 1.0).abs() > 1e-9 || row.values().any(|p| *p < 0.0) {
                return Err(ProposalError::Format(format!("row {key} is not a distribution")));
            }
        }
        if !(m.floor >= 0.0 && m.floor < 1.0) {
            return Err(ProposalError::Format("floor must lie in [0, 1)".into()));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProposalError> {
        let text = fs::read_to_string(path).map_err(|e| ProposalError::Format(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// Mixes the prior with a POS-conditioned word model for a fixed template.
///
/// With probability `1 - floor` a word is drawn proportionally to
/// `p_lm(w | prefix) · p_bigram(w | pos_n, pos_n+1)` over the bigram row;
/// with probability `floor` it comes from the prior restricted to its `top_k`
/// most likely words. After the last template position only EOS is
/// proposed.
#[derive(Debug, Clone)]
pub struct BigramMixtureProposal<L> {
    lm: L,
    bigram: Arc<PosBigramModel>,
    pos: Vec<String>,
    top_k: usize,
    floor: f64,
}

impl<L: LanguageModel> BigramMixtureProposal<L> {
    pub fn new(lm: L, bigram: Arc<PosBigramModel>, pos: Vec<String>) -> Self {
        let floor = bigram.floor;
        BigramMixtureProposal {
            lm,
            bigram,
            pos,
            top_k: DEFAULT_TOP_K,
            floor,
        }
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = k;
        self
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }
}

impl<L: LanguageModel> Proposal for BigramMixtureProposal<L> {
    fn propose(&self, prefix: &[String]) -> Result<NextTokenDistribution, ProposalError> {
        let n = prefix.len();
        let vocab = self.lm.vocabulary().clone();
        if n >= self.pos.len() {
            return Ok(NextTokenDistribution::eos_only(vocab));
        }
        let prior = self.lm.conditional(prefix)?;
        let size = vocab.len() + 1;

        let mut cand = vec![0.0; size];
        if let Some(row) = self
            .bigram
            .row(&self.pos[n], self.pos.get(n + 1).map(String::as_str))
        {
            for (w, pb) in row {
                if let Some(id) = vocab.id(w) {
                    cand[id] = prior.prob(Symbol::Word(id)) * pb;
                }
            }
        }
        let cand_total: f64 = cand.iter().sum();

        let mut top = vec![0.0; size];
        if self.floor > 0.0 {
            for id in prior.top_words(self.top_k) {
                top[id] = prior.prob(Symbol::Word(id));
            }
        }
        let top_total: f64 = top.iter().sum();

        let (wc, wt) = match (cand_total > 0.0, top_total > 0.0) {
            (true, true) => (1.0 - self.floor, self.floor),
            (true, false) => (1.0, 0.0),
            (false, true) => (0.0, 1.0),
            (false, false) => return Err(ProposalError::EmptyCandidateSet { position: n }),
        };
        let logprobs = (0..size)
            .map(|i| {
                let c = if wc > 0.0 { wc * cand[i] / cand_total } else { 0.0 };
                let t = if wt > 0.0 { wt * top[i] / top_total } else { 0.0 };
                ln(c + t)
            })
            .collect();
        Ok(NextTokenDistribution::normalized(vocab, logprobs)?)
    }
}
