//! Exact answers on small instances: the posterior and evidence by
//! enumeration, and the optimal shaping function with its proposal.
//!
//! Every string of the model's support is visited, so the model must stop
//! after a fixed number of words (a [`TabularLm`] always does).

use std::collections::HashMap;
use std::hash::Hash;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{toy, Pcfg};
use crate::lm::{LanguageModel, LmError, NextTokenDistribution, Symbol, TabularLm, Vocabulary};
use crate::logspace::{accumulate, ext_f64, CompensatedSum, NEG_INF};
use crate::proposals::{Proposal, ProposalError};
use crate::taggers::{GrammarOracle, Potential, Shaper};
use crate::tetratag::{encode, TagSequence};
use crate::tree::parse_bracketed;

/// Largest `|V|^max_words` we agree to enumerate.
pub const MAX_SUPPORT: f64 = 1e7;

const TABLE_FORMAT: &str = "syntax-smc/phi-star";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("support of up to {size:.3e} strings exceeds the limit of {MAX_SUPPORT:e}")]
    SupportTooLarge { size: f64 },
    #[error("model continues past {0} words")]
    UnboundedSupport(usize),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("invalid table file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_size(vocab: &Vocabulary, max_words: usize) -> Result<(), OracleError> {
    let size = (vocab.len() as f64).powi(max_words as i32);
    if size > MAX_SUPPORT {
        return Err(OracleError::SupportTooLarge { size });
    }
    Ok(())
}

/// `log Σ exp(x)` with compensated summation of the scaled terms.
pub fn log_sum_exact(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    let s: CompensatedSum = xs.iter().map(|&x| (x - max).exp()).collect();
    max + s.value().ln()
}

/// `ψ ≡ 1` for every string.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitPotential;

impl Potential for UnitPotential {
    fn log_likelihood(&self, _words: &[String], _target: &TagSequence) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEntry {
    pub words: Vec<String>,
    /// Posterior probability; zero everywhere when `Z = 0`.
    pub prob: f64,
    #[serde(with = "ext_f64")]
    pub log_prior: f64,
    #[serde(with = "ext_f64")]
    pub log_potential: f64,
}

/// Every string with positive prior, with its exact posterior probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPosterior {
    #[serde(with = "ext_f64")]
    pub log_z: f64,
    pub entries: Vec<PosteriorEntry>,
}

impl ExactPosterior {
    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }

    pub fn prob(&self, words: &[String]) -> f64 {
        self.entries
            .iter()
            .find(|e| e.words == words)
            .map_or(0.0, |e| e.prob)
    }

    /// Strings with positive posterior probability.
    pub fn distribution(&self) -> HashMap<Vec<String>, f64> {
        self.entries
            .iter()
            .filter(|e| e.prob > 0.0)
            .map(|e| (e.words.clone(), e.prob))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        serde_json::from_str(text).map_err(|e| OracleError::Format(e.to_string()))
    }
}

/// Complete strings of the support, depth first, with their log priors.
fn complete_strings(
    lm: &dyn LanguageModel,
    max_words: usize,
) -> Result<Vec<(Vec<String>, f64)>, OracleError> {
    let vocab = lm.vocabulary().clone();
    let mut out = Vec::new();
    let mut stack = vec![(Vec::<String>::new(), 0.0)];
    while let Some((prefix, lp)) = stack.pop() {
        let dist = lm.conditional(&prefix)?;
        let eos = dist.eos_logprob();
        if eos > NEG_INF {
            out.push((prefix.clone(), lp + eos));
        }
        for id in (0..vocab.len()).rev() {
            let w = dist.logprob(Symbol::Word(id));
            if w == NEG_INF {
                continue;
            }
            if prefix.len() == max_words {
                return Err(OracleError::UnboundedSupport(max_words));
            }
            let mut next = prefix.clone();
            next.push(vocab.word(id).to_string());
            stack.push((next, lp + w));
        }
    }
    Ok(out)
}

/// `Z = Σ p(y) ψ(y)` and the normalized posterior, by summing over every
/// string of at most `max_words` words.
pub fn enumerate_posterior(
    lm: &dyn LanguageModel,
    potential: &dyn Potential,
    target: &TagSequence,
    max_words: usize,
) -> Result<ExactPosterior, OracleError> {
    check_size(lm.vocabulary(), max_words)?;
    let strings = complete_strings(lm, max_words)?;
    let scored: Vec<(Vec<String>, f64, f64)> = strings
        .into_iter()
        .map(|(w, lp)| {
            let psi = potential.log_likelihood(&w, target);
            (w, lp, psi)
        })
        .collect();
    let joint: Vec<f64> = scored.iter().map(|(_, lp, psi)| accumulate(*lp, *psi)).collect();
    let log_z = log_sum_exact(&joint);
    let entries = scored
        .into_iter()
        .zip(&joint)
        .map(|((words, log_prior, log_potential), &j)| PosteriorEntry {
            words,
            prob: if log_z == NEG_INF { 0.0 } else { (j - log_z).exp() },
            log_prior,
            log_potential,
        })
        .collect();
    Ok(ExactPosterior { log_z, entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub prefix: Vec<String>,
    #[serde(with = "ext_f64")]
    pub log_phi: f64,
    /// `log q*(· | prefix)` over the vocabulary, then EOS.
    #[serde(with = "ext_f64::vec")]
    pub log_q: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    format: String,
    version: u32,
    vocab: Vec<String>,
    max_words: usize,
    entries: Vec<ShapeEntry>,
}

/// `φ*(y) = p(EOS | y) ψ(y) + Σ_x p(x | y) φ*(y x)` for every prefix with
/// positive prior, and the proposal `q*(x | y) = p(x | y) φ*(y x) / φ*(y)`.
///
/// Where `φ*(y) = 0` the proposal falls back to the prior.
#[derive(Debug, Clone)]
pub struct OptimalShaping {
    vocab: Arc<Vocabulary>,
    max_words: usize,
    table: HashMap<Vec<String>, ShapeEntry>,
}

struct Builder<'a> {
    lm: &'a dyn LanguageModel,
    potential: &'a dyn Potential,
    target: &'a TagSequence,
    max_words: usize,
    table: HashMap<Vec<String>, ShapeEntry>,
}

impl Builder<'_> {
    fn visit(&mut self, prefix: &mut Vec<String>) -> Result<f64, OracleError> {
        let dist = self.lm.conditional(prefix)?;
        let vocab = self.lm.vocabulary().clone();
        let mut terms = Vec::with_capacity(vocab.len() + 1);
        for id in 0..vocab.len() {
            let lp = dist.logprob(Symbol::Word(id));
            if lp == NEG_INF {
                terms.push(NEG_INF);
                continue;
            }
            if prefix.len() == self.max_words {
                return Err(OracleError::UnboundedSupport(self.max_words));
            }
            prefix.push(vocab.word(id).to_string());
            let child = self.visit(prefix)?;
            prefix.pop();
            terms.push(accumulate(lp, child));
        }
        let eos = dist.eos_logprob();
        terms.push(if eos == NEG_INF {
            NEG_INF
        } else {
            accumulate(eos, self.potential.log_likelihood(prefix, self.target))
        });
        let log_phi = log_sum_exact(&terms);
        let log_q = if log_phi == NEG_INF {
            dist.logprobs().to_vec()
        } else {
            terms.iter().map(|t| t - log_phi).collect()
        };
        self.table.insert(
            prefix.clone(),
            ShapeEntry {
                prefix: prefix.clone(),
                log_phi,
                log_q,
            },
        );
        Ok(log_phi)
    }
}

/// Builds the table by backward recursion over the prefix tree.
pub fn optimal_shaping(
    lm: &dyn LanguageModel,
    potential: &dyn Potential,
    target: &TagSequence,
    max_words: usize,
) -> Result<OptimalShaping, OracleError> {
    check_size(lm.vocabulary(), max_words)?;
    let mut b = Builder {
        lm,
        potential,
        target,
        max_words,
        table: HashMap::new(),
    };
    b.visit(&mut Vec::new())?;
    Ok(OptimalShaping {
        vocab: lm.vocabulary().clone(),
        max_words,
        table: b.table,
    })
}

impl OptimalShaping {
    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn max_words(&self) -> usize {
        self.max_words
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// `log φ*(ε) = log Z`.
    pub fn log_z(&self) -> f64 {
        self.log_phi(&[])
    }

    /// `-inf` for prefixes outside the support.
    pub fn log_phi(&self, prefix: &[String]) -> f64 {
        self.table.get(prefix).map_or(NEG_INF, |e| e.log_phi)
    }

    pub fn entry(&self, prefix: &[String]) -> Option<&ShapeEntry> {
        self.table.get(prefix)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ShapeEntry> {
        self.table.values()
    }

    /// `q*(· | prefix)`.
    pub fn conditional(&self, prefix: &[String]) -> Option<NextTokenDistribution> {
        let e = self.table.get(prefix)?;
        Some(
            NextTokenDistribution::from_logprobs(self.vocab.clone(), e.log_q.clone())
                .expect("normalized by construction"),
        )
    }

    pub fn to_json(&self) -> String {
        let mut entries: Vec<ShapeEntry> = self.table.values().cloned().collect();
        entries.sort_by(|a, b| (a.prefix.len(), &a.prefix).cmp(&(b.prefix.len(), &b.prefix)));
        serde_json::to_string_pretty(&TableFile {
            format: TABLE_FORMAT.into(),
            version: 1,
            vocab: self.vocab.items().to_vec(),
            max_words: self.max_words,
            entries,
        })
        .expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        let f: TableFile =
            serde_json::from_str(text).map_err(|e| OracleError::Format(e.to_string()))?;
        if f.format != TABLE_FORMAT || f.version != 1 {
            return Err(OracleError::Format(format!("unexpected format {:?}", f.format)));
        }
        let vocab = Arc::new(Vocabulary::new(f.vocab)?);
        let mut table = HashMap::with_capacity(f.entries.len());
        for e in f.entries {
            if e.log_q.len() != vocab.len() + 1 {
                return Err(OracleError::Format(format!(
                    "prefix {:?}: expected {} probabilities",
                    e.prefix,
                    vocab.len() + 1
                )));
            }
            table.insert(e.prefix.clone(), e);
        }
        Ok(OptimalShaping {
            vocab,
            max_words: f.max_words,
            table,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Proposes from `q*`. Only meaningful for the target the table was built for.
#[derive(Debug, Clone)]
pub struct OracleProposal {
    table: Arc<OptimalShaping>,
}

impl OracleProposal {
    pub fn new(table: Arc<OptimalShaping>) -> Self {
        OracleProposal { table }
    }
}

impl Proposal for OracleProposal {
    fn propose(&self, prefix: &[String]) -> Result<NextTokenDistribution, ProposalError> {
        self.table
            .conditional(prefix)
            .ok_or(ProposalError::EmptyCandidateSet {
                position: prefix.len(),
            })
    }
}

/// Shapes with `φ*`, starting from `φ*(ε) = Z`. Ignores the target passed
/// at run time; the table already encodes one.
#[derive(Debug, Clone)]
pub struct OracleShaper {
    table: Arc<OptimalShaping>,
}

impl OracleShaper {
    pub fn new(table: Arc<OptimalShaping>) -> Self {
        OracleShaper { table }
    }
}

impl Shaper for OracleShaper {
    fn log_empty(&self, _target: &TagSequence) -> f64 {
        self.table.log_z()
    }

    fn log_score(&self, prefix: &[String], _target: &TagSequence) -> f64 {
        self.table.log_phi(prefix)
    }
}

/// `½ Σ |p - q|` over the union of supports.
pub fn tvd<K: Hash + Eq>(p: &HashMap<K, f64>, q: &HashMap<K, f64>) -> f64 {
    let mut s = CompensatedSum::default();
    for (k, &a) in p {
        s.add((a - q.get(k).copied().unwrap_or(0.0)).abs());
    }
    for (k, &b) in q {
        if !p.contains_key(k) {
            s.add(b.abs());
        }
    }
    (0.5 * s.value()).clamp(0.0, 1.0)
}

pub const REFERENCE_VOCAB: [&str; 3] = ["people", "fish", "can"];
pub const REFERENCE_MAX_WORDS: usize = 4;
pub const REFERENCE_TARGET: &str = "(S (NP (NN people) (NN fish)) (VP (VB can) (NP (NN fish))))";
const REFERENCE_EOS_SCALE: f64 = 0.3;

/// A small enumerable problem: a random tabular model over three words that
/// stops after four, the toy PCFG as the potential, and a four-word target.
#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub lm: TabularLm,
    pub oracle: GrammarOracle,
    pub target: TagSequence,
    pub max_words: usize,
}

pub fn reference_instance(seed: u64) -> ToyInstance {
    let vocab = Arc::new(Vocabulary::new(REFERENCE_VOCAB).expect("valid vocabulary"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lm = TabularLm::random(vocab, REFERENCE_MAX_WORDS, REFERENCE_EOS_SCALE, &mut rng);
    let grammar = Arc::new(Pcfg::parse(toy::UNARY).expect("valid grammar"));
    ToyInstance {
        lm,
        oracle: GrammarOracle::new(grammar),
        target: encode(&parse_bracketed(REFERENCE_TARGET).expect("valid tree")),
        max_words: REFERENCE_MAX_WORDS,
    }
}

impl ToyInstance {
    pub fn posterior(&self) -> ExactPosterior {
        enumerate_posterior(&self.lm, &self.oracle, &self.target, self.max_words)
            .expect("enumerable by construction")
    }

    pub fn shaping(&self) -> OptimalShaping {
        optimal_shaping(&self.lm, &self.oracle, &self.target, self.max_words)
            .expect("enumerable by construction")
    }
}
