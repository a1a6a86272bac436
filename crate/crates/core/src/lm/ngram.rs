use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{LanguageModel, LmError, NextTokenDistribution, Vocabulary, BOS, EOS, FORMAT, VERSION};
use crate::logspace::ln;

#[derive(Debug, Clone, PartialEq)]
pub struct NgramConfig {
    pub order: usize,
    /// Add-k smoothing constant.
    pub k: f64,
    /// Words added to the vocabulary even if absent from the corpus.
    pub extra_vocab: Vec<String>,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            order: 2,
            k: 0.01,
            extra_vocab: Vec::new(),
        }
    }
}

/// Sentinel id for [`BOS`] inside histories.
const BOS_ID: usize = usize::MAX;

#[derive(Debug, Clone, Default)]
struct Row {
    total: u64,
    counts: HashMap<usize, u64>,
}

/// Add-k smoothed n-gram model over words.
///
/// Histories never seen in training back off to the longest seen suffix;
/// the empty history is always seen.
#[derive(Debug, Clone)]
pub struct NgramLm {
    order: usize,
    k: f64,
    vocab: Arc<Vocabulary>,
    rows: HashMap<Vec<usize>, Row>,
}

/// Reads a corpus: one whitespace-tokenized sentence per line, blank lines
/// skipped.
pub fn read_corpus(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn train_ngram(corpus: &[Vec<String>], config: &NgramConfig) -> Result<NgramLm, LmError> {
    if config.order == 0 {
        return Err(LmError::Format("order must be at least 1".into()));
    }
    if !(config.k >= 0.0) {
        return Err(LmError::Format("k must be nonnegative".into()));
    }
    if corpus.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let mut words = BTreeSet::new();
    for w in corpus.iter().flatten().chain(&config.extra_vocab) {
        if w == BOS || w == EOS {
            return Err(LmError::ReservedToken(w.clone()));
        }
        words.insert(w.clone());
    }
    if words.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let vocab = Arc::new(Vocabulary::new(words)?);
    let eos = vocab.len();
    let mut rows: HashMap<Vec<usize>, Row> = HashMap::new();
    for sentence in corpus {
        let mut padded = vec![BOS_ID; config.order - 1];
        padded.extend(sentence.iter().map(|w| vocab.id(w).expect("collected above")));
        padded.push(eos);
        for i in (config.order - 1)..padded.len() {
            let target = padded[i];
            for h in 0..config.order {
                let row = rows.entry(padded[i - h..i].to_vec()).or_default();
                row.total += 1;
                *row.counts.entry(target).or_default() += 1;
            }
        }
    }
    Ok(NgramLm {
        order: config.order,
        k: config.k,
        vocab,
        rows,
    })
}

#[derive(Serialize, Deserialize)]
struct NgramFile {
    format: String,
    version: u32,
    kind: String,
    order: usize,
    k: f64,
    vocab: Vec<String>,
    rows: Vec<RowFile>,
}

#[derive(Serialize, Deserialize)]
struct RowFile {
    history: Vec<String>,
    counts: BTreeMap<String, u64>,
}

impl NgramLm {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    fn symbol_name(&self, id: usize) -> &str {
        match id {
            BOS_ID => BOS,
            i if i == self.vocab.len() => EOS,
            i => self.vocab.word(i),
        }
    }

    fn symbol_id(&self, name: &str) -> Result<usize, LmError> {
        match name {
            BOS => Ok(BOS_ID),
            EOS => Ok(self.vocab.len()),
            w => self
                .vocab
                .id(w)
                .ok_or_else(|| LmError::Format(format!("unknown symbol {w:?}"))),
        }
    }

    /// Rows are sorted so that equal models produce identical files.
    pub fn to_json(&self) -> String {
        let mut rows: Vec<RowFile> = self
            .rows
            .iter()
            .map(|(h, row)| RowFile {
                history: h.iter().map(|&i| self.symbol_name(i).to_string()).collect(),
                counts: row
                    .counts
                    .iter()
                    .map(|(&i, &c)| (self.symbol_name(i).to_string(), c))
                    .collect(),
            })
            .collect();
        rows.sort_by(|a, b| (a.history.len(), &a.history).cmp(&(b.history.len(), &b.history)));
        let file = NgramFile {
            format: FORMAT.into(),
            version: VERSION,
            kind: "ngram".into(),
            order: self.order,
            k: self.k,
            vocab: self.vocab.items().to_vec(),
            rows,
        };
        serde_json::to_string(&file).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, LmError> {
        let file: NgramFile =
            serde_json::from_str(text).map_err(|e| LmError::Format(e.to_string()))?;
        let mut lm = NgramLm {
            order: file.order,
            k: file.k,
            vocab: Arc::new(Vocabulary::new(file.vocab)?),
            rows: HashMap::new(),
        };
        for r in file.rows {
            let history = r
                .history
                .iter()
                .map(|s| lm.symbol_id(s))
                .collect::<Result<Vec<_>, _>>()?;
            let mut row = Row::default();
            for (s, c) in r.counts {
                row.total += c;
                row.counts.insert(lm.symbol_id(&s)?, c);
            }
            lm.rows.insert(history, row);
        }
        if !lm.rows.contains_key(&Vec::new()) {
            return Err(LmError::Format("missing unigram row".into()));
        }
        Ok(lm)
    }
}

impl LanguageModel for NgramLm {
    fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    fn conditional(&self, prefix: &[String]) -> Result<NextTokenDistribution, LmError> {
        let ids = self.vocab.ids(prefix)?;
        let mut history = vec![BOS_ID; self.order - 1];
        history.extend(ids);
        let full = &history[history.len() - (self.order - 1)..];
        let row = (0..self.order)
            .rev()
            .find_map(|h| {
                self.rows
                    .get(&full[full.len() - h..])
                    .filter(|r| r.total > 0)
            })
            .expect("unigram row is never empty");
        let outcomes = self.vocab.len() + 1;
        let denom = row.total as f64 + self.k * outcomes as f64;
        let logprobs = (0..outcomes)
            .map(|i| {
                let c = row.counts.get(&i).copied().unwrap_or(0) as f64;
                ln((c + self.k) / denom)
            })
            .collect();
        NextTokenDistribution::from_logprobs(self.vocab.clone(), logprobs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{words, Symbol};

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| words(l)).collect()
    }

    fn mle(order: usize) -> NgramConfig {
        NgramConfig {
            order,
            k: 0.0,
            extra_vocab: vec![],
        }
    }

    #[test]
    fn unigram_counts() {
        let lm = train_ngram(&corpus(&["a"]), &mle(1)).unwrap();
        for prefix in [vec![], words("a"), words("a a a")] {
            let d = lm.conditional(&prefix).unwrap();
            assert!((d.prob(Symbol::Word(0)) - 0.5).abs() < 1e-15);
            assert!((d.prob(Symbol::Eos) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn bigram_mle() {
        let lm = train_ngram(&corpus(&["a b", "a c"]), &mle(2)).unwrap();
        let d = lm.conditional(&words("a")).unwrap();
        assert!((d.word_logprob("b").exp() - 0.5).abs() < 1e-15);
        assert!((d.word_logprob("c").exp() - 0.5).abs() < 1e-15);
        // counts: <s> a = 2, a b = 1, b </s> = 1, so p(a b) = 1 * 0.5 * 1
        let lp = lm.string_logprob(&words("a b")).unwrap();
        assert!((lp - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bigram_with_mixed_starts() {
        // <s> -> a: 1, <s> -> b: 1; a -> b: 1; b -> EOS: 1, b -> a: 1, a -> EOS: 1
        let lm = train_ngram(&corpus(&["a b", "b a"]), &mle(2)).unwrap();
        let lp = lm.string_logprob(&words("a b")).unwrap();
        let expected = (0.5f64 * 0.5 * 0.5).ln();
        assert!((lp - expected).abs() < 1e-14, "{lp} vs {expected}");
    }

    #[test]
    fn smoothing_is_positive() {
        let cfg = NgramConfig {
            order: 3,
            k: 0.1,
            extra_vocab: vec!["zzz".into()],
        };
        let lm = train_ngram(&corpus(&["a b c", "c b a"]), &cfg).unwrap();
        for prefix in [vec![], words("a"), words("zzz a"), words("c b")] {
            let d = lm.conditional(&prefix).unwrap();
            assert!(d.logprobs().iter().all(|lp| lp.is_finite()));
            assert!((d.total_prob() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unseen_history_backs_off() {
        let lm = train_ngram(&corpus(&["a b", "b b"]), &mle(2)).unwrap();
        let uni = train_ngram(&corpus(&["a b", "b b"]), &mle(1)).unwrap();
        // "a" is never followed by anything but "b"; "b b" then never
        // starts another history, but EOS-only histories do not exist
        let d = lm.conditional(&words("b")).unwrap();
        assert!((d.total_prob() - 1.0).abs() < 1e-12);
        let cfg = NgramConfig {
            order: 2,
            k: 0.0,
            extra_vocab: vec!["c".into()],
        };
        let lm = train_ngram(&corpus(&["a b", "b b"]), &cfg).unwrap();
        let backed = lm.conditional(&words("c")).unwrap();
        let uni_d = uni.conditional(&[]).unwrap();
        for w in ["a", "b"] {
            assert!((backed.word_logprob(w) - uni_d.word_logprob(w)).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_and_reloadable() {
        let c = corpus(&["the dog barks", "a cat sleeps", "the cat barks"]);
        let cfg = NgramConfig::default();
        let a = train_ngram(&c, &cfg).unwrap();
        let b = train_ngram(&c, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let back = NgramLm::from_json(&a.to_json()).unwrap();
        for p in [vec![], words("the"), words("the cat")] {
            assert_eq!(
                a.conditional(&p).unwrap().logprobs(),
                back.conditional(&p).unwrap().logprobs()
            );
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(train_ngram(&[], &mle(2)), Err(LmError::EmptyCorpus)));
        assert!(matches!(
            train_ngram(&corpus(&["a <s>"]), &mle(2)),
            Err(LmError::ReservedToken(_))
        ));
        assert!(train_ngram(&corpus(&["a"]), &mle(0)).is_err());
        let lm = train_ngram(&corpus(&["a"]), &mle(2)).unwrap();
        assert!(matches!(
            lm.conditional(&words("q")),
            Err(LmError::UnknownToken { .. })
        ));
    }

    #[test]
    fn read_corpus_skips_blank_lines() {
        assert_eq!(read_corpus("a b\n\n  c \n").len(), 2);
    }
}
