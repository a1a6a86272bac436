use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LanguageModel, LmError, NextTokenDistribution, Vocabulary, EOS, FORMAT, VERSION};
use crate::logspace::ln;

/// A model given by an explicit table of conditionals.
///
/// Prefixes without a row end the string: their conditional is a point mass
/// on EOS. A finite table therefore always has bounded support.
#[derive(Debug, Clone)]
pub struct TabularLm {
    vocab: Arc<Vocabulary>,
    rows: HashMap<Vec<String>, NextTokenDistribution>,
}

#[derive(Serialize, Deserialize)]
struct TabularFile {
    format: String,
    version: u32,
    kind: String,
    vocab: Vec<String>,
    rows: Vec<RowFile>,
}

#[derive(Serialize, Deserialize)]
struct RowFile {
    prefix: Vec<String>,
    probs: BTreeMap<String, f64>,
}

impl TabularLm {
    /// Each row maps symbols (words or [`EOS`]) to probabilities; omitted
    /// symbols get probability zero.
    pub fn new<I, P>(vocab: Arc<Vocabulary>, rows: I) -> Result<Self, LmError>
    where
        I: IntoIterator<Item = (Vec<String>, P)>,
        P: IntoIterator<Item = (String, f64)>,
    {
        let mut table = HashMap::new();
        for (prefix, probs) in rows {
            vocab.ids(&prefix)?;
            let mut dense = vec![0.0; vocab.len() + 1];
            for (sym, p) in probs {
                let i = if sym == EOS {
                    vocab.len()
                } else {
                    vocab.id(&sym).ok_or(LmError::UnknownToken {
                        token: sym.clone(),
                        position: prefix.len(),
                    })?
                };
                dense[i] += p;
            }
            let dist = NextTokenDistribution::from_probs(vocab.clone(), &dense)?;
            table.insert(prefix, dist);
        }
        Ok(TabularLm { vocab, rows: table })
    }

    /// Random conditionals for every prefix shorter than `max_len`; strings
    /// end at `max_len` words. `eos_scale` shrinks the EOS weight before
    /// normalization.
    pub fn random<R: Rng + ?Sized>(
        vocab: Arc<Vocabulary>,
        max_len: usize,
        eos_scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut rows = HashMap::new();
        let mut frontier: Vec<Vec<String>> = vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for prefix in frontier {
                let mut w: Vec<f64> = (0..=vocab.len()).map(|_| 0.05 + rng.gen::<f64>()).collect();
                *w.last_mut().unwrap() *= eos_scale;
                let total: f64 = w.iter().sum();
                let logprobs = w.iter().map(|x| ln(x / total)).collect();
                let dist = NextTokenDistribution::from_logprobs(vocab.clone(), logprobs)
                    .expect("normalized by construction");
                for word in vocab.items() {
                    let mut p = prefix.clone();
                    p.push(word.clone());
                    next.push(p);
                }
                rows.insert(prefix, dist);
            }
            frontier = next;
        }
        TabularLm { vocab, rows }
    }

    pub fn rows(&self) -> impl Iterator<Item = (&Vec<String>, &NextTokenDistribution)> {
        self.rows.iter()
    }

    pub fn to_json(&self) -> String {
        let mut rows: Vec<RowFile> = self
            .rows
            .iter()
            .map(|(prefix, dist)| RowFile {
                prefix: prefix.clone(),
                probs: dist
                    .iter()
                    .filter(|(_, lp)| *lp > f64::NEG_INFINITY)
                    .map(|(s, lp)| (dist.word_string(s).unwrap_or(EOS).to_string(), lp.exp()))
                    .collect(),
            })
            .collect();
        rows.sort_by(|a, b| (a.prefix.len(), &a.prefix).cmp(&(b.prefix.len(), &b.prefix)));
        let file = TabularFile {
            format: FORMAT.into(),
            version: VERSION,
            kind: "tabular".into(),
            vocab: self.vocab.items().to_vec(),
            rows,
        };
        serde_json::to_string_pretty(&file).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, LmError> {
        let file: TabularFile =
            serde_json::from_str(text).map_err(|e| LmError::Format(e.to_string()))?;
        let vocab = Arc::new(Vocabulary::new(file.vocab)?);
        Self::new(
            vocab,
            file.rows.into_iter().map(|r| (r.prefix, r.probs.into_iter())),
        )
    }
}

impl LanguageModel for TabularLm {
    fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    fn conditional(&self, prefix: &[String]) -> Result<NextTokenDistribution, LmError> {
        match self.rows.get(prefix) {
            Some(d) => Ok(d.clone()),
            None => {
                self.vocab.ids(prefix)?;
                Ok(NextTokenDistribution::eos_only(self.vocab.clone()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{words, Symbol};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn simple() -> TabularLm {
        let vocab = Arc::new(Vocabulary::new(["a"]).unwrap());
        TabularLm::new(
            vocab,
            [(vec![], vec![("a".to_string(), 0.7), (EOS.to_string(), 0.3)])],
        )
        .unwrap()
    }

    #[test]
    fn table_lookup() {
        let lm = simple();
        let d = lm.conditional(&[]).unwrap();
        assert!((d.prob(Symbol::Word(0)) - 0.7).abs() < 1e-15);
        assert!((d.prob(Symbol::Eos) - 0.3).abs() < 1e-15);
        // "a" has no row: forced end
        assert_eq!(lm.conditional(&words("a")).unwrap().prob(Symbol::Eos), 1.0);
    }

    #[test]
    fn empty_string_logprob() {
        let lm = simple();
        assert!((lm.string_logprob(&[]).unwrap() - 0.3f64.ln()).abs() < 1e-15);
        assert!((lm.string_logprob(&words("a")).unwrap() - 0.7f64.ln()).abs() < 1e-15);
        assert_eq!(lm.string_logprob(&words("a a")).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn unknown_token() {
        let lm = simple();
        assert!(matches!(
            lm.conditional(&words("z")),
            Err(LmError::UnknownToken { position: 0, .. })
        ));
        assert!(matches!(
            lm.string_logprob(&words("a z")),
            Err(LmError::UnknownToken { position: 1, .. })
        ));
    }

    #[test]
    fn exhaustive_mass_is_one() {
        let vocab = Arc::new(Vocabulary::new(["x", "y", "z"]).unwrap());
        let lm = TabularLm::random(vocab.clone(), 3, 0.5, &mut ChaCha8Rng::seed_from_u64(5));
        let mut total = 0.0;
        let mut stack = vec![Vec::<String>::new()];
        while let Some(p) = stack.pop() {
            total += lm.string_logprob(&p).unwrap().exp();
            if p.len() < 3 {
                for w in vocab.items() {
                    let mut q = p.clone();
                    q.push(w.clone());
                    stack.push(q);
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn json_round_trip() {
        let vocab = Arc::new(Vocabulary::new(["x", "y"]).unwrap());
        let lm = TabularLm::random(vocab, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        let back = TabularLm::from_json(&lm.to_json()).unwrap();
        for p in [vec![], words("x"), words("y x"), words("x y")] {
            let a = lm.conditional(&p).unwrap();
            let b = back.conditional(&p).unwrap();
            for (x, y) in a.logprobs().iter().zip(b.logprobs()) {
                assert!((x.exp() - y.exp()).abs() < 1e-15);
            }
        }
    }
}
