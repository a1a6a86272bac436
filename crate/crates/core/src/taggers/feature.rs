use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{slot_shaper, Potential, SlotShaper, SlotTag, TagDistributionPair};
use crate::logspace::{log_sum_exp, NEG_INF};
use crate::tetratag::{encode, TagSequence, Tetratag};
use crate::tree::ConstituencyTree;

const FORMAT: &str = "syntax-smc/tagger";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("sentence {sentence}: {words} words but tags for {expected}")]
    LengthMismatch {
        sentence: usize,
        words: usize,
        expected: usize,
    },
    #[error("{0}")]
    Format(String),
}

/// Which words a slot distribution may look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Context {
    /// Previous, current and next word.
    Full,
    /// Previous and current word only.
    Prefix,
}

/// One line of a tagged corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub words: Vec<String>,
    pub tags: TagSequence,
}

impl TaggedSentence {
    pub fn from_tree(tree: &ConstituencyTree) -> Self {
        TaggedSentence {
            words: tree.words(),
            tags: encode(tree),
        }
    }

    pub fn read_jsonl(text: &str) -> Result<Vec<Self>, TaggerError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| TaggerError::Format(format!("line {}: {e}", i + 1)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub context: Context,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            context: Context::Prefix,
            learning_rate: 0.1,
            epochs: 50,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Log-linear tag model: one softmax per slot over sparse word features.
#[derive(Debug, Clone)]
pub struct FeatureTagger {
    context: Context,
    feature_names: Vec<String>,
    features: HashMap<String, usize>,
    odd: Layer,
    even: Layer,
}

#[derive(Debug, Clone)]
struct Layer {
    classes: Vec<Tetratag>,
    index: HashMap<Tetratag, usize>,
    /// Row-major `features × classes`.
    weights: Vec<f64>,
}

impl Layer {
    fn new(classes: Vec<Tetratag>, features: usize) -> Self {
        let index = classes.iter().cloned().zip(0..).collect();
        let weights = vec![0.0; features * classes.len()];
        Layer {
            classes,
            index,
            weights,
        }
    }

    fn log_probs(&self, active: &[usize]) -> Vec<f64> {
        let c = self.classes.len();
        let mut logits = vec![0.0; c];
        for &f in active {
            for (k, l) in logits.iter_mut().enumerate() {
                *l += self.weights[f * c + k];
            }
        }
        let z = log_sum_exp(&logits);
        logits.iter().map(|l| l - z).collect()
    }

    fn log_prob(&self, active: &[usize], tag: &Tetratag) -> f64 {
        match self.index.get(tag) {
            Some(&k) => self.log_probs(active)[k],
            None => NEG_INF,
        }
    }

    fn update(&mut self, active: &[usize], gold: usize, lr: f64, l2: f64) {
        let c = self.classes.len();
        let probs: Vec<f64> = self.log_probs(active).iter().map(|lp| lp.exp()).collect();
        for &f in active {
            for (k, p) in probs.iter().enumerate() {
                let w = &mut self.weights[f * c + k];
                let target = if k == gold { 1.0 } else { 0.0 };
                *w += lr * (target - p - l2 * *w);
            }
        }
    }

    fn distribution(&self, active: &[usize]) -> Vec<(String, f64)> {
        self.classes
            .iter()
            .zip(self.log_probs(active))
            .map(|(t, lp)| (t.to_string(), lp.exp()))
            .collect()
    }
}

fn feature_strings(words: &[String], i: usize, context: Context) -> Vec<String> {
    let w = &words[i];
    let lower = w.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut out = vec![
        "bias".to_string(),
        format!("w={w}"),
        format!("lw={lower}"),
    ];
    for k in 1..=3 {
        if chars.len() >= k {
            let suffix: String = chars[chars.len() - k..].iter().collect();
            out.push(format!("s{k}={suffix}"));
        }
    }
    out.push(match i {
        0 => "pw=<s>".to_string(),
        _ => format!("pw={}", words[i - 1]),
    });
    if context == Context::Full {
        out.push(match words.get(i + 1) {
            Some(next) => format!("nw={next}"),
            None => "nw=</s>".to_string(),
        });
    }
    out
}

pub fn train_feature_tagger(
    corpus: &[TaggedSentence],
    config: &TrainConfig,
) -> Result<FeatureTagger, TaggerError> {
    if corpus.is_empty() {
        return Err(TaggerError::EmptyCorpus);
    }
    for (s, ex) in corpus.iter().enumerate() {
        if ex.words.len() != ex.tags.word_count() {
            return Err(TaggerError::LengthMismatch {
                sentence: s,
                words: ex.words.len(),
                expected: ex.tags.word_count(),
            });
        }
    }
    let mut names = BTreeSet::new();
    let mut odd = BTreeSet::new();
    let mut even = BTreeSet::new();
    for ex in corpus {
        for i in 0..ex.words.len() {
            names.extend(feature_strings(&ex.words, i, config.context));
            odd.insert(ex.tags.leaf_tag(i).clone());
            if let Some(t) = ex.tags.internal_tag(i) {
                even.insert(t.clone());
            }
        }
    }
    let feature_names: Vec<String> = names.into_iter().collect();
    let features: HashMap<String, usize> = feature_names.iter().cloned().zip(0..).collect();
    let f = feature_names.len();
    let mut tagger = FeatureTagger {
        context: config.context,
        odd: Layer::new(odd.into_iter().collect(), f),
        even: Layer::new(even.into_iter().collect(), f),
        feature_names,
        features,
    };

    struct Example {
        active: Vec<usize>,
        odd: usize,
        even: Option<usize>,
    }
    let mut examples = Vec::new();
    for ex in corpus {
        for i in 0..ex.words.len() {
            examples.push(Example {
                active: tagger.active(&ex.words, i, config.context),
                odd: tagger.odd.index[ex.tags.leaf_tag(i)],
                even: ex.tags.internal_tag(i).map(|t| tagger.even.index[t]),
            });
        }
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &e in &order {
            let ex = &examples[e];
            tagger
                .odd
                .update(&ex.active, ex.odd, config.learning_rate, config.l2);
            if let Some(gold) = ex.even {
                tagger
                    .even
                    .update(&ex.active, gold, config.learning_rate, config.l2);
            }
        }
    }
    Ok(tagger)
}

#[derive(Serialize, Deserialize)]
struct TaggerFile {
    format: String,
    version: u32,
    context: Context,
    features: Vec<String>,
    odd_classes: Vec<Tetratag>,
    even_classes: Vec<Tetratag>,
    odd_weights: Vec<Vec<f64>>,
    even_weights: Vec<Vec<f64>>,
}

impl FeatureTagger {
    pub fn context(&self) -> Context {
        self.context
    }

    fn active(&self, words: &[String], i: usize, context: Context) -> Vec<usize> {
        feature_strings(words, i, context)
            .iter()
            .filter_map(|f| self.features.get(f).copied())
            .collect()
    }

    /// Slot distributions of word `i` using this model's context.
    pub fn distributions(&self, words: &[String], i: usize) -> TagDistributionPair {
        let active = self.active(words, i, self.context);
        TagDistributionPair {
            odd: self.odd.distribution(&active),
            even: if i + 1 == words.len() {
                vec![(SlotTag::Dummy.to_string(), 1.0)]
            } else {
                self.even.distribution(&active)
            },
        }
    }

    fn slot_log_probs(&self, words: &[String], i: usize, target: &TagSequence, context: Context) -> f64 {
        let active = self.active(words, i, context);
        let odd = self.odd.log_prob(&active, target.leaf_tag(i));
        let even = match target.internal_tag(i) {
            Some(t) => self.even.log_prob(&active, t),
            None => 0.0,
        };
        odd + even
    }

    pub fn to_json(&self) -> String {
        let rows = |layer: &Layer| {
            let c = layer.classes.len();
            (0..self.feature_names.len())
                .map(|f| layer.weights[f * c..(f + 1) * c].to_vec())
                .collect()
        };
        let file = TaggerFile {
            format: FORMAT.into(),
            version: VERSION,
            context: self.context,
            features: self.feature_names.clone(),
            odd_classes: self.odd.classes.clone(),
            even_classes: self.even.classes.clone(),
            odd_weights: rows(&self.odd),
            even_weights: rows(&self.even),
        };
        serde_json::to_string(&file).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, TaggerError> {
        let file: TaggerFile =
            serde_json::from_str(text).map_err(|e| TaggerError::Format(e.to_string()))?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(TaggerError::Format(format!(
                "expected {FORMAT} version {VERSION}"
            )));
        }
        let f = file.features.len();
        let layer = |classes: Vec<Tetratag>, rows: Vec<Vec<f64>>| {
            if rows.len() != f || rows.iter().any(|r| r.len() != classes.len()) {
                return Err(TaggerError::Format("weight matrix has the wrong shape".into()));
            }
            let mut l = Layer::new(classes, f);
            l.weights = rows.concat();
            Ok(l)
        };
        Ok(FeatureTagger {
            context: file.context,
            features: file.features.iter().cloned().zip(0..).collect(),
            odd: layer(file.odd_classes, file.odd_weights)?,
            even: layer(file.even_classes, file.even_weights)?,
            feature_names: file.features,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaggerError> {
        let text = fs::read_to_string(path).map_err(|e| TaggerError::Format(e.to_string()))?;
        Self::from_json(&text)
    }
}

impl Potential for FeatureTagger {
    fn log_likelihood(&self, words: &[String], target: &TagSequence) -> f64 {
        if words.len() != target.word_count() {
            return NEG_INF;
        }
        (0..words.len())
            .map(|i| self.slot_log_probs(words, i, target, self.context))
            .sum()
    }
}

/// Always reads prefix features, whatever context the model was trained
/// with.
impl SlotShaper for FeatureTagger {
    fn log_step(&self, prefix: &[String], target: &TagSequence) -> f64 {
        let n = prefix.len();
        if n == 0 || n > target.word_count() {
            return NEG_INF;
        }
        self.slot_log_probs(prefix, n - 1, target, Context::Prefix)
    }
}

slot_shaper!(FeatureTagger);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{toy::PP, sample_tree, Pcfg};
    use crate::lm::words;
    use crate::taggers::Shaper;
    use crate::tetratag::{TagKind, Tetratag};
    use crate::tree::parse_bracketed;

    fn sentence(s: &str) -> TaggedSentence {
        TaggedSentence::from_tree(&parse_bracketed(s).unwrap())
    }

    use crate::tree::EXAMPLE_TREE;

    #[test]
    fn fits_its_training_sentence() {
        let ex = sentence(EXAMPLE_TREE);
        let t = train_feature_tagger(
            &[ex.clone()],
            &TrainConfig {
                context: Context::Full,
                ..Default::default()
            },
        )
        .unwrap();
        let best = t.log_likelihood(&ex.words, &ex.tags);
        let tags = ex.tags.tags().to_vec();
        for i in 0..tags.len() {
            for alt in ["l", "r", "L", "R", "l/NP", "R/VP"] {
                let alt: Tetratag = alt.parse().unwrap();
                if alt == tags[i] || alt.kind.is_leaf() != (i % 2 == 0) {
                    continue;
                }
                let mut wrong = tags.clone();
                wrong[i] = alt;
                if let Ok(seq) = TagSequence::new(wrong) {
                    assert!(t.log_likelihood(&ex.words, &seq) < best);
                }
            }
        }
    }

    #[test]
    fn slot_factorization() {
        let ex = sentence(EXAMPLE_TREE);
        let t = train_feature_tagger(&[ex.clone(), sentence("(S (NP (NN dogs)) (VP (VBP bark)))")], &Default::default()).unwrap();
        let mut by_slot = 0.0;
        for i in 0..ex.words.len() {
            let d = t.distributions(&ex.words, i);
            by_slot += d.odd_prob(&ex.tags.leaf_tag(i).to_string()).ln();
            by_slot += match ex.tags.internal_tag(i) {
                Some(tag) => d.even_prob(&tag.to_string()).ln(),
                None => d.even_prob("<dummy>").ln(),
            };
        }
        assert!((by_slot - t.log_likelihood(&ex.words, &ex.tags)).abs() < 1e-12);
        assert_eq!(t.log_likelihood(&ex.words[..4], &ex.tags), NEG_INF);
    }

    #[test]
    fn prefix_scores_ignore_future_words() {
        let ex = sentence(EXAMPLE_TREE);
        let t = train_feature_tagger(&[ex.clone()], &Default::default()).unwrap();
        let mut other = ex.words.clone();
        other[3] = "zebra".into();
        other[4] = "quietly".into();
        for n in 1..=3 {
            assert_eq!(
                t.log_score(&ex.words[..n], &ex.tags),
                t.log_score(&other[..n], &ex.tags)
            );
        }
    }

    #[test]
    fn unknown_tag_has_zero_probability() {
        let ex = sentence("(S (NN a) (NN b))");
        let t = train_feature_tagger(&[ex.clone()], &Default::default()).unwrap();
        let other = sentence("(S (NP (NN a)) (NN b))");
        assert_eq!(t.log_likelihood(&words("a b"), &other.tags), NEG_INF);
        assert_eq!(
            Tetratag::new(TagKind::LeftLeaf, Some("NP")),
            other.tags.leaf_tag(0).clone()
        );
    }

    #[test]
    fn deterministic_and_reloadable() {
        let corpus = vec![sentence(EXAMPLE_TREE), sentence("(S (NP (NN dogs)) (VP (VBP bark)))")];
        let cfg = TrainConfig {
            seed: 4,
            epochs: 5,
            ..Default::default()
        };
        let a = train_feature_tagger(&corpus, &cfg).unwrap();
        let b = train_feature_tagger(&corpus, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let back = FeatureTagger::from_json(&a.to_json()).unwrap();
        let ex = &corpus[0];
        assert_eq!(
            a.log_likelihood(&ex.words, &ex.tags),
            back.log_likelihood(&ex.words, &ex.tags)
        );
    }

    #[test]
    fn beats_chance_on_held_out_grammar_sentences() {
        let g = Pcfg::parse(PP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sample = |n: usize| {
            let mut out = Vec::new();
            while out.len() < n {
                if let Some(t) = sample_tree(&g, &mut rng, 14) {
                    out.push(TaggedSentence::from_tree(&t));
                }
            }
            out
        };
        let train = sample(200);
        let test = sample(100);
        let t = train_feature_tagger(
            &train,
            &TrainConfig {
                context: Context::Full,
                epochs: 10,
                ..Default::default()
            },
        )
        .unwrap();
        let (mut right, mut total) = (0, 0);
        for ex in &test {
            for i in 0..ex.words.len() {
                let d = t.distributions(&ex.words, i);
                let best = d
                    .odd
                    .iter()
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap()
                    .0
                    .clone();
                right += (best == ex.tags.leaf_tag(i).to_string()) as usize;
                total += 1;
            }
        }
        let chance = 1.0 / t.odd.classes.len() as f64;
        assert!(right as f64 / total as f64 > chance + 0.2);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(
            train_feature_tagger(&[], &Default::default()),
            Err(TaggerError::EmptyCorpus)
        ));
    }

    #[test]
    fn jsonl_format() {
        let line = r#"{"words": ["a", "b"], "tags": ["l", "L/S", "r"]}"#;
        let c = TaggedSentence::read_jsonl(line).unwrap();
        assert_eq!(c[0].tags.word_count(), 2);
        assert!(TaggedSentence::read_jsonl(r#"{"words": ["a"], "tags": ["r"]}"#).is_err());
    }
}
