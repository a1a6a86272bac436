//! Tag likelihoods over complete strings and their autoregressive
//! counterparts over prefixes.
//!
//! Word `i` owns two slots: its leaf tag and the internal tag that follows
//! it. The last word's internal slot holds [`SlotTag::Dummy`] with
//! probability one.

mod feature;
mod oracle;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use feature::{
    train_feature_tagger, Context, FeatureTagger, TaggedSentence, TaggerError, TrainConfig,
};
pub use oracle::GrammarOracle;

use crate::logspace::NEG_INF;
use crate::tetratag::{TagSequence, Tetratag};

/// A tag as it appears in a word slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotTag {
    Tag(Tetratag),
    Dummy,
}

impl fmt::Display for SlotTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotTag::Tag(t) => t.fmt(f),
            SlotTag::Dummy => f.write_str("<dummy>"),
        }
    }
}

/// Probabilities of each tag in the two slots of one word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagDistributionPair {
    pub odd: Vec<(String, f64)>,
    pub even: Vec<(String, f64)>,
}

impl TagDistributionPair {
    pub fn odd_prob(&self, tag: &str) -> f64 {
        lookup(&self.odd, tag)
    }

    pub fn even_prob(&self, tag: &str) -> f64 {
        lookup(&self.even, tag)
    }
}

fn lookup(dist: &[(String, f64)], tag: &str) -> f64 {
    dist.iter()
        .find(|(t, _)| t == tag)
        .map_or(0.0, |(_, p)| *p)
}

/// The two slot tags of word `i` in `target`.
pub fn word_slots(target: &TagSequence, i: usize) -> (&Tetratag, SlotTag) {
    let even = match target.internal_tag(i) {
        Some(t) => SlotTag::Tag(t.clone()),
        None => SlotTag::Dummy,
    };
    (target.leaf_tag(i), even)
}

/// `ψ(target | words)`, a likelihood in `[0, 1]`.
pub trait Potential: Send + Sync {
    /// `log ψ`; `-inf` when `words` has the wrong length.
    fn log_likelihood(&self, words: &[String], target: &TagSequence) -> f64;
}

/// Prefix-level estimate `φ(target | prefix)` of the expected potential.
pub trait Shaper: Send + Sync {
    /// `log φ` of the empty prefix.
    fn log_empty(&self, _target: &TagSequence) -> f64 {
        0.0
    }

    /// `log φ(prefix)`.
    fn log_score(&self, prefix: &[String], target: &TagSequence) -> f64;

    /// `log φ(prefix)` given `previous = log φ(prefix without its last
    /// word)`.
    fn log_extend(&self, prefix: &[String], _previous: f64, target: &TagSequence) -> f64 {
        self.log_score(prefix, target)
    }
}

/// Shapers built from per-word slot factors.
pub trait SlotShaper: Send + Sync {
    /// `log φ(t_odd | prefix) + log φ(t_even | prefix)` for the last word
    /// of `prefix`.
    fn log_step(&self, prefix: &[String], target: &TagSequence) -> f64;
}

/// Sum of slot factors over every nonempty prefix.
pub fn sum_steps<S: SlotShaper + ?Sized>(s: &S, prefix: &[String], target: &TagSequence) -> f64 {
    if prefix.len() > target.word_count() {
        return NEG_INF;
    }
    let mut total = 0.0;
    for n in 1..=prefix.len() {
        total += s.log_step(&prefix[..n], target);
        if total == NEG_INF {
            break;
        }
    }
    total
}

macro_rules! slot_shaper {
    ($t:ty) => {
        impl $crate::taggers::Shaper for $t {
            fn log_score(&self, prefix: &[String], target: &TagSequence) -> f64 {
                $crate::taggers::sum_steps(self, prefix, target)
            }

            fn log_extend(&self, prefix: &[String], previous: f64, target: &TagSequence) -> f64 {
                if prefix.len() > target.word_count() {
                    return $crate::logspace::NEG_INF;
                }
                $crate::logspace::accumulate(
                    previous,
                    $crate::taggers::SlotShaper::log_step(self, prefix, target),
                )
            }
        }
    };
}
pub(crate) use slot_shaper;

/// `ψ ≡ 1` for strings of the target length.
#[derive(Debug, Clone, Copy, Default)]
pub struct LengthPotential;

impl Potential for LengthPotential {
    fn log_likelihood(&self, words: &[String], target: &TagSequence) -> f64 {
        if words.len() == target.word_count() {
            0.0
        } else {
            NEG_INF
        }
    }
}

/// `φ ≡ 1`: shaping switched off.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatShaper;

impl Shaper for FlatShaper {
    fn log_score(&self, prefix: &[String], target: &TagSequence) -> f64 {
        if prefix.len() > target.word_count() {
            NEG_INF
        } else {
            0.0
        }
    }
}

/// Probability of `target` under `potential`, computed in linear space.
pub fn likelihood<P: Potential + ?Sized>(potential: &P, words: &[String], target: &TagSequence) -> f64 {
    potential.log_likelihood(words, target).exp()
}

/// `φ(prefix)` in linear space.
pub fn shaping_prefix_score<S: Shaper + ?Sized>(shaper: &S, prefix: &[String], target: &TagSequence) -> f64 {
    if prefix.is_empty() {
        shaper.log_empty(target).exp()
    } else {
        shaper.log_score(prefix, target).exp()
    }
}
