//! Evaluation of generated sentences against their target trees.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{LanguageModel, LmError};
use crate::logspace::{ext_f64, NEG_INF};
use crate::taggers::{GrammarOracle, Potential};
use crate::tetratag::encode;
use crate::tree::{template_from_tree, ConstituencyTree, TreeTemplate};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("nothing to evaluate")]
    EmptyList,
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// A labeled constituent over the half-open word span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bracket {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// Every internal node except preterminals, the root included.
pub fn brackets(tree: &ConstituencyTree) -> Vec<Bracket> {
    fn go(t: &ConstituencyTree, start: usize, out: &mut Vec<Bracket>) -> usize {
        match t {
            ConstituencyTree::Leaf { .. } => start + 1,
            ConstituencyTree::Internal { label, children } => {
                let mut end = start;
                for c in children {
                    end = go(c, end, out);
                }
                if !t.is_preterminal() {
                    out.push(Bracket {
                        label: label.clone(),
                        start,
                        end,
                    });
                }
                end
            }
        }
    }
    let mut out = Vec::new();
    go(tree, 0, &mut out);
    out
}

fn counts(bs: Vec<Bracket>) -> HashMap<Bracket, usize> {
    let mut m = HashMap::new();
    for b in bs {
        *m.entry(b).or_insert(0) += 1;
    }
    m
}

/// Labeled bracketing F1 in `[0, 100]`, over bracket multisets.
pub fn bracket_f1(predicted: &ConstituencyTree, target: &ConstituencyTree) -> f64 {
    let p = brackets(predicted);
    let t = brackets(target);
    if p.is_empty() || t.is_empty() {
        let same = p.is_empty() && t.is_empty() && predicted.leaf_count() == target.leaf_count();
        return if same { 100.0 } else { 0.0 };
    }
    let (np, nt) = (p.len() as f64, t.len() as f64);
    let tc = counts(t);
    let matched: usize = counts(p)
        .iter()
        .map(|(b, &c)| c.min(tc.get(b).copied().unwrap_or(0)))
        .sum();
    if matched == 0 {
        return 0.0;
    }
    let (precision, recall) = (matched as f64 / np, matched as f64 / nt);
    200.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchMetrics {
    pub exact: bool,
    pub structure: bool,
    pub correct_length: bool,
}

/// Labels and shape equal (words ignored); shape equal; leaf counts equal.
pub fn match_metrics(predicted: &ConstituencyTree, target: &ConstituencyTree) -> MatchMetrics {
    MatchMetrics {
        exact: template_from_tree(predicted) == template_from_tree(target),
        structure: predicted.shape() == target.shape(),
        correct_length: predicted.leaf_count() == target.leaf_count(),
    }
}

/// Log of the (lower) median of `exp(values)`.
pub fn log_potential_median(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    // exp is monotone, so the median commutes with it
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v[(v.len() - 1) / 2])
}

/// Distinct n-grams across all sentences over their total length.
pub fn diversity<S: AsRef<str>>(sentences: &[Vec<S>], n: usize) -> f64 {
    assert!(n >= 1);
    let total: usize = sentences.iter().map(Vec::len).sum();
    if total == 0 {
        return 0.0;
    }
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    for s in sentences {
        for g in s.windows(n) {
            seen.insert(g.iter().map(AsRef::as_ref).collect());
        }
    }
    seen.len() as f64 / total as f64
}

/// Turns a sentence into a tree for scoring.
pub trait Parser: Sync {
    fn parse(&self, words: &[String]) -> Option<ConstituencyTree>;
}

impl Parser for GrammarOracle {
    fn parse(&self, words: &[String]) -> Option<ConstituencyTree> {
        GrammarOracle::parse(self, words)
    }
}

/// Parses produced elsewhere, looked up by their words.
#[derive(Debug, Clone, Default)]
pub struct ParseTable(HashMap<Vec<String>, ConstituencyTree>);

impl ParseTable {
    pub fn new(trees: impl IntoIterator<Item = ConstituencyTree>) -> Self {
        ParseTable(trees.into_iter().map(|t| (t.words(), t)).collect())
    }
}

impl Parser for ParseTable {
    fn parse(&self, words: &[String]) -> Option<ConstituencyTree> {
        self.0.get(words).cloned()
    }
}

/// One generated sentence with everything needed to score it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOutput {
    pub words: Vec<String>,
    pub target: ConstituencyTree,
    /// `None` when the parser found no tree.
    pub parse: Option<ConstituencyTree>,
    pub log_potential: f64,
    pub log_prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    /// Percentages.
    pub correct_length: f64,
    pub exact_match: f64,
    pub structure_match: f64,
    /// Mean bracketing F1.
    pub f1: f64,
    /// Median log potential.
    #[serde(with = "ext_f64")]
    pub log_potential: f64,
    /// Mean log prior.
    #[serde(with = "ext_f64")]
    pub log_prior: f64,
    pub diversity_1: f64,
    pub diversity_2: f64,
    pub diversity_3: f64,
}

/// Aggregates per-sentence scores. Unparsed sentences score zero F1 and
/// match nothing, but still count for length.
pub fn report(items: &[ScoredOutput]) -> Result<EvalReport, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let n = items.len() as f64;
    let pct = |k: usize| 100.0 * k as f64 / n;
    let (mut length, mut exact, mut structure, mut f1) = (0, 0, 0, 0.0);
    for it in items {
        if it.words.len() == it.target.leaf_count() {
            length += 1;
        }
        if let Some(p) = &it.parse {
            let m = match_metrics(p, &it.target);
            exact += m.exact as usize;
            structure += m.structure as usize;
            f1 += bracket_f1(p, &it.target);
        }
    }
    let priors: f64 = items.iter().map(|i| i.log_prior).sum();
    let potentials: Vec<f64> = items.iter().map(|i| i.log_potential).collect();
    let sentences: Vec<Vec<String>> = items.iter().map(|i| i.words.clone()).collect();
    Ok(EvalReport {
        count: items.len(),
        correct_length: pct(length),
        exact_match: pct(exact),
        structure_match: pct(structure),
        f1: f1 / n,
        log_potential: log_potential_median(&potentials)?,
        log_prior: if priors == NEG_INF { NEG_INF } else { priors / n },
        diversity_1: diversity(&sentences, 1),
        diversity_2: diversity(&sentences, 2),
        diversity_3: diversity(&sentences, 3),
    })
}

/// Parses and scores each output for `template`, then aggregates.
pub fn evaluate_run(
    outputs: &[Vec<String>],
    template: &TreeTemplate,
    parser: &dyn Parser,
    potential: &dyn Potential,
    lm: &dyn LanguageModel,
) -> Result<EvalReport, MetricsError> {
    report(&score_outputs(outputs, template, parser, potential, lm)?)
}

pub fn score_outputs(
    outputs: &[Vec<String>],
    template: &TreeTemplate,
    parser: &dyn Parser,
    potential: &dyn Potential,
    lm: &dyn LanguageModel,
) -> Result<Vec<ScoredOutput>, MetricsError> {
    let tags = encode(template.tree());
    outputs
        .iter()
        .map(|w| {
            Ok(ScoredOutput {
                words: w.clone(),
                target: template.tree().clone(),
                parse: parser.parse(w),
                log_potential: potential.log_likelihood(w, &tags),
                log_prior: lm.string_logprob(w)?,
            })
        })
        .collect()
}
