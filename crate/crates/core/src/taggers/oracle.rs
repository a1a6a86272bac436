use std::collections::BTreeSet;
use std::sync::Arc;

use super::{slot_shaper, Potential, SlotShaper, SlotTag, TagDistributionPair};
use crate::grammar::{Chart, Direction, Pcfg};
use crate::logspace::{ln, NEG_INF};
use crate::tetratag::{decode_skeleton, Skeleton, TagKind, TagSequence, Tetratag};
use crate::tree::{ConstituencyTree, CHAIN_SEPARATOR};

/// Exact tag probabilities under a PCFG.
///
/// As a potential it gives `P(tree(t) | words)`, summing over preterminal
/// assignments. As a shaper it gives, for each new word, the marginal
/// probabilities of its two target tags given the prefix, with the rest of
/// the sentence (up to the target length) summed out.
#[derive(Debug, Clone)]
pub struct GrammarOracle {
    grammar: Arc<Pcfg>,
}

fn direction(kind: TagKind) -> Direction {
    match kind {
        TagKind::LeftLeaf | TagKind::LeftInternal => Direction::Left,
        TagKind::RightLeaf | TagKind::RightInternal => Direction::Right,
    }
}

impl GrammarOracle {
    pub fn new(grammar: Arc<Pcfg>) -> Self {
        GrammarOracle { grammar }
    }

    pub fn grammar(&self) -> &Arc<Pcfg> {
        &self.grammar
    }

    /// `P(tree(tags), words)`.
    pub fn joint_prob(&self, words: &[String], tags: &[Tetratag]) -> f64 {
        let Ok(skeleton) = decode_skeleton(tags) else {
            return 0.0;
        };
        self.skeleton_inside(&skeleton, words)[self.grammar.start()]
    }

    fn skeleton_inside(&self, s: &Skeleton, words: &[String]) -> Vec<f64> {
        let g = &*self.grammar;
        let mut v = vec![0.0; g.symbols().len()];
        match s {
            Skeleton::Leaf { index, chain } => {
                for &(p, lex) in g.emitters(&words[*index]) {
                    let mut labels: Vec<&str> = chain.iter().map(String::as_str).collect();
                    labels.push(&g.symbols()[p]);
                    if let Some((ids, prob)) = g.chain_prob(&labels) {
                        v[ids[0]] += prob * lex;
                    }
                }
            }
            Skeleton::Node {
                labels: Some(labels),
                left,
                right,
            } => {
                let Some((ids, prob)) = g.chain_prob(labels) else {
                    return v;
                };
                if prob == 0.0 {
                    return v;
                }
                let vl = self.skeleton_inside(left, words);
                let vr = self.skeleton_inside(right, words);
                let inner: f64 = g
                    .binary_rules_for(*ids.last().unwrap())
                    .map(|r| r.prob * vl[r.left] * vr[r.right])
                    .sum();
                v[ids[0]] += prob * inner;
            }
            // dummy nodes never occur in grammar derivations
            Skeleton::Node { labels: None, .. } => {}
        }
        v
    }

    fn prefix_chart(&self, prefix: &[String], word_count: usize) -> Chart<'_> {
        let slots: Vec<Option<&str>> = (0..word_count)
            .map(|i| prefix.get(i).map(String::as_str))
            .collect();
        let mut chart = Chart::inside(&self.grammar, &slots);
        chart.compute_outside();
        chart
    }

    fn leaf_prob(chart: &Chart, i: usize, tag: &Tetratag) -> f64 {
        chart.leaf_mass(i, direction(tag.kind), &tag.chain())
    }

    fn internal_prob(chart: &Chart, split: usize, tag: &Tetratag) -> f64 {
        if tag.label.is_none() {
            return 0.0;
        }
        chart.internal_mass(split, direction(tag.kind), &tag.chain())
    }

    /// Marginal probabilities of the last prefix word's two target tags.
    pub fn prefix_slot_probs(&self, prefix: &[String], target: &TagSequence) -> (f64, f64) {
        let (n, len) = (prefix.len(), target.word_count());
        if n == 0 || n > len {
            return (0.0, 0.0);
        }
        let chart = self.prefix_chart(prefix, len);
        let z = chart.total();
        if z == 0.0 {
            return (0.0, 0.0);
        }
        let odd = Self::leaf_prob(&chart, n - 1, target.leaf_tag(n - 1)) / z;
        let even = match target.internal_tag(n - 1) {
            Some(t) => Self::internal_prob(&chart, n, t) / z,
            None => 1.0,
        };
        (odd, even)
    }

    /// Full slot distributions of the last prefix word, for sentences of
    /// `word_count` words.
    pub fn prefix_distributions(&self, prefix: &[String], word_count: usize) -> TagDistributionPair {
        let n = prefix.len();
        assert!(n >= 1 && n <= word_count, "prefix length out of range");
        let g = &*self.grammar;
        let chart = self.prefix_chart(prefix, word_count);
        let z = chart.total();
        let join = |ids: &[usize]| {
            ids.iter()
                .map(|&s| g.symbols()[s].as_str())
                .collect::<Vec<_>>()
                .join(&CHAIN_SEPARATOR.to_string())
        };
        let leaf_labels: BTreeSet<Option<String>> = g
            .chains()
            .iter()
            .filter(|c| g.is_preterminal(c.bottom()))
            .map(|c| {
                let above = &c.symbols[..c.symbols.len() - 1];
                (!above.is_empty()).then(|| join(above))
            })
            .collect();
        let mut odd = Vec::new();
        for label in &leaf_labels {
            for kind in [TagKind::LeftLeaf, TagKind::RightLeaf] {
                let tag = Tetratag::new(kind, label.as_deref());
                let p = Self::leaf_prob(&chart, n - 1, &tag) / z;
                if p > 0.0 {
                    odd.push((tag.to_string(), p));
                }
            }
        }
        let even = if n == word_count {
            vec![(SlotTag::Dummy.to_string(), 1.0)]
        } else {
            let internal_labels: BTreeSet<String> = g
                .chains()
                .iter()
                .filter(|c| g.binary_rules_for(c.bottom()).next().is_some())
                .map(|c| join(&c.symbols))
                .collect();
            let mut even = Vec::new();
            for label in &internal_labels {
                for kind in [TagKind::LeftInternal, TagKind::RightInternal] {
                    let tag = Tetratag::new(kind, Some(label));
                    let p = Self::internal_prob(&chart, n, &tag) / z;
                    if p > 0.0 {
                        even.push((tag.to_string(), p));
                    }
                }
            }
            even
        };
        TagDistributionPair { odd, even }
    }

    /// Most probable parse.
    pub fn parse(&self, words: &[String]) -> Option<ConstituencyTree> {
        self.grammar.viterbi(words).map(|(t, _)| t)
    }
}

impl Potential for GrammarOracle {
    fn log_likelihood(&self, words: &[String], target: &TagSequence) -> f64 {
        if words.len() != target.word_count() {
            return NEG_INF;
        }
        let joint = self.joint_prob(words, target.tags());
        if joint == 0.0 {
            return NEG_INF;
        }
        let total = self.grammar.sentence_prob(words);
        ln(joint / total).min(0.0)
    }
}

impl SlotShaper for GrammarOracle {
    fn log_step(&self, prefix: &[String], target: &TagSequence) -> f64 {
        let (odd, even) = self.prefix_slot_probs(prefix, target);
        ln(odd) + ln(even)
    }
}

slot_shaper!(GrammarOracle);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::toy::{PP, UNARY};
    use crate::lm::words;
    use crate::taggers::{likelihood, shaping_prefix_score, Shaper};
    use crate::tetratag::encode;
    use crate::tree::parse_bracketed;

    fn oracle(text: &str) -> GrammarOracle {
        GrammarOracle::new(Arc::new(Pcfg::parse(text).unwrap()))
    }

    const HIGH: &str = "(S (NP (D the) (N dog)) (VP (VP (V saw) (NP (D the) (N man))) (PP (P with) (NP (D the) (N telescope)))))";
    const LOW: &str = "(S (NP (D the) (N dog)) (VP (V saw) (NP (NP (D the) (N man)) (PP (P with) (NP (D the) (N telescope))))))";

    #[test]
    fn pp_attachment_potential() {
        let o = oracle(PP);
        let w = words("the dog saw the man with the telescope");
        let high = encode(&parse_bracketed(HIGH).unwrap());
        let low = encode(&parse_bracketed(LOW).unwrap());
        assert!((likelihood(&o, &w, &high) - 0.6).abs() < 1e-12);
        assert!((likelihood(&o, &w, &low) - 0.4).abs() < 1e-12);
        assert_eq!(likelihood(&o, &w[..7], &high), 0.0);
    }

    #[test]
    fn unambiguous_sentence() {
        let o = oracle(PP);
        let t = encode(&parse_bracketed("(S (NP (D the) (N dog)) (VP (V saw) (NP (D the) (N man))))").unwrap());
        assert!((likelihood(&o, &words("the dog saw the man"), &t) - 1.0).abs() < 1e-12);
        assert!((likelihood(&o, &words("the man saw the dog"), &t) - 1.0).abs() < 1e-12);
        assert_eq!(likelihood(&o, &words("dog the saw the man"), &t), 0.0);
    }

    #[test]
    fn preterminals_are_summed_out() {
        // "can fish": NP (NN can) + VP (VB fish) versus nothing else of that shape
        let o = oracle(UNARY);
        let t = encode(&parse_bracketed("(S (NP (NN x)) (VP (VB y)))").unwrap());
        let w = words("can fish");
        let total = o.grammar().sentence_prob(&w);
        let joint = o.joint_prob(&w, t.tags());
        assert!((joint - 0.7 * 0.1 * 0.3 * 0.6).abs() < 1e-15);
        assert!((likelihood(&o, &w, &t) - joint / total).abs() < 1e-15);
    }

    #[test]
    fn prefix_distributions_are_normalized() {
        let o = oracle(PP);
        let w = words("the dog saw the man with the telescope");
        for n in 1..=w.len() {
            let d = o.prefix_distributions(&w[..n], w.len());
            let so: f64 = d.odd.iter().map(|x| x.1).sum();
            let se: f64 = d.even.iter().map(|x| x.1).sum();
            assert!((so - 1.0).abs() < 1e-12, "odd {n}: {so}");
            assert!((se - 1.0).abs() < 1e-12, "even {n}: {se}");
        }
        let o = oracle(UNARY);
        for n in 1..=3 {
            let d = o.prefix_distributions(&words("people can fish")[..n], 3);
            let so: f64 = d.odd.iter().map(|x| x.1).sum();
            assert!((so - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_prefix_slots_match_exact_posterior_marginals() {
        let o = oracle(PP);
        let w = words("the dog saw the man with the telescope");
        let high = encode(&parse_bracketed(HIGH).unwrap());
        // split after "man": VP in the high parse
        let (_, even) = o.prefix_slot_probs(&w[..5], &high);
        assert!(even > 0.0 && even < 1.0);
        let (odd, even) = o.prefix_slot_probs(&w, &high);
        assert!((odd - 1.0).abs() < 1e-12);
        assert_eq!(even, 1.0);
    }

    #[test]
    fn shaper_telescopes_and_is_admissible() {
        let o = oracle(PP);
        let w = words("the dog saw the man with the telescope");
        let t = encode(&parse_bracketed(HIGH).unwrap());
        assert_eq!(shaping_prefix_score(&o, &[], &t), 1.0);
        let mut prev = o.log_empty(&t);
        for n in 1..=w.len() {
            let direct = o.log_score(&w[..n], &t);
            let ext = o.log_extend(&w[..n], prev, &t);
            assert!((direct - ext).abs() < 1e-12);
            assert!(direct > NEG_INF);
            prev = ext;
        }
        assert_eq!(o.log_score(&words("dog"), &t), NEG_INF);
    }
}
