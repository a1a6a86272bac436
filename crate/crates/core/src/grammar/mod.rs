//! Probabilistic context-free grammars: the synthetic world used for
//! oracle taggers, reference parsing and corpus generation.
//!
//! Rules are binary (`A -> B C`), unary (`A -> B`) or lexical (`A -> w`).
//! A symbol is a nonterminal iff it appears on some left-hand side; the
//! first left-hand side is the start symbol.

mod chart;
mod sample;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use thiserror::Error;

pub use chart::{Chart, Direction};
pub use sample::sample_tree;

use crate::tree::{ConstituencyTree, CHAIN_SEPARATOR, DUMMY_LABEL};

pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: binary rule with terminal child {symbol:?}")]
    TerminalInBinary { line: usize, symbol: String },
    #[error("rules for {lhs} sum to {total}")]
    BadSum { lhs: String, total: f64 },
    #[error("unary cycle through {0}")]
    UnaryCycle(String),
    #[error("reserved symbol {0:?}")]
    ReservedSymbol(String),
    #[error("grammar has no rules")]
    Empty,
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryRule {
    pub lhs: usize,
    pub left: usize,
    pub right: usize,
    pub prob: f64,
}

/// A path of unary rules, top first; a single symbol is the empty path.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub symbols: Vec<usize>,
    pub prob: f64,
}

impl Chain {
    pub fn top(&self) -> usize {
        self.symbols[0]
    }

    pub fn bottom(&self) -> usize {
        *self.symbols.last().unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct Pcfg {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
    start: usize,
    binary: Vec<BinaryRule>,
    binary_by_lhs: Vec<Vec<usize>>,
    unary: HashMap<(usize, usize), f64>,
    unary_by_lhs: Vec<Vec<(usize, f64)>>,
    lexical: HashMap<String, Vec<(usize, f64)>>,
    lexical_by_lhs: Vec<Vec<(String, f64)>>,
    lex_mass: Vec<f64>,
    chains: Vec<Chain>,
    /// Sum over unary paths from row to column, identity included.
    closure: Vec<f64>,
}

enum Rhs {
    One(String),
    Two(String, String),
}

fn reserved(s: &str) -> bool {
    s == DUMMY_LABEL || s.contains(CHAIN_SEPARATOR) || s.contains(['(', ')'])
}

impl Pcfg {
    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        let mut raw = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |reason: &str| GrammarError::Syntax {
                line: line_no,
                reason: reason.to_string(),
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() < 4 || toks[1] != "->" {
                return Err(syntax("expected \"LHS -> RHS1 [RHS2] prob\""));
            }
            let prob: f64 = toks[toks.len() - 1]
                .parse()
                .map_err(|_| syntax("probability is not a number"))?;
            if !(0.0..=1.0).contains(&prob) {
                return Err(syntax("probability outside [0, 1]"));
            }
            let rhs = match &toks[2..toks.len() - 1] {
                [a] => Rhs::One(a.to_string()),
                [a, b] => Rhs::Two(a.to_string(), b.to_string()),
                _ => return Err(syntax("right-hand side must have one or two symbols")),
            };
            for s in std::iter::once(toks[0]).chain(toks[2..toks.len() - 1].iter().copied()) {
                if reserved(s) {
                    return Err(GrammarError::ReservedSymbol(s.to_string()));
                }
            }
            raw.push((line_no, toks[0].to_string(), rhs, prob));
        }
        if raw.is_empty() {
            return Err(GrammarError::Empty);
        }

        let mut symbols = Vec::new();
        let mut index = HashMap::new();
        for (_, lhs, _, _) in &raw {
            if !index.contains_key(lhs) {
                index.insert(lhs.clone(), symbols.len());
                symbols.push(lhs.clone());
            }
        }
        let k = symbols.len();
        let mut g = Pcfg {
            symbols,
            index,
            start: 0,
            binary: Vec::new(),
            binary_by_lhs: vec![Vec::new(); k],
            unary: HashMap::new(),
            unary_by_lhs: vec![Vec::new(); k],
            lexical: HashMap::new(),
            lexical_by_lhs: vec![Vec::new(); k],
            lex_mass: vec![0.0; k],
            chains: Vec::new(),
            closure: vec![0.0; k * k],
        };
        let mut totals = vec![0.0; k];
        for (line, lhs, rhs, prob) in raw {
            let a = g.index[&lhs];
            totals[a] += prob;
            match rhs {
                Rhs::Two(b, c) => {
                    let child = |s: &str| {
                        g.index.get(s).copied().ok_or(GrammarError::TerminalInBinary {
                            line,
                            symbol: s.to_string(),
                        })
                    };
                    let rule = BinaryRule {
                        lhs: a,
                        left: child(&b)?,
                        right: child(&c)?,
                        prob,
                    };
                    g.binary_by_lhs[a].push(g.binary.len());
                    g.binary.push(rule);
                }
                Rhs::One(b) => match g.index.get(&b) {
                    Some(&b) => {
                        *g.unary.entry((a, b)).or_default() += prob;
                        g.unary_by_lhs[a].push((b, prob));
                    }
                    None => {
                        g.lexical.entry(b.clone()).or_default().push((a, prob));
                        g.lexical_by_lhs[a].push((b, prob));
                        g.lex_mass[a] += prob;
                    }
                },
            }
        }
        for (a, total) in totals.iter().enumerate() {
            if (total - 1.0).abs() > SUM_TOLERANCE {
                return Err(GrammarError::BadSum {
                    lhs: g.symbols[a].clone(),
                    total: *total,
                });
            }
        }
        g.build_chains()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GrammarError> {
        let text = fs::read_to_string(path).map_err(|e| GrammarError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    fn build_chains(&mut self) -> Result<(), GrammarError> {
        let k = self.symbols.len();
        let mut chains = Vec::new();
        for a in 0..k {
            let mut stack = vec![Chain {
                symbols: vec![a],
                prob: 1.0,
            }];
            while let Some(c) = stack.pop() {
                let last = c.bottom();
                for &(b, p) in &self.unary_by_lhs[last] {
                    if c.symbols.contains(&b) {
                        return Err(GrammarError::UnaryCycle(self.symbols[b].clone()));
                    }
                    let mut symbols = c.symbols.clone();
                    symbols.push(b);
                    stack.push(Chain {
                        symbols,
                        prob: c.prob * p,
                    });
                }
                chains.push(c);
            }
        }
        for c in &chains {
            self.closure[c.top() * k + c.bottom()] += c.prob;
        }
        self.chains = chains;
        Ok(())
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol_id(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn binary_rules(&self) -> &[BinaryRule] {
        &self.binary
    }

    pub fn binary_rules_for(&self, lhs: usize) -> impl Iterator<Item = &BinaryRule> {
        self.binary_by_lhs[lhs].iter().map(|&r| &self.binary[r])
    }

    pub fn unary_prob(&self, a: usize, b: usize) -> f64 {
        self.unary.get(&(a, b)).copied().unwrap_or(0.0)
    }

    pub fn unary_rules_for(&self, lhs: usize) -> &[(usize, f64)] {
        &self.unary_by_lhs[lhs]
    }

    pub fn lexical_rules_for(&self, lhs: usize) -> &[(String, f64)] {
        &self.lexical_by_lhs[lhs]
    }

    /// `(preterminal, prob)` pairs that emit `word`.
    pub fn emitters(&self, word: &str) -> &[(usize, f64)] {
        self.lexical.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Total lexical probability of each symbol (its mass on an unknown word).
    pub fn lexical_mass(&self, a: usize) -> f64 {
        self.lex_mass[a]
    }

    pub fn is_preterminal(&self, a: usize) -> bool {
        !self.lexical_by_lhs[a].is_empty()
    }

    pub fn closure(&self, top: usize, bottom: usize) -> f64 {
        self.closure[top * self.symbols.len() + bottom]
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    /// Terminal words, sorted.
    pub fn terminals(&self) -> Vec<String> {
        self.lexical
            .keys()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Probability of the labeled chain `labels` (top first) given its top.
    /// Zero for unknown labels or missing unary rules.
    pub fn chain_prob<S: AsRef<str>>(&self, labels: &[S]) -> Option<(Vec<usize>, f64)> {
        let ids = labels
            .iter()
            .map(|l| self.symbol_id(l.as_ref()))
            .collect::<Option<Vec<_>>>()?;
        let p = ids
            .windows(2)
            .map(|w| self.unary_prob(w[0], w[1]))
            .product();
        Some((ids, p))
    }

    /// `P(words)` summed over all derivations from the start symbol.
    pub fn sentence_prob<S: AsRef<str>>(&self, words: &[S]) -> f64 {
        if words.is_empty() {
            return 0.0;
        }
        let slots: Vec<Option<&str>> = words.iter().map(|w| Some(w.as_ref())).collect();
        Chart::inside(self, &slots).total()
    }

    /// `P(tree)` for a tree whose every node is a grammar event.
    pub fn tree_prob(&self, tree: &ConstituencyTree) -> f64 {
        if tree.label() != Some(self.symbols[self.start].as_str()) {
            return 0.0;
        }
        self.derivation_prob(tree)
    }

    fn derivation_prob(&self, tree: &ConstituencyTree) -> f64 {
        let Some(a) = tree.label().and_then(|l| self.symbol_id(l)) else {
            return 0.0;
        };
        match tree.children() {
            [ConstituencyTree::Leaf { word }] => self
                .emitters(word)
                .iter()
                .find(|(p, _)| *p == a)
                .map_or(0.0, |(_, pr)| *pr),
            [only] => match only.label().and_then(|l| self.symbol_id(l)) {
                Some(b) => self.unary_prob(a, b) * self.derivation_prob(only),
                None => 0.0,
            },
            [left, right] => {
                let (Some(b), Some(c)) = (
                    left.label().and_then(|l| self.symbol_id(l)),
                    right.label().and_then(|l| self.symbol_id(l)),
                ) else {
                    return 0.0;
                };
                let rule: f64 = self
                    .binary_rules_for(a)
                    .filter(|r| r.left == b && r.right == c)
                    .map(|r| r.prob)
                    .sum();
                rule * self.derivation_prob(left) * self.derivation_prob(right)
            }
            _ => 0.0,
        }
    }

    /// Most probable tree for `words`, with its probability.
    pub fn viterbi<S: AsRef<str>>(&self, words: &[S]) -> Option<(ConstituencyTree, f64)> {
        chart::viterbi(self, words)
    }

    /// Serializes back to the rule-per-line format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in 0..self.symbols.len() {
            let lhs = &self.symbols[a];
            for r in self.binary_rules_for(a) {
                out += &format!(
                    "{lhs} -> {} {} {}\n",
                    self.symbols[r.left], self.symbols[r.right], r.prob
                );
            }
            for (b, p) in &self.unary_by_lhs[a] {
                out += &format!("{lhs} -> {} {p}\n", self.symbols[*b]);
            }
            for (w, p) in &self.lexical_by_lhs[a] {
                out += &format!("{lhs} -> {w} {p}\n");
            }
        }
        out
    }
}

/// Small grammars for examples and tests.
pub mod toy {
    /// Prepositional-phrase attachment ambiguity.
    pub const PP: &str = "\
S -> NP VP 1.0
VP -> V NP 0.7
VP -> VP PP 0.3
NP -> D N 0.8
NP -> NP PP 0.2
PP -> P NP 1.0
D -> the 1.0
N -> dog 0.4
N -> man 0.4
N -> telescope 0.2
V -> saw 1.0
P -> with 1.0
";

    /// Unary chains and part-of-speech ambiguity over `people`, `fish`, `can`.
    pub const UNARY: &str = "\
S -> NP VP 1.0
NP -> NN 0.7
NP -> NN NN 0.3
VP -> VB NP 0.5
VP -> MD VB 0.2
VP -> VB 0.3
NN -> people 0.5
NN -> fish 0.4
NN -> can 0.1
VB -> fish 0.6
VB -> can 0.4
MD -> can 1.0
";
}

#[cfg(test)]
mod tests {
    use super::toy::*;
    use super::*;
    use crate::lm::words;

    #[test]
    fn parses_rules() {
        let g = Pcfg::parse(PP).unwrap();
        assert_eq!(g.symbols()[g.start()], "S");
        assert_eq!(g.binary_rules().len(), 6);
        assert_eq!(g.terminals(), words("dog man saw telescope the with"));
        assert!(g.is_preterminal(g.symbol_id("N").unwrap()));
        let round = Pcfg::parse(&g.to_text()).unwrap();
        assert_eq!(round.to_text(), g.to_text());
    }

    #[test]
    fn rejects_bad_grammars() {
        assert!(matches!(Pcfg::parse(""), Err(GrammarError::Empty)));
        assert!(matches!(
            Pcfg::parse("S -> a 0.5\n"),
            Err(GrammarError::BadSum { .. })
        ));
        assert!(matches!(
            Pcfg::parse("S -> a b 1.0\n"),
            Err(GrammarError::TerminalInBinary { line: 1, .. })
        ));
        assert!(matches!(
            Pcfg::parse("S -> A 1.0\nA -> S 0.5\nA -> a 0.5\n"),
            Err(GrammarError::UnaryCycle(_))
        ));
        assert!(matches!(
            Pcfg::parse("S => a 1.0\n"),
            Err(GrammarError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            Pcfg::parse("S -> a+b 1.0\n"),
            Err(GrammarError::ReservedSymbol(_))
        ));
    }

    #[test]
    fn unary_closure() {
        let g = Pcfg::parse(UNARY).unwrap();
        let np = g.symbol_id("NP").unwrap();
        let nn = g.symbol_id("NN").unwrap();
        assert!((g.closure(np, nn) - 0.7).abs() < 1e-15);
        assert_eq!(g.closure(np, np), 1.0);
        assert_eq!(g.closure(nn, np), 0.0);
    }

    #[test]
    fn pp_attachment_sentence_prob() {
        let g = Pcfg::parse(PP).unwrap();
        let s = words("the dog saw the man with the telescope");
        // two parses: VP attachment (0.3) and NP attachment (0.2), shared rest
        let np = 0.8 * 0.4;
        let np_tel = 0.8 * 0.2;
        let common = np * np * np_tel;
        let high = 0.3 * 0.7 * common;
        let low = 0.7 * 0.2 * common;
        assert!((g.sentence_prob(&s) - (high + low)).abs() < 1e-15);
        let (tree, p) = g.viterbi(&s).unwrap();
        assert!((p - high).abs() < 1e-15);
        assert!((g.tree_prob(&tree) - high).abs() < 1e-15);
        assert_eq!(
            tree.to_string(),
            "(S (NP (D the) (N dog)) (VP (VP (V saw) (NP (D the) (N man))) (PP (P with) (NP (D the) (N telescope)))))"
        );
    }

    #[test]
    fn unparseable() {
        let g = Pcfg::parse(PP).unwrap();
        assert_eq!(g.sentence_prob(&words("dog the")), 0.0);
        assert_eq!(g.sentence_prob(&words("the cat")), 0.0);
        assert!(g.viterbi(&words("dog the")).is_none());
    }

    #[test]
    fn viterbi_with_unaries() {
        let g = Pcfg::parse(UNARY).unwrap();
        let (tree, p) = g.viterbi(&words("people fish")).unwrap();
        assert_eq!(tree.to_string(), "(S (NP (NN people)) (VP (VB fish)))");
        assert!((p - 0.7 * 0.5 * 0.3 * 0.6).abs() < 1e-15);
    }
}
