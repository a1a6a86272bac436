use super::Pcfg;
use crate::tree::ConstituencyTree;

/// Which side of its binary parent a constituent sits on. The root counts
/// as a left child.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

/// Inside (and optionally outside) sums over a sentence in which some
/// positions may be unknown words.
///
/// `bottom` holds spans whose root is a given symbol before any unary
/// rewrite above it; `top` closes those over unary chains. Outside sums are
/// kept for top-level constituents, split by the side they attach on.
pub struct Chart<'g> {
    g: &'g Pcfg,
    n: usize,
    k: usize,
    lex: Vec<f64>,
    bottom: Vec<f64>,
    top: Vec<f64>,
    outside: Option<[Vec<f64>; 2]>,
}

impl<'g> Chart<'g> {
    /// `None` slots are wildcards summing over every word.
    pub fn inside(g: &'g Pcfg, slots: &[Option<&str>]) -> Self {
        let n = slots.len();
        let k = g.symbols().len();
        let mut lex = vec![0.0; n * k];
        for (i, slot) in slots.iter().enumerate() {
            match slot {
                Some(w) => {
                    for &(p, pr) in g.emitters(w) {
                        lex[i * k + p] += pr;
                    }
                }
                None => {
                    for a in 0..k {
                        lex[i * k + a] = g.lexical_mass(a);
                    }
                }
            }
        }
        let cells = (n + 1) * (n + 1) * k;
        let mut chart = Chart {
            g,
            n,
            k,
            lex,
            bottom: vec![0.0; cells],
            top: vec![0.0; cells],
            outside: None,
        };
        for len in 1..=n {
            for i in 0..=n - len {
                let j = i + len;
                let at = chart.cell(i, j);
                if len == 1 {
                    for a in 0..k {
                        chart.bottom[at + a] = chart.lex[i * k + a];
                    }
                } else {
                    for r in g.binary_rules() {
                        let mut s = 0.0;
                        for m in i + 1..j {
                            s += chart.top[chart.cell(i, m) + r.left]
                                * chart.top[chart.cell(m, j) + r.right];
                        }
                        chart.bottom[at + r.lhs] += r.prob * s;
                    }
                }
                for c in g.chains() {
                    let b = chart.bottom[at + c.bottom()];
                    if b > 0.0 {
                        chart.top[at + c.top()] += c.prob * b;
                    }
                }
            }
        }
        chart
    }

    fn cell(&self, i: usize, j: usize) -> usize {
        (i * (self.n + 1) + j) * self.k
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Probability of the sentence (wildcards summed out).
    pub fn total(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.top[self.cell(0, self.n) + self.g.start()]
    }

    pub fn top(&self, i: usize, j: usize, a: usize) -> f64 {
        self.top[self.cell(i, j) + a]
    }

    pub fn bottom(&self, i: usize, j: usize, a: usize) -> f64 {
        self.bottom[self.cell(i, j) + a]
    }

    /// Fills the outside sums; idempotent.
    pub fn compute_outside(&mut self) {
        if self.outside.is_some() || self.n == 0 {
            return;
        }
        let (n, k, g) = (self.n, self.k, self.g);
        let cells = self.bottom.len();
        let mut left = vec![0.0; cells];
        let mut right = vec![0.0; cells];
        left[self.cell(0, n) + g.start()] = 1.0;
        let mut out_bottom = vec![0.0; k];
        for len in (2..=n).rev() {
            for i in 0..=n - len {
                let j = i + len;
                let at = self.cell(i, j);
                out_bottom.iter_mut().for_each(|x| *x = 0.0);
                for c in g.chains() {
                    let o = left[at + c.top()] + right[at + c.top()];
                    if o > 0.0 {
                        out_bottom[c.bottom()] += o * c.prob;
                    }
                }
                for r in g.binary_rules() {
                    let o = out_bottom[r.lhs] * r.prob;
                    if o == 0.0 {
                        continue;
                    }
                    for m in i + 1..j {
                        let lc = self.cell(i, m);
                        let rc = self.cell(m, j);
                        left[lc + r.left] += o * self.top[rc + r.right];
                        right[rc + r.right] += o * self.top[lc + r.left];
                    }
                }
            }
        }
        self.outside = Some([left, right]);
    }

    fn out(&self, dir: Direction, i: usize, j: usize, a: usize) -> f64 {
        let o = self.outside.as_ref().expect("outside sums not computed");
        o[dir as usize][self.cell(i, j) + a]
    }

    /// Joint mass of the sentence and the event that word `i` is a
    /// `dir`-side constituent whose unary chain above the preterminal is
    /// `chain` (top first).
    pub fn leaf_mass<S: AsRef<str>>(&self, i: usize, dir: Direction, chain: &[S]) -> f64 {
        let g = self.g;
        let mut total = 0.0;
        for p in 0..self.k {
            let lex = self.lex[i * self.k + p];
            if lex == 0.0 {
                continue;
            }
            let mut labels: Vec<&str> = chain.iter().map(AsRef::as_ref).collect();
            labels.push(&g.symbols()[p]);
            let Some((ids, prob)) = g.chain_prob(&labels) else {
                continue;
            };
            total += self.out(dir, i, i + 1, ids[0]) * prob * lex;
        }
        total
    }

    /// Joint mass of the sentence and the event that the binary node split
    /// between words `split - 1` and `split` is a `dir`-side constituent
    /// labeled by the unary chain `chain` (top first, binary node last).
    pub fn internal_mass<S: AsRef<str>>(&self, split: usize, dir: Direction, chain: &[S]) -> f64 {
        let g = self.g;
        let Some((ids, prob)) = g.chain_prob(chain) else {
            return 0.0;
        };
        if prob == 0.0 || ids.is_empty() {
            return 0.0;
        }
        let (top, bin) = (ids[0], *ids.last().unwrap());
        let mut total = 0.0;
        for i in 0..split {
            for j in split + 1..=self.n {
                let o = self.out(dir, i, j, top);
                if o == 0.0 {
                    continue;
                }
                let inner: f64 = g
                    .binary_rules_for(bin)
                    .map(|r| r.prob * self.top(i, split, r.left) * self.top(split, j, r.right))
                    .sum();
                total += o * inner;
            }
        }
        total * prob
    }
}

#[derive(Clone, Copy)]
enum Back {
    None,
    Lex,
    Split { rule: usize, mid: usize },
    Chain(usize),
}

pub(super) fn viterbi<S: AsRef<str>>(g: &Pcfg, words: &[S]) -> Option<(ConstituencyTree, f64)> {
    let n = words.len();
    if n == 0 {
        return None;
    }
    let k = g.symbols().len();
    let cell = |i: usize, j: usize| (i * (n + 1) + j) * k;
    let cells = (n + 1) * (n + 1) * k;
    let mut bottom = vec![0.0; cells];
    let mut top = vec![0.0; cells];
    let mut bottom_back = vec![Back::None; cells];
    let mut top_back = vec![Back::None; cells];
    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            let at = cell(i, j);
            if len == 1 {
                for &(p, pr) in g.emitters(words[i].as_ref()) {
                    if pr > bottom[at + p] {
                        bottom[at + p] = pr;
                        bottom_back[at + p] = Back::Lex;
                    }
                }
            } else {
                for (ri, r) in g.binary_rules().iter().enumerate() {
                    for m in i + 1..j {
                        let s = r.prob * top[cell(i, m) + r.left] * top[cell(m, j) + r.right];
                        if s > bottom[at + r.lhs] {
                            bottom[at + r.lhs] = s;
                            bottom_back[at + r.lhs] = Back::Split { rule: ri, mid: m };
                        }
                    }
                }
            }
            for (ci, c) in g.chains().iter().enumerate() {
                let s = c.prob * bottom[at + c.bottom()];
                if s > top[at + c.top()] {
                    top[at + c.top()] = s;
                    top_back[at + c.top()] = Back::Chain(ci);
                }
            }
        }
    }
    let best = top[cell(0, n) + g.start()];
    if best <= 0.0 {
        return None;
    }

    struct Ctx<'a, S> {
        g: &'a Pcfg,
        words: &'a [S],
        bottom_back: &'a [Back],
        top_back: &'a [Back],
        n: usize,
        k: usize,
    }
    impl<S: AsRef<str>> Ctx<'_, S> {
        fn cell(&self, i: usize, j: usize) -> usize {
            (i * (self.n + 1) + j) * self.k
        }
        fn top(&self, i: usize, j: usize, a: usize) -> ConstituencyTree {
            let Back::Chain(ci) = self.top_back[self.cell(i, j) + a] else {
                unreachable!("positive top cell has a chain");
            };
            let chain = &self.g.chains()[ci];
            let mut node = self.bottom(i, j, chain.bottom());
            for &s in chain.symbols.iter().rev().skip(1) {
                node = ConstituencyTree::internal(self.g.symbols()[s].clone(), vec![node]);
            }
            node
        }
        fn bottom(&self, i: usize, j: usize, a: usize) -> ConstituencyTree {
            let label = self.g.symbols()[a].clone();
            match self.bottom_back[self.cell(i, j) + a] {
                Back::Lex => ConstituencyTree::preterminal(label, self.words[i].as_ref()),
                Back::Split { rule, mid } => {
                    let r = self.g.binary_rules()[rule];
                    ConstituencyTree::internal(
                        label,
                        vec![self.top(i, mid, r.left), self.top(mid, j, r.right)],
                    )
                }
                _ => unreachable!("positive bottom cell has a backpointer"),
            }
        }
    }
    let ctx = Ctx {
        g,
        words,
        bottom_back: &bottom_back,
        top_back: &top_back,
        n,
        k,
    };
    Some((ctx.top(0, n, g.start()), best))
}
