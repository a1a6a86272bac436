use rand::Rng;

use super::Pcfg;
use crate::tree::ConstituencyTree;

/// Draws a derivation from the start symbol. Returns `None` once the tree
/// would exceed `max_words` words.
pub fn sample_tree<R: Rng + ?Sized>(
    g: &Pcfg,
    rng: &mut R,
    max_words: usize,
) -> Option<ConstituencyTree> {
    let mut words = 0;
    expand(g, g.start(), rng, &mut words, max_words)
}

fn expand<R: Rng + ?Sized>(
    g: &Pcfg,
    a: usize,
    rng: &mut R,
    words: &mut usize,
    max_words: usize,
) -> Option<ConstituencyTree> {
    let label = g.symbols()[a].clone();
    let mut u: f64 = rng.gen();
    for r in g.binary_rules_for(a) {
        if u < r.prob {
            let left = expand(g, r.left, rng, words, max_words)?;
            let right = expand(g, r.right, rng, words, max_words)?;
            return Some(ConstituencyTree::internal(label, vec![left, right]));
        }
        u -= r.prob;
    }
    for &(b, p) in g.unary_rules_for(a) {
        if u < p {
            let child = expand(g, b, rng, words, max_words)?;
            return Some(ConstituencyTree::internal(label, vec![child]));
        }
        u -= p;
    }
    let lexical = g.lexical_rules_for(a);
    let mut pick = lexical.last();
    for entry in lexical {
        if u < entry.1 {
            pick = Some(entry);
            break;
        }
        u -= entry.1;
    }
    // rounding leftovers fall on the last rule of any kind
    let (word, _) = match pick {
        Some(p) => p,
        None => {
            let r = g.binary_rules_for(a).last().copied();
            return match (r, g.unary_rules_for(a).last()) {
                (_, Some(&(b, _))) => {
                    let child = expand(g, b, rng, words, max_words)?;
                    Some(ConstituencyTree::internal(label, vec![child]))
                }
                (Some(r), None) => {
                    let left = expand(g, r.left, rng, words, max_words)?;
                    let right = expand(g, r.right, rng, words, max_words)?;
                    Some(ConstituencyTree::internal(label, vec![left, right]))
                }
                (None, None) => None,
            };
        }
    };
    *words += 1;
    if *words > max_words {
        return None;
    }
    Some(ConstituencyTree::preterminal(label, word.clone()))
}
