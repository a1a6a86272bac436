//! Random constituency trees for property tests and fixtures.

use rand::Rng;

use super::ConstituencyTree;

const PHRASES: &[&str] = &["S", "NP", "VP", "PP", "ADJP", "ADVP", "SBAR", "FRAG"];
const TAGS: &[&str] = &["DT", "NN", "NNS", "VBZ", "VBD", "IN", "JJ", "RB", "PRP", "CC"];
const WORDS: &[&str] = &[
    "the", "a", "dog", "cats", "runs", "saw", "in", "big", "quickly", "she", "and", "park",
];

/// Generates a valid tree with between 1 and `max_leaves` words.
///
/// Node arities range over 1..=4, so unary chains and wide constituents
/// both occur.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, max_leaves: usize) -> ConstituencyTree {
    assert!(max_leaves >= 1);
    let leaves = rng.gen_range(1..=max_leaves);
    let label = PHRASES[rng.gen_range(0..PHRASES.len())];
    build(rng, leaves, label, 0)
}

fn build<R: Rng + ?Sized>(
    rng: &mut R,
    leaves: usize,
    label: &str,
    depth: usize,
) -> ConstituencyTree {
    if leaves == 1 {
        // occasionally wrap the preterminal in a short unary chain
        let pre = ConstituencyTree::preterminal(
            TAGS[rng.gen_range(0..TAGS.len())],
            WORDS[rng.gen_range(0..WORDS.len())],
        );
        return if depth == 0 || rng.gen_bool(0.3) {
            ConstituencyTree::internal(label, vec![pre])
        } else {
            pre
        };
    }
    if depth < 6 && rng.gen_bool(0.1) {
        let inner = PHRASES[rng.gen_range(0..PHRASES.len())];
        return ConstituencyTree::internal(label, vec![build(rng, leaves, inner, depth + 1)]);
    }
    let arity = rng.gen_range(2..=4.min(leaves));
    // split `leaves` into `arity` positive parts
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, leaves - 1, arity - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    let mut children = Vec::with_capacity(arity);
    let mut prev = 0;
    for cut in cuts.into_iter().chain(std::iter::once(leaves)) {
        let size = cut - prev;
        prev = cut;
        let child_label = PHRASES[rng.gen_range(0..PHRASES.len())];
        children.push(if size == 1 && rng.gen_bool(0.6) {
            ConstituencyTree::preterminal(
                TAGS[rng.gen_range(0..TAGS.len())],
                WORDS[rng.gen_range(0..WORDS.len())],
            )
        } else {
            build(rng, size, child_label, depth + 1)
        });
    }
    ConstituencyTree::internal(label, children)
}
