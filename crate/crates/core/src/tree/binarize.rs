use std::fmt;

use super::{ConstituencyTree, TreeError, CHAIN_SEPARATOR, DUMMY_LABEL};

/// A binarized constituency tree.
///
/// Non-preterminal nodes have exactly two children. Unary chains are
/// collapsed into a single node whose label joins the chain with `+`
/// (a chain ending in a preterminal becomes a preterminal), and nodes
/// introduced to split wide constituents carry [`DUMMY_LABEL`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryTree(ConstituencyTree);

impl BinaryTree {
    pub fn root(&self) -> &ConstituencyTree {
        &self.0
    }

    /// Wraps a tree already in binary form. Structure is checked, label
    /// conventions are not.
    pub fn from_binary(tree: ConstituencyTree) -> Option<BinaryTree> {
        fn ok(t: &ConstituencyTree) -> bool {
            match t {
                ConstituencyTree::Leaf { .. } => true,
                ConstituencyTree::Internal { children, .. } => {
                    t.is_preterminal()
                        || (children.len() == 2
                            && children
                                .iter()
                                .all(|c| !matches!(c, ConstituencyTree::Leaf { .. }) && ok(c)))
                }
            }
        }
        ok(&tree).then_some(BinaryTree(tree))
    }

    /// Number of nodes once preterminals are fused with their words.
    pub fn fused_node_count(&self) -> usize {
        fn go(t: &ConstituencyTree) -> usize {
            if t.is_preterminal() {
                1
            } else {
                1 + t.children().iter().map(go).sum::<usize>()
            }
        }
        go(&self.0)
    }
}

impl fmt::Display for BinaryTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn join(upper: &str, lower: &str) -> String {
    format!("{upper}{CHAIN_SEPARATOR}{lower}")
}

/// Right-branching binarization with dummy nodes and collapsed unaries.
pub fn binarize(tree: &ConstituencyTree) -> BinaryTree {
    fn go(t: &ConstituencyTree) -> ConstituencyTree {
        let ConstituencyTree::Internal { label, children } = t else {
            return t.clone();
        };
        if t.is_preterminal() {
            return t.clone();
        }
        match children.as_slice() {
            [only] => match go(only) {
                ConstituencyTree::Internal {
                    label: inner,
                    children,
                } => ConstituencyTree::Internal {
                    label: join(label, &inner),
                    children,
                },
                leaf => leaf,
            },
            [first, rest @ ..] => ConstituencyTree::Internal {
                label: label.clone(),
                children: vec![go(first), right_spine(rest)],
            },
            [] => t.clone(),
        }
    }

    fn right_spine(rest: &[ConstituencyTree]) -> ConstituencyTree {
        match rest {
            [only] => go(only),
            [first, tail @ ..] => ConstituencyTree::Internal {
                label: DUMMY_LABEL.to_string(),
                children: vec![go(first), right_spine(tail)],
            },
            [] => unreachable!("spine of an empty child list"),
        }
    }

    BinaryTree(go(tree))
}

/// Inverse of [`binarize`]: splices out dummy nodes and expands chains.
pub fn debinarize(btree: &BinaryTree) -> Result<ConstituencyTree, TreeError> {
    fn go(t: &ConstituencyTree, out: &mut Vec<ConstituencyTree>) {
        match t {
            ConstituencyTree::Leaf { .. } => out.push(t.clone()),
            ConstituencyTree::Internal { label, children } => {
                let mut kids = Vec::with_capacity(children.len());
                for c in children {
                    go(c, &mut kids);
                }
                if label == DUMMY_LABEL {
                    out.append(&mut kids);
                    return;
                }
                let mut parts = label.rsplit(CHAIN_SEPARATOR);
                let bottom = parts.next().unwrap_or_default();
                let mut node = ConstituencyTree::internal(bottom, kids);
                for upper in parts {
                    node = ConstituencyTree::internal(upper, vec![node]);
                }
                out.push(node);
            }
        }
    }

    if btree.0.label() == Some(DUMMY_LABEL) {
        return Err(TreeError::InvalidDummyPlacement);
    }
    let mut out = Vec::with_capacity(1);
    go(&btree.0, &mut out);
    debug_assert_eq!(out.len(), 1);
    Ok(out.pop().expect("root survives debinarization"))
}
