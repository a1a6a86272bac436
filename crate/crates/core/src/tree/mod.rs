//! Constituency trees: the data model, bracketed text I/O, binarization,
//! templates and summary statistics.

mod binarize;
mod bracketed;
pub mod random;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binarize::{binarize, debinarize, BinaryTree};
pub use bracketed::{parse_bracketed, parse_treebank, serialize_bracketed};

/// Word used for every leaf of a [`TreeTemplate`].
pub const PLACEHOLDER: &str = "?";
/// Label given to nodes introduced by binarization.
pub const DUMMY_LABEL: &str = "∅";
/// Separator joining the labels of a collapsed unary chain.
pub const CHAIN_SEPARATOR: char = '+';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("unbalanced parentheses at byte {offset}")]
    UnbalancedParens { offset: usize },
    #[error("empty label at byte {offset}")]
    EmptyLabel { offset: usize },
    #[error("empty tree at byte {offset}")]
    EmptyTree { offset: usize },
    #[error("unexpected token {token:?} at byte {offset}")]
    UnexpectedToken { offset: usize, token: String },
    #[error("word {word:?} at byte {offset} must be the only child of a preterminal")]
    MisplacedLeaf { offset: usize, word: String },
    #[error("label {label:?} at byte {offset} uses a reserved marker")]
    ReservedLabel { offset: usize, label: String },
    #[error("dummy node cannot be the root")]
    InvalidDummyPlacement,
}

/// A labeled ordered tree over words.
///
/// Every `Internal` node has at least one child, and a `Leaf` is always the
/// single child of a preterminal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ConstituencyTree {
    Internal {
        label: String,
        children: Vec<ConstituencyTree>,
    },
    Leaf {
        word: String,
    },
}

impl ConstituencyTree {
    pub fn internal(label: impl Into<String>, children: Vec<ConstituencyTree>) -> Self {
        ConstituencyTree::Internal {
            label: label.into(),
            children,
        }
    }

    pub fn leaf(word: impl Into<String>) -> Self {
        ConstituencyTree::Leaf { word: word.into() }
    }

    /// A preterminal node `(label word)`.
    pub fn preterminal(label: impl Into<String>, word: impl Into<String>) -> Self {
        Self::internal(label, vec![Self::leaf(word)])
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            ConstituencyTree::Internal { label, .. } => Some(label),
            ConstituencyTree::Leaf { .. } => None,
        }
    }

    pub fn children(&self) -> &[ConstituencyTree] {
        match self {
            ConstituencyTree::Internal { children, .. } => children,
            ConstituencyTree::Leaf { .. } => &[],
        }
    }

    pub fn is_preterminal(&self) -> bool {
        matches!(self, ConstituencyTree::Internal { children, .. }
            if children.len() == 1 && matches!(children[0], ConstituencyTree::Leaf { .. }))
    }

    /// The words at the leaves, left to right.
    pub fn words(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit_preterminals(&mut |_, word| out.push(word.to_string()));
        out
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ConstituencyTree::Leaf { .. } => 1,
            ConstituencyTree::Internal { children, .. } => {
                children.iter().map(|c| c.leaf_count()).sum()
            }
        }
    }

    fn visit_preterminals<'a>(&'a self, f: &mut impl FnMut(&'a str, &'a str)) {
        if let ConstituencyTree::Internal { label, children } = self {
            if let [ConstituencyTree::Leaf { word }] = children.as_slice() {
                f(label, word);
            } else {
                for child in children {
                    child.visit_preterminals(f);
                }
            }
        }
    }

    /// Copy of the tree with the leaf words replaced, left to right.
    ///
    /// Panics if `words` does not hold exactly one word per leaf.
    pub fn with_words<S: AsRef<str>>(&self, words: &[S]) -> ConstituencyTree {
        assert_eq!(words.len(), self.leaf_count(), "one word per leaf");
        let mut iter = words.iter();
        self.map_leaves(&mut |_| iter.next().unwrap().as_ref().to_string())
    }

    fn map_leaves(&self, f: &mut impl FnMut(&str) -> String) -> ConstituencyTree {
        match self {
            ConstituencyTree::Leaf { word } => ConstituencyTree::Leaf { word: f(word) },
            ConstituencyTree::Internal { label, children } => ConstituencyTree::Internal {
                label: label.clone(),
                children: children.iter().map(|c| c.map_leaves(f)).collect(),
            },
        }
    }

    /// Same shape with every label and word erased.
    pub fn shape(&self) -> ConstituencyTree {
        match self {
            ConstituencyTree::Leaf { .. } => ConstituencyTree::leaf(PLACEHOLDER),
            ConstituencyTree::Internal { children, .. } => ConstituencyTree::Internal {
                label: String::new(),
                children: children.iter().map(|c| c.shape()).collect(),
            },
        }
    }
}

impl fmt::Display for ConstituencyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstituencyTree::Leaf { word } => f.write_str(word),
            ConstituencyTree::Internal { label, children } => {
                write!(f, "({label}")?;
                for child in children {
                    write!(f, " {child}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for ConstituencyTree {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bracketed(s)
    }
}

impl Serialize for ConstituencyTree {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConstituencyTree {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_bracketed(&text).map_err(serde::de::Error::custom)
    }
}

/// A tree whose words are all [`PLACEHOLDER`]; the syntactic target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "ConstituencyTree", try_from = "ConstituencyTree")]
pub struct TreeTemplate {
    tree: ConstituencyTree,
    word_count: usize,
}

impl TreeTemplate {
    pub fn tree(&self) -> &ConstituencyTree {
        &self.tree
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }

    /// Preterminal labels left to right, one per word.
    pub fn pos_sequence(&self) -> Vec<String> {
        pos_sequence(&self.tree)
    }
}

impl From<TreeTemplate> for ConstituencyTree {
    fn from(t: TreeTemplate) -> Self {
        t.tree
    }
}

impl From<ConstituencyTree> for TreeTemplate {
    fn from(tree: ConstituencyTree) -> Self {
        template_from_tree(&tree)
    }
}

impl fmt::Display for TreeTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.tree.fmt(f)
    }
}

pub fn template_from_tree(tree: &ConstituencyTree) -> TreeTemplate {
    let tree = tree.map_leaves(&mut |_| PLACEHOLDER.to_string());
    let word_count = tree.leaf_count();
    TreeTemplate { tree, word_count }
}

/// Preterminal labels of any tree, left to right.
pub fn pos_sequence(tree: &ConstituencyTree) -> Vec<String> {
    let mut out = Vec::new();
    tree.visit_preterminals(&mut |label, _| out.push(label.to_string()));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    /// Edges on the longest root-to-leaf path.
    pub height: usize,
    pub leaf_count: usize,
    /// All nodes, internal and leaves.
    pub size: usize,
}

pub fn tree_stats(tree: &ConstituencyTree) -> TreeStats {
    fn go(t: &ConstituencyTree) -> (usize, usize, usize) {
        match t {
            ConstituencyTree::Leaf { .. } => (0, 1, 1),
            ConstituencyTree::Internal { children, .. } => {
                let (mut h, mut l, mut s) = (0, 0, 1);
                for c in children {
                    let (ch, cl, cs) = go(c);
                    h = h.max(ch + 1);
                    l += cl;
                    s += cs;
                }
                (h, l, s)
            }
        }
    }
    let (height, leaf_count, size) = go(tree);
    TreeStats {
        height,
        leaf_count,
        size,
    }
}

/// Aggregate statistics over a collection of trees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub trees: usize,
    pub mean_height: f64,
    pub max_height: usize,
    pub mean_leaf_count: f64,
    pub max_leaf_count: usize,
    pub mean_size: f64,
}

pub fn corpus_stats<'a>(trees: impl IntoIterator<Item = &'a ConstituencyTree>) -> CorpusStats {
    let mut n = 0usize;
    let (mut h, mut l, mut s) = (0usize, 0usize, 0usize);
    let (mut max_h, mut max_l) = (0usize, 0usize);
    for t in trees {
        let st = tree_stats(t);
        n += 1;
        h += st.height;
        l += st.leaf_count;
        s += st.size;
        max_h = max_h.max(st.height);
        max_l = max_l.max(st.leaf_count);
    }
    let mean = |x: usize| if n == 0 { 0.0 } else { x as f64 / n as f64 };
    CorpusStats {
        trees: n,
        mean_height: mean(h),
        max_height: max_h,
        mean_leaf_count: mean(l),
        max_leaf_count: max_l,
        mean_size: mean(s),
    }
}

/// A five-word sentence used across examples and tests.
pub const EXAMPLE_TREE: &str =
    "(S (NP (EX There)) (VP (VBZ is) (ADVP (RB always)) (NP (DT a) (NN chance))))";
