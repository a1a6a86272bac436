//! Tetratag linearization of binarized constituency trees.
//!
//! An in-order traversal of the binarized tree yields one leaf tag per word
//! (`l`/`r`: the word's node is a left/right child) interleaved with one
//! internal tag per binary node (`L`/`R`), so a sentence of `L` words maps to
//! `2L - 1` tags. The root counts as a left child. Leaf tags carry the
//! collapsed unary chain above the preterminal; internal tags carry the node
//! label, or nothing for dummy nodes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{
    binarize, debinarize, BinaryTree, ConstituencyTree, TreeError, CHAIN_SEPARATOR, DUMMY_LABEL,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("malformed tag sequence at position {position}: {reason}")]
    MalformedSequence { position: usize, reason: &'static str },
    #[error("expected {expected} words and POS labels, got {words} words and {pos} labels")]
    LengthMismatch {
        expected: usize,
        words: usize,
        pos: usize,
    },
    #[error("invalid tag {0:?}")]
    InvalidTag(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TagKind {
    /// `l`: leaf that is a left child.
    LeftLeaf,
    /// `r`: leaf that is a right child.
    RightLeaf,
    /// `L`: internal node that is a left child (or the root).
    LeftInternal,
    /// `R`: internal node that is a right child.
    RightInternal,
}

impl TagKind {
    pub fn is_leaf(self) -> bool {
        matches!(self, TagKind::LeftLeaf | TagKind::RightLeaf)
    }

    pub fn symbol(self) -> char {
        match self {
            TagKind::LeftLeaf => 'l',
            TagKind::RightLeaf => 'r',
            TagKind::LeftInternal => 'L',
            TagKind::RightInternal => 'R',
        }
    }

    fn leaf(is_left: bool) -> TagKind {
        if is_left {
            TagKind::LeftLeaf
        } else {
            TagKind::RightLeaf
        }
    }

    fn internal(is_left: bool) -> TagKind {
        if is_left {
            TagKind::LeftInternal
        } else {
            TagKind::RightInternal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tetratag {
    pub kind: TagKind,
    pub label: Option<String>,
}

impl Tetratag {
    pub fn new(kind: TagKind, label: Option<&str>) -> Self {
        Tetratag {
            kind,
            label: label.map(str::to_string),
        }
    }

    /// Labels of the chain, top first.
    pub fn chain(&self) -> Vec<&str> {
        self.label
            .as_deref()
            .map(|l| l.split(CHAIN_SEPARATOR).collect())
            .unwrap_or_default()
    }
}

impl fmt::Display for Tetratag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(label) => write!(f, "{}/{label}", self.kind.symbol()),
            None => write!(f, "{}", self.kind.symbol()),
        }
    }
}

impl FromStr for Tetratag {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, label) = match s.split_once('/') {
            Some((h, l)) if !l.is_empty() => (h, Some(l)),
            Some(_) => return Err(CodecError::InvalidTag(s.to_string())),
            None => (s, None),
        };
        let kind = match head {
            "l" => TagKind::LeftLeaf,
            "r" => TagKind::RightLeaf,
            "L" => TagKind::LeftInternal,
            "R" => TagKind::RightInternal,
            _ => return Err(CodecError::InvalidTag(s.to_string())),
        };
        Ok(Tetratag::new(kind, label))
    }
}

impl Serialize for Tetratag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tetratag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A complete tag sequence of length `2L - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Tetratag>", into = "Vec<Tetratag>")]
pub struct TagSequence {
    tags: Vec<Tetratag>,
}

impl TagSequence {
    /// Validates that the tags decode to a tree.
    pub fn new(tags: Vec<Tetratag>) -> Result<Self, CodecError> {
        decode_skeleton(&tags)?;
        Ok(TagSequence { tags })
    }

    pub fn tags(&self) -> &[Tetratag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.tags.len().div_ceil(2)
    }

    /// Leaf tag of word `i` (0-based).
    pub fn leaf_tag(&self, i: usize) -> &Tetratag {
        &self.tags[2 * i]
    }

    /// Internal tag following word `i` (0-based), absent for the last word.
    pub fn internal_tag(&self, i: usize) -> Option<&Tetratag> {
        self.tags.get(2 * i + 1)
    }
}

impl TryFrom<Vec<Tetratag>> for TagSequence {
    type Error = CodecError;

    fn try_from(tags: Vec<Tetratag>) -> Result<Self, Self::Error> {
        TagSequence::new(tags)
    }
}

impl From<TagSequence> for Vec<Tetratag> {
    fn from(s: TagSequence) -> Self {
        s.tags
    }
}

/// Renders as `['l/NP', 'L/S', 'r']`.
impl fmt::Display for TagSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, t) in self.tags.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "'{t}'")?;
        }
        f.write_str("]")
    }
}

impl FromStr for TagSequence {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TagSequence::new(parse_tag_list(s)?)
    }
}

/// Parses the bracketed, quoted list rendering without checking
/// that it decodes. Accepts single or double quotes.
pub fn parse_tag_list(s: &str) -> Result<Vec<Tetratag>, CodecError> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| CodecError::InvalidTag(s.trim().to_string()))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|item| {
            let item = item.trim();
            let unquoted = item
                .strip_prefix('\'')
                .and_then(|r| r.strip_suffix('\''))
                .or_else(|| item.strip_prefix('"').and_then(|r| r.strip_suffix('"')))
                .ok_or_else(|| CodecError::InvalidTag(item.to_string()))?;
            unquoted.parse()
        })
        .collect()
}

/// Encodes a tree (or template) into its tag sequence.
pub fn encode(tree: &ConstituencyTree) -> TagSequence {
    fn walk(t: &ConstituencyTree, is_left: bool, out: &mut Vec<Tetratag>) {
        let ConstituencyTree::Internal { label, children } = t else {
            unreachable!("binarized trees fuse words into preterminals");
        };
        if t.is_preterminal() {
            // drop the preterminal itself, keep the chain above it
            let chain = label.rsplit_once(CHAIN_SEPARATOR).map(|(up, _)| up);
            out.push(Tetratag::new(TagKind::leaf(is_left), chain));
            return;
        }
        walk(&children[0], true, out);
        let label = (label != DUMMY_LABEL).then_some(label.as_str());
        out.push(Tetratag::new(TagKind::internal(is_left), label));
        walk(&children[1], false, out);
    }

    let btree = binarize(tree);
    let mut tags = Vec::with_capacity(2 * tree.leaf_count() - 1);
    walk(btree.root(), true, &mut tags);
    TagSequence { tags }
}

/// Tree structure recovered from tags alone: words are referenced by
/// position and preterminal labels are unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Skeleton {
    Leaf {
        index: usize,
        /// Unary chain above the preterminal, top first.
        chain: Vec<String>,
    },
    Node {
        /// `None` for a dummy node.
        labels: Option<Vec<String>>,
        left: Box<Skeleton>,
        right: Box<Skeleton>,
    },
}

#[derive(Debug, Clone)]
enum Slot {
    Leaf(usize, Vec<String>),
    Node(Option<Vec<String>>, usize, Option<usize>),
}

/// Stack machine shared by decoding and prefix validation.
///
/// Each stack item is a partial tree with at most one open right slot,
/// recorded as the arena index of the node owning it.
#[derive(Debug, Default, Clone)]
struct Machine {
    arena: Vec<Slot>,
    stack: Vec<(usize, Option<usize>)>,
    leaves: usize,
}

impl Machine {
    fn step(&mut self, position: usize, tag: &Tetratag) -> Result<(), CodecError> {
        let malformed = |reason| CodecError::MalformedSequence { position, reason };
        let expects_leaf = position % 2 == 0;
        if tag.kind.is_leaf() != expects_leaf {
            return Err(malformed(if expects_leaf {
                "expected a leaf tag"
            } else {
                "expected an internal tag"
            }));
        }
        let chain: Vec<String> = tag.chain().into_iter().map(str::to_string).collect();
        match tag.kind {
            TagKind::LeftLeaf => {
                if matches!(self.stack.last(), Some((_, None))) {
                    return Err(malformed("leaf follows a complete subtree"));
                }
                let id = self.push_slot(Slot::Leaf(self.leaves, chain));
                self.leaves += 1;
                self.stack.push((id, None));
            }
            TagKind::RightLeaf => {
                let Some((_, hole)) = self.stack.last_mut() else {
                    return Err(malformed("right leaf with an empty stack"));
                };
                let Some(owner) = hole.take() else {
                    return Err(malformed("right leaf without an open slot"));
                };
                let id = self.arena.len();
                self.arena.push(Slot::Leaf(self.leaves, chain));
                self.leaves += 1;
                self.fill(owner, id);
            }
            TagKind::LeftInternal => {
                let labels = tag.label.as_ref().map(|_| chain);
                match self.stack.last() {
                    Some(&(root, None)) => {
                        let id = self.push_slot(Slot::Node(labels, root, None));
                        *self.stack.last_mut().unwrap() = (id, Some(id));
                    }
                    Some(_) => return Err(malformed("left internal above an open slot")),
                    None => return Err(malformed("left internal with an empty stack")),
                }
            }
            TagKind::RightInternal => {
                let labels = tag.label.as_ref().map(|_| chain);
                let n = self.stack.len();
                if n < 2 {
                    return Err(malformed("right internal without a parent"));
                }
                let (root, hole) = self.stack[n - 1];
                if hole.is_some() {
                    return Err(malformed("right internal above an open slot"));
                }
                let Some(owner) = self.stack[n - 2].1 else {
                    return Err(malformed("right internal without an open slot"));
                };
                self.stack.pop();
                let id = self.push_slot(Slot::Node(labels, root, None));
                self.fill(owner, id);
                self.stack.last_mut().unwrap().1 = Some(id);
            }
        }
        Ok(())
    }

    fn push_slot(&mut self, slot: Slot) -> usize {
        self.arena.push(slot);
        self.arena.len() - 1
    }

    fn fill(&mut self, owner: usize, child: usize) {
        match &mut self.arena[owner] {
            Slot::Node(_, _, right) => *right = Some(child),
            Slot::Leaf(..) => unreachable!("leaves own no slots"),
        }
    }

    /// Words still needed before the sequence can end.
    fn leaves_needed(&self) -> usize {
        self.stack.iter().filter(|(_, hole)| hole.is_some()).count()
    }

    fn finish(self, position: usize) -> Result<Skeleton, CodecError> {
        match self.stack.as_slice() {
            [(root, None)] => Ok(self.build(*root)),
            [] => Err(CodecError::MalformedSequence {
                position,
                reason: "empty sequence",
            }),
            _ => Err(CodecError::MalformedSequence {
                position,
                reason: "unfinished constituents remain",
            }),
        }
    }

    fn build(&self, id: usize) -> Skeleton {
        match &self.arena[id] {
            Slot::Leaf(index, chain) => Skeleton::Leaf {
                index: *index,
                chain: chain.clone(),
            },
            Slot::Node(labels, left, right) => Skeleton::Node {
                labels: labels.clone(),
                left: Box::new(self.build(*left)),
                right: Box::new(self.build(right.expect("complete tree has no open slot"))),
            },
        }
    }
}

/// Rebuilds the binary structure encoded by `tags`.
pub fn decode_skeleton(tags: &[Tetratag]) -> Result<Skeleton, CodecError> {
    let mut machine = Machine::default();
    for (i, tag) in tags.iter().enumerate() {
        machine.step(i, tag)?;
    }
    machine.finish(tags.len())
}

/// Rebuilds the constituency tree for `words` with preterminals `pos`.
pub fn decode<S: AsRef<str>, P: AsRef<str>>(
    tags: &TagSequence,
    words: &[S],
    pos: &[P],
) -> Result<ConstituencyTree, CodecError> {
    let expected = tags.word_count();
    if words.len() != expected || pos.len() != expected {
        return Err(CodecError::LengthMismatch {
            expected,
            words: words.len(),
            pos: pos.len(),
        });
    }
    let skeleton = decode_skeleton(tags.tags())?;
    let binary = skeleton_to_tree(&skeleton, words, pos);
    let btree = BinaryTree::from_binary(binary).expect("skeleton is binary");
    Ok(debinarize(&btree)?)
}

fn skeleton_to_tree<S: AsRef<str>, P: AsRef<str>>(
    s: &Skeleton,
    words: &[S],
    pos: &[P],
) -> ConstituencyTree {
    let sep = CHAIN_SEPARATOR.to_string();
    match s {
        Skeleton::Leaf { index, chain } => {
            let mut labels: Vec<&str> = chain.iter().map(String::as_str).collect();
            labels.push(pos[*index].as_ref());
            ConstituencyTree::preterminal(labels.join(&sep), words[*index].as_ref())
        }
        Skeleton::Node {
            labels,
            left,
            right,
        } => ConstituencyTree::internal(
            labels
                .as_ref()
                .map(|l| l.join(&sep))
                .unwrap_or_else(|| DUMMY_LABEL.to_string()),
            vec![
                skeleton_to_tree(left, words, pos),
                skeleton_to_tree(right, words, pos),
            ],
        ),
    }
}

/// True iff some continuation of `tags` decodes.
pub fn is_valid_prefix(tags: &[Tetratag]) -> bool {
    let mut machine = Machine::default();
    tags.iter()
        .enumerate()
        .all(|(i, tag)| machine.step(i, tag).is_ok())
}

/// True iff some continuation of `tags` decodes to exactly `word_count` words.
pub fn is_valid_prefix_for(tags: &[Tetratag], word_count: usize) -> bool {
    let mut machine = Machine::default();
    for (i, tag) in tags.iter().enumerate() {
        if machine.step(i, tag).is_err() {
            return false;
        }
    }
    word_count > 0
        && tags.len() < 2 * word_count
        && machine.leaves + machine.leaves_needed() <= word_count
}
