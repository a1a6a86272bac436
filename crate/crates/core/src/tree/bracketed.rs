use super::{ConstituencyTree, TreeError, CHAIN_SEPARATOR, DUMMY_LABEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Token<'_>)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, Token::Atom(&text[s..i])));
            }
            if c == '(' {
                out.push((i, Token::Open));
            } else if c == ')' {
                out.push((i, Token::Close));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, Token::Atom(&text[s..])));
    }
    out
}

struct Parser<'a> {
    tokens: Vec<(usize, Token<'a>)>,
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<(usize, Token<'a>)> {
        self.tokens.get(self.pos).copied()
    }

    /// Parses `( label child+ )` with the opening paren at the cursor.
    fn node(&mut self) -> Result<ConstituencyTree, TreeError> {
        let (open_at, _) = self.tokens[self.pos];
        self.pos += 1;
        let (label_at, label) = match self.peek() {
            Some((at, Token::Atom(label))) => (at, label),
            Some((at, _)) => return Err(TreeError::EmptyLabel { offset: at }),
            None => return Err(TreeError::UnbalancedParens { offset: open_at }),
        };
        if label == DUMMY_LABEL || label.contains(CHAIN_SEPARATOR) {
            return Err(TreeError::ReservedLabel {
                offset: label_at,
                label: label.to_string(),
            });
        }
        self.pos += 1;

        let mut children = Vec::new();
        let mut leaf_at = None;
        loop {
            match self.peek() {
                None => return Err(TreeError::UnbalancedParens { offset: open_at }),
                Some((_, Token::Close)) => {
                    self.pos += 1;
                    break;
                }
                Some((_, Token::Open)) => children.push(self.node()?),
                Some((at, Token::Atom(word))) => {
                    leaf_at.get_or_insert(at);
                    children.push(ConstituencyTree::leaf(word));
                    self.pos += 1;
                }
            }
        }
        if children.is_empty() {
            return Err(TreeError::EmptyTree { offset: open_at });
        }
        if let Some(at) = leaf_at {
            if children.len() > 1 {
                let word = children
                    .iter()
                    .find_map(|c| match c {
                        ConstituencyTree::Leaf { word } => Some(word.clone()),
                        _ => None,
                    })
                    .unwrap_or_default();
                return Err(TreeError::MisplacedLeaf { offset: at, word });
            }
        }
        Ok(ConstituencyTree::Internal {
            label: label.to_string(),
            children,
        })
    }
}

/// Parses a single bracketed S-expression such as `(S (NN dog))`.
pub fn parse_bracketed(text: &str) -> Result<ConstituencyTree, TreeError> {
    let tokens = tokenize(text);
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let tree = match parser.peek() {
        None => return Err(TreeError::EmptyTree { offset: 0 }),
        Some((_, Token::Open)) => parser.node()?,
        Some((at, Token::Close)) => return Err(TreeError::UnbalancedParens { offset: at }),
        Some((at, Token::Atom(a))) => {
            return Err(TreeError::UnexpectedToken {
                offset: at,
                token: a.to_string(),
            })
        }
    };
    match parser.peek() {
        None => Ok(tree),
        Some((at, Token::Close)) => Err(TreeError::UnbalancedParens { offset: at }),
        Some((at, tok)) => Err(TreeError::UnexpectedToken {
            offset: at.min(parser.end),
            token: match tok {
                Token::Atom(a) => a.to_string(),
                _ => "(".to_string(),
            },
        }),
    }
}

/// Parses a treebank file holding one tree per nonblank line.
///
/// Errors carry the 1-based line number.
pub fn parse_treebank(text: &str) -> Result<Vec<ConstituencyTree>, (usize, TreeError)> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| parse_bracketed(line).map_err(|e| (i + 1, e)))
        .collect()
}

/// Canonical rendering: single spaces, `(label children…)` recursively.
pub fn serialize_bracketed(tree: &ConstituencyTree) -> String {
    tree.to_string()
}
