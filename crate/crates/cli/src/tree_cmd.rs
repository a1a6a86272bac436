use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};
use syntax_smc::tetratag::{decode, encode, TagSequence};
use syntax_smc::tree::{
    corpus_stats, parse_treebank, pos_sequence, serialize_bracketed, template_from_tree,
    tree_stats, ConstituencyTree,
};

use crate::error::{CliError, Result};
use crate::io::read_input;

#[derive(Debug, Subcommand)]
pub enum TreeAction {
    /// Print each tree in canonical bracketed form.
    Parse(TreeInput),
    /// Height, leaf count and size of each tree.
    Stats {
        #[command(flatten)]
        input: TreeInput,
        /// One aggregate record for the whole file.
        #[arg(long)]
        corpus: bool,
    },
    /// Replace every word with the placeholder.
    Template(TreeInput),
    /// Tetratag sequence of each tree.
    Encode {
        #[command(flatten)]
        input: TreeInput,
        /// Emit tags, words and POS as one JSON record per tree.
        #[arg(long)]
        json: bool,
    },
    /// Rebuild trees from encoded records.
    Decode {
        /// JSON records from `encode --json`, or tag lists with --words and --pos.
        input: PathBuf,
        #[arg(long)]
        words: Option<String>,
        #[arg(long)]
        pos: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct TreeInput {
    /// Treebank file with one tree per line (`-` for stdin).
    pub input: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct Encoded {
    tags: TagSequence,
    words: Vec<String>,
    pos: Vec<String>,
}

pub fn read_trees(path: &Path) -> Result<Vec<ConstituencyTree>> {
    let text = read_input(path)?;
    parse_treebank(&text).map_err(|(line, e)| CliError::input(format!("{}:{line}: {e}", path.display())))
}

fn lines<T>(items: impl IntoIterator<Item = T>, f: impl Fn(T) -> Result<String>) -> Result<String> {
    let mut out = String::new();
    for it in items {
        out += &f(it)?;
        out.push('\n');
    }
    Ok(out)
}

pub fn run(action: TreeAction) -> Result<String> {
    match action {
        TreeAction::Parse(i) => lines(read_trees(&i.input)?, |t| Ok(serialize_bracketed(&t))),
        TreeAction::Stats { input, corpus } => {
            let trees = read_trees(&input.input)?;
            if corpus {
                Ok(serde_json::to_string(&corpus_stats(&trees))? + "\n")
            } else {
                lines(trees, |t| Ok(serde_json::to_string(&tree_stats(&t))?))
            }
        }
        TreeAction::Template(i) => {
            lines(read_trees(&i.input)?, |t| Ok(template_from_tree(&t).to_string()))
        }
        TreeAction::Encode { input, json } => lines(read_trees(&input.input)?, |t| {
            let tags = encode(&t);
            if json {
                Ok(serde_json::to_string(&Encoded {
                    tags,
                    words: t.words(),
                    pos: pos_sequence(&t),
                })?)
            } else {
                Ok(tags.to_string())
            }
        }),
        TreeAction::Decode { input, words, pos } => {
            let text = read_input(&input)?;
            let split = |s: &Option<String>| {
                s.as_ref()
                    .map(|s| s.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            };
            let (words, pos) = (split(&words), split(&pos));
            let records = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            lines(records, |(n, line)| {
                let rec = if line.trim_start().starts_with('{') {
                    serde_json::from_str::<Encoded>(line)
                        .map_err(|e| CliError::input(format!("line {}: {e}", n + 1)))?
                } else {
                    let tags: TagSequence = line
                        .parse()
                        .map_err(|e| CliError::input(format!("line {}: {e}", n + 1)))?;
                    match (&words, &pos) {
                        (Some(w), Some(p)) => Encoded {
                            tags,
                            words: w.clone(),
                            pos: p.clone(),
                        },
                        _ => return Err(CliError::input("tag lists need --words and --pos")),
                    }
                };
                let tree = decode(&rec.tags, &rec.words, &rec.pos)
                    .map_err(|e| CliError::input(format!("line {}: {e}", n + 1)))?;
                Ok(serialize_bracketed(&tree))
            })
        }
    }
}
