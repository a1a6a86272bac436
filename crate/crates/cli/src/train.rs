use std::path::PathBuf;

use clap::Subcommand;
use syntax_smc::lm::{read_corpus, train_ngram, NgramConfig};
use syntax_smc::proposals::{train_pos_bigram, DEFAULT_FLOOR};
use syntax_smc::taggers::{train_feature_tagger, Context, TaggedSentence, TrainConfig};
use syntax_smc::tree::pos_sequence;

use crate::config::Config;
use crate::error::Result;
use crate::io::read_input;
use crate::tree_cmd::read_trees;

#[derive(Debug, Subcommand)]
pub enum TrainWhat {
    /// Add-k smoothed n-gram model.
    Ngram {
        /// One sentence per line, or a treebank with --trees.
        corpus: PathBuf,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        k: Option<f64>,
        /// Read the corpus as bracketed trees and use their words.
        #[arg(long)]
        trees: bool,
    },
    /// Word tables conditioned on adjacent POS tags.
    Bigram {
        /// Treebank file.
        corpus: PathBuf,
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Feature-based tetratagger.
    Tagger {
        /// Treebank file, or JSON lines of `{"words", "tags"}`.
        corpus: PathBuf,
        #[arg(long, value_parser = parse_context)]
        context: Option<Context>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        l2: Option<f64>,
    },
}

fn parse_context(s: &str) -> std::result::Result<Context, String> {
    match s {
        "full" => Ok(Context::Full),
        "prefix" => Ok(Context::Prefix),
        _ => Err(format!("expected full or prefix, got {s:?}")),
    }
}

pub fn run(what: TrainWhat, seed: Option<u64>, cfg: &Config) -> Result<String> {
    match what {
        TrainWhat::Ngram {
            corpus,
            order,
            k,
            trees,
        } => {
            let sentences = if trees {
                read_trees(&corpus)?.iter().map(|t| t.words()).collect()
            } else {
                read_corpus(&read_input(&corpus)?)
            };
            let d = NgramConfig::default();
            let config = NgramConfig {
                order: cfg.pick(order, "train", "order", d.order)?,
                k: cfg.pick(k, "train", "k", d.k)?,
                ..d
            };
            Ok(train_ngram(&sentences, &config)?.to_json())
        }
        TrainWhat::Bigram { corpus, floor } => {
            let pairs: Vec<(Vec<String>, Vec<String>)> = read_trees(&corpus)?
                .iter()
                .map(|t| (t.words(), pos_sequence(t)))
                .collect();
            let floor = cfg.pick(floor, "train", "floor", DEFAULT_FLOOR)?;
            Ok(train_pos_bigram(&pairs, floor)?.to_json())
        }
        TrainWhat::Tagger {
            corpus,
            context,
            epochs,
            learning_rate,
            l2,
        } => {
            let text = read_input(&corpus)?;
            let data = if text.trim_start().starts_with('{') {
                TaggedSentence::read_jsonl(&text)?
            } else {
                read_trees(&corpus)?.iter().map(TaggedSentence::from_tree).collect()
            };
            let d = TrainConfig::default();
            let context = match context {
                Some(c) => c,
                None => match cfg.get::<String>("train", "context")? {
                    Some(s) => parse_context(&s).map_err(crate::error::CliError::Input)?,
                    None => d.context,
                },
            };
            let config = TrainConfig {
                context,
                learning_rate: cfg.pick(learning_rate, "train", "learning_rate", d.learning_rate)?,
                epochs: cfg.pick(epochs, "train", "epochs", d.epochs)?,
                l2: cfg.pick(l2, "train", "l2", d.l2)?,
                seed: cfg.pick(seed, "train", "seed", d.seed)?,
            };
            Ok(train_feature_tagger(&data, &config)?.to_json())
        }
    }
}
