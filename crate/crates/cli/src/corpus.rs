use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use syntax_smc::grammar::sample_tree;

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::generate::load_grammar;

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// PCFG file, or `toy:unary` / `toy:pp`.
    #[arg(long)]
    pub grammar: String,
    /// Number of trees.
    #[arg(long)]
    pub count: usize,
    /// Longest sentence kept.
    #[arg(long, default_value_t = 20)]
    pub max_words: usize,
    /// Shortest sentence kept.
    #[arg(long, default_value_t = 1)]
    pub min_words: usize,
}

const ATTEMPTS_PER_TREE: usize = 1000;

/// Samples trees from a grammar, one bracketed tree per line.
pub fn run(a: CorpusArgs, seed: Option<u64>, cfg: &Config) -> Result<String> {
    let g = load_grammar(&a.grammar)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.pick(seed, "corpus", "seed", 0u64)?);
    let mut out = String::new();
    let mut kept = 0;
    let mut attempts = 0;
    while kept < a.count {
        attempts += 1;
        if attempts > ATTEMPTS_PER_TREE * a.count.max(1) {
            return Err(CliError::input(format!(
                "could not sample {} trees of {}..={} words",
                a.count, a.min_words, a.max_words
            )));
        }
        if let Some(t) = sample_tree(&g, &mut rng, a.max_words) {
            if t.leaf_count() >= a.min_words {
                out += &t.to_string();
                out.push('\n');
                kept += 1;
            }
        }
    }
    Ok(out)
}
