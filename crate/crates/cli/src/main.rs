//! `syntax-smc`: tree tools, model training, constrained generation,
//! evaluation and exact-oracle experiments.
//!
//! Results go to stdout (or `--output`) as JSON or plain lines; diagnostics
//! go to stderr. Exit status is 0 on success, 2 on bad input and 3 when a
//! remote model fails.

mod config;
mod corpus;
mod error;
mod eval;
mod generate;
mod io;
mod oracle_cmd;
mod train;
mod tree_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;
use error::Result;

#[derive(Debug, Parser)]
#[command(name = "syntax-smc", version, about = "Generate sentences that fit a target parse tree")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bracketed-tree utilities.
    #[command(subcommand)]
    Tree(tree_cmd::TreeAction),
    /// Train a language model, POS bigram model or tagger.
    #[command(subcommand)]
    Train(train::TrainWhat),
    /// Sample sentences for target trees with SIS or SMC.
    Generate(generate::GenerateArgs),
    /// Score generated samples against their target trees.
    Eval(eval::EvalArgs),
    /// Exact evidence and posterior on a small instance, compared with runs.
    Oracle(oracle_cmd::OracleArgs),
    /// Sample a treebank from a grammar.
    Corpus(corpus::CorpusArgs),
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::resolve(cli.config.as_ref())?;
    let text = match cli.command {
        Command::Tree(a) => tree_cmd::run(a)?,
        Command::Train(w) => train::run(w, cli.seed, &cfg)?,
        Command::Generate(a) => generate::run(a, cli.seed, &cfg)?,
        Command::Eval(a) => eval::run(a, &cfg)?,
        Command::Oracle(a) => oracle_cmd::run(a, cli.seed, &cfg)?,
        Command::Corpus(a) => corpus::run(a, cli.seed, &cfg)?,
    };
    io::write_output(cli.output.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
