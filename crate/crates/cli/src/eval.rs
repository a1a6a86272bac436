use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use serde::Serialize;
use serde_json::Value;
use syntax_smc::inference::{RunHeader, SampleRecord};
use syntax_smc::metrics::{report, EvalReport, ParseTable, Parser, ScoredOutput};
use syntax_smc::taggers::{GrammarOracle, Potential};
use syntax_smc::tetratag::encode;
use syntax_smc::tree::{parse_bracketed, ConstituencyTree};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::generate::load_grammar;
use crate::io::read_input;
use crate::tree_cmd::read_trees;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON lines written by `generate`.
    pub samples: PathBuf,
    /// PCFG used to parse the samples and rescore their potential.
    #[arg(long)]
    pub grammar: Option<String>,
    /// Parses produced elsewhere, one tree per line; used before --grammar.
    #[arg(long)]
    pub parses: Option<PathBuf>,
    /// Target tree for runs whose header names none.
    #[arg(long)]
    pub tree: Option<String>,
    /// Add one report per target tree.
    #[arg(long)]
    pub per_template: bool,
}

#[derive(Serialize)]
struct Breakdown {
    overall: EvalReport,
    templates: Vec<TemplateReport>,
}

#[derive(Serialize)]
struct TemplateReport {
    template: String,
    report: EvalReport,
}

struct Run {
    template: ConstituencyTree,
    samples: Vec<SampleRecord>,
}

fn read_runs(text: &str, fallback: Option<&ConstituencyTree>) -> Result<Vec<Run>> {
    let mut runs: Vec<Run> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: String| CliError::input(format!("samples line {}: {e}", n + 1));
        let v: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if v.get("z_hat").is_some() {
            let h: RunHeader = serde_json::from_value(v).map_err(|e| bad(e.to_string()))?;
            let template = match (h.template, fallback) {
                (Some(t), _) => parse_bracketed(&t).map_err(|e| bad(e.to_string()))?,
                (None, Some(t)) => t.clone(),
                (None, None) => return Err(bad("run has no target tree; pass --tree".into())),
            };
            runs.push(Run {
                template,
                samples: Vec::new(),
            });
        } else {
            let rec: SampleRecord = serde_json::from_value(v).map_err(|e| bad(e.to_string()))?;
            runs.last_mut()
                .ok_or_else(|| bad("sample before any run header".into()))?
                .samples
                .push(rec);
        }
    }
    Ok(runs)
}

pub fn run(a: EvalArgs, cfg: &Config) -> Result<String> {
    let fallback = a.tree.as_deref().map(parse_bracketed).transpose()?;
    let runs = read_runs(&read_input(&a.samples)?, fallback.as_ref())?;
    let grammar = cfg
        .pick_opt(a.grammar, "eval", "grammar")?
        .map(|g| load_grammar(&g).map(|g| GrammarOracle::new(Arc::new(g))))
        .transpose()?;
    let table = a.parses.as_deref().map(read_trees).transpose()?.map(ParseTable::new);
    let parser: &dyn Parser = match (&table, &grammar) {
        (Some(t), _) => t,
        (None, Some(g)) => g,
        (None, None) => return Err(CliError::input("need --grammar or --parses to parse samples")),
    };
    let mut by_template: BTreeMap<String, Vec<ScoredOutput>> = BTreeMap::new();
    let mut all = Vec::new();
    for r in &runs {
        let tags = encode(&r.template);
        for s in &r.samples {
            let log_potential = match &grammar {
                Some(g) => g.log_likelihood(&s.words, &tags),
                None => s.logpotential,
            };
            let item = ScoredOutput {
                words: s.words.clone(),
                target: r.template.clone(),
                parse: parser.parse(&s.words),
                log_potential,
                log_prior: s.logprior,
            };
            by_template
                .entry(r.template.to_string())
                .or_default()
                .push(item.clone());
            all.push(item);
        }
    }
    if all.is_empty() {
        return Err(CliError::input("no samples to evaluate"));
    }
    let overall = report(&all)?;
    let json = if a.per_template {
        let templates = by_template
            .into_iter()
            .map(|(template, items)| {
                Ok(TemplateReport {
                    template,
                    report: report(&items)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        serde_json::to_string_pretty(&Breakdown { overall, templates })?
    } else {
        serde_json::to_string_pretty(&overall)?
    };
    Ok(json + "\n")
}
