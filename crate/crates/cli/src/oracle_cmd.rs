use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use syntax_smc::inference::{sis, smc, RunConfig, DEFAULT_TAU};
use syntax_smc::lm::{LanguageModel, StoredLm, TabularLm, Vocabulary};
use syntax_smc::oracle::{
    enumerate_posterior, optimal_shaping, tvd, OracleError, OracleProposal, OracleShaper, UnitPotential,
    MAX_SUPPORT, REFERENCE_MAX_WORDS, REFERENCE_TARGET, REFERENCE_VOCAB,
};
use syntax_smc::proposals::{PriorProposal, Proposal};
use syntax_smc::taggers::{FlatShaper, GrammarOracle, LengthPotential, Potential, Shaper};
use syntax_smc::tetratag::encode;
use syntax_smc::tree::parse_bracketed;

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::generate::{load_grammar, pick_enum, Method};
use crate::io::read_input;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OraclePotential {
    Grammar,
    Unit,
    Length,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleProposalKind {
    Prior,
    Optimal,
}

/// An enumerable problem. Every field falls back to the reference instance.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub vocab: Option<Vec<String>>,
    pub max_words: Option<usize>,
    /// Seed of the random tabular model.
    pub lm_seed: Option<u64>,
    pub eos_scale: Option<f64>,
    /// Model file used instead of a random table.
    pub lm: Option<PathBuf>,
    pub grammar: Option<String>,
    pub target: Option<String>,
    pub potential: Option<OraclePotential>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// JSON instance description; defaults to the reference instance.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub potential: Option<OraclePotential>,
    /// Particle counts to run and compare, e.g. `16,256`.
    #[arg(long = "M", value_delimiter = ',')]
    pub particles: Vec<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long, value_enum)]
    pub proposal: Option<OracleProposalKind>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Runs per particle count, with seeds `seed, seed+1, ...`.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub export_phi: Option<PathBuf>,
    #[arg(long)]
    pub export_posterior: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    #[serde(rename = "M")]
    particles: usize,
    method: &'static str,
    proposal: OracleProposalKind,
    runs: usize,
    z_hat_mean: f64,
    tvd_median: f64,
    tvd: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct OracleReport {
    z: f64,
    #[serde(with = "syntax_smc::logspace::ext_f64")]
    log_z: f64,
    phi_empty: f64,
    support: usize,
    max_words: usize,
    runs: Vec<RunSummary>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[(v.len() - 1) / 2]
}

pub fn run(a: OracleArgs, seed: Option<u64>, cfg: &Config) -> Result<String> {
    const S: &str = "oracle";
    let spec: InstanceSpec = match &a.instance {
        Some(p) => serde_json::from_str(&read_input(p)?)
            .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?,
        None => InstanceSpec::default(),
    };
    let max_words = spec.max_words.unwrap_or(REFERENCE_MAX_WORDS);
    let lm: Arc<dyn LanguageModel> = match &spec.lm {
        Some(p) => Arc::new(StoredLm::load(p)?),
        None => {
            let words = spec
                .vocab
                .clone()
                .unwrap_or_else(|| REFERENCE_VOCAB.iter().map(|s| s.to_string()).collect());
            let size = (words.len() as f64).powi(max_words as i32);
            if size > MAX_SUPPORT {
                return Err(OracleError::SupportTooLarge { size }.into());
            }
            let vocab = Arc::new(Vocabulary::new(words)?);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.lm_seed.unwrap_or(0));
            Arc::new(TabularLm::random(vocab, max_words, spec.eos_scale.unwrap_or(0.3), &mut rng))
        }
    };
    let grammar = Arc::new(load_grammar(spec.grammar.as_deref().unwrap_or("toy:unary"))?);
    let oracle = GrammarOracle::new(grammar);
    let target = encode(&parse_bracketed(spec.target.as_deref().unwrap_or(REFERENCE_TARGET))?);
    let kind = a
        .potential
        .or(spec.potential)
        .unwrap_or(OraclePotential::Grammar);
    let potential: &dyn Potential = match kind {
        OraclePotential::Grammar => &oracle,
        OraclePotential::Unit => &UnitPotential,
        OraclePotential::Length => &LengthPotential,
    };

    let posterior = enumerate_posterior(lm.as_ref(), potential, &target, max_words)?;
    let table = Arc::new(optimal_shaping(lm.as_ref(), potential, &target, max_words)?);
    if let Some(p) = &a.export_posterior {
        std::fs::write(p, posterior.to_json())?;
    }
    if let Some(p) = &a.export_phi {
        std::fs::write(p, table.to_json())?;
    }

    let method = pick_enum(cfg, a.method, S, "method", Method::Smc)?;
    let proposal_kind = pick_enum(cfg, a.proposal, S, "proposal", OracleProposalKind::Prior)?;
    let tau = cfg.pick(a.tau, S, "tau", DEFAULT_TAU)?;
    let runs = cfg.pick(a.runs, S, "runs", 1usize)?.max(1);
    let seed = cfg.pick(seed, S, "seed", 0u64)?;
    let exact = posterior.distribution();
    let proposal: Box<dyn Proposal> = match proposal_kind {
        OracleProposalKind::Prior => Box::new(PriorProposal::new(lm.clone())),
        OracleProposalKind::Optimal => Box::new(OracleProposal::new(table.clone())),
    };
    let optimal_shaper = OracleShaper::new(table.clone());
    let shaper: &dyn Shaper = match (proposal_kind, kind) {
        (OracleProposalKind::Optimal, _) => &optimal_shaper,
        (_, OraclePotential::Grammar) => &oracle,
        _ => &FlatShaper,
    };
    let mut summaries = Vec::new();
    for &m in &a.particles {
        let mut tvds = Vec::with_capacity(runs);
        let mut z_sum = 0.0;
        for r in 0..runs {
            let config = RunConfig {
                particles: m,
                tau,
                max_words: Some(max_words),
                seed: seed.wrapping_add(r as u64),
                trace: false,
            };
            let result = match method {
                Method::Sis => sis(lm.as_ref(), proposal.as_ref(), potential, &target, &config)?,
                Method::Smc => smc(lm.as_ref(), proposal.as_ref(), potential, shaper, &target, &config)?,
            };
            z_sum += result.z_hat();
            tvds.push(tvd(&result.posterior(), &exact));
        }
        summaries.push(RunSummary {
            particles: m,
            method: match method {
                Method::Sis => "sis",
                Method::Smc => "smc",
            },
            proposal: proposal_kind,
            runs,
            z_hat_mean: z_sum / runs as f64,
            tvd_median: median(tvds.clone()),
            tvd: tvds,
        });
    }
    let report = OracleReport {
        z: posterior.z(),
        log_z: posterior.log_z,
        phi_empty: table.log_z().exp(),
        support: exact.len(),
        max_words,
        runs: summaries,
    };
    Ok(serde_json::to_string_pretty(&report)? + "\n")
}
