use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use syntax_smc::grammar::{toy, Pcfg};
use syntax_smc::inference::{
    keyed_rng, run_sis, run_smc, sample_outputs, sis, smc, RemoteStepper, RunConfig, RunHeader,
    RunResult, SampleRecord, DEFAULT_PARTICLES_BIGRAM, DEFAULT_PARTICLES_PRIOR, DEFAULT_TAU,
};
use syntax_smc::lm::remote::RemoteLm;
use syntax_smc::lm::StoredLm;
use syntax_smc::proposals::{
    BigramMixtureProposal, PosBigramModel, PriorProposal, Proposal, DEFAULT_FLOOR, DEFAULT_TOP_K,
};
use syntax_smc::taggers::{FeatureTagger, FlatShaper, GrammarOracle, LengthPotential, Potential, Shaper};
use syntax_smc::tetratag::encode;
use syntax_smc::tree::{parse_bracketed, template_from_tree, TreeTemplate};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::tree_cmd::read_trees;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Sis,
    Smc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProposalKind {
    Prior,
    Bigram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LmKind {
    Ngram,
    Tabular,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PotentialKind {
    Grammar,
    Tagger,
    Length,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShaperKind {
    Grammar,
    Tagger,
    Flat,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Target trees, one per line; a literal bracketed tree also works.
    #[arg(long)]
    pub tree: String,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Number of particles.
    #[arg(long = "M")]
    pub particles: Option<usize>,
    /// Resampling threshold as a fraction of M; 0 disables resampling.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum)]
    pub proposal: Option<ProposalKind>,
    #[arg(long, value_enum)]
    pub lm: Option<LmKind>,
    /// Model file for ngram or tabular models.
    #[arg(long)]
    pub lm_path: Option<PathBuf>,
    #[arg(long)]
    pub remote_url: Option<String>,
    /// POS bigram model for the bigram proposal.
    #[arg(long)]
    pub bigram: Option<PathBuf>,
    #[arg(long)]
    pub floor: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long, value_enum)]
    pub potential: Option<PotentialKind>,
    /// Defaults to the potential's own shaping.
    #[arg(long, value_enum)]
    pub shaper: Option<ShaperKind>,
    /// PCFG file, or `toy:unary` / `toy:pp`.
    #[arg(long)]
    pub grammar: Option<String>,
    #[arg(long)]
    pub tagger: Option<PathBuf>,
    /// Emit this many draws from each run instead of its whole support.
    #[arg(long)]
    pub k: Option<usize>,
    /// Word budget; defaults to the template length.
    #[arg(long)]
    pub max_words: Option<usize>,
}

pub fn pick_enum<T: ValueEnum>(cfg: &Config, flag: Option<T>, section: &str, key: &str, default: T) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match cfg.get::<String>(section, key)? {
        Some(s) => T::from_str(&s, true).map_err(|e| CliError::input(format!("config key {key}: {e}"))),
        None => Ok(default),
    }
}

pub fn load_grammar(spec: &str) -> Result<Pcfg> {
    Ok(match spec {
        "toy:unary" => Pcfg::parse(toy::UNARY)?,
        "toy:pp" => Pcfg::parse(toy::PP)?,
        path => Pcfg::load(path)?,
    })
}

pub fn load_templates(spec: &str) -> Result<Vec<TreeTemplate>> {
    let trees = if spec.trim_start().starts_with('(') && !Path::new(spec).exists() {
        vec![parse_bracketed(spec)?]
    } else {
        read_trees(&PathBuf::from(spec))?
    };
    if trees.is_empty() {
        return Err(CliError::input("no target trees"));
    }
    Ok(trees.iter().map(template_from_tree).collect())
}

enum Lm {
    Local(Arc<StoredLm>),
    Remote(RemoteLm),
}

enum Scorer {
    Grammar(GrammarOracle),
    Tagger(FeatureTagger),
    None,
}

impl Scorer {
    fn potential(&self) -> &dyn Potential {
        match self {
            Scorer::Grammar(g) => g,
            Scorer::Tagger(t) => t,
            Scorer::None => &LengthPotential,
        }
    }

    fn shaper(&self) -> &dyn Shaper {
        match self {
            Scorer::Grammar(g) => g,
            Scorer::Tagger(t) => t,
            Scorer::None => &FlatShaper,
        }
    }
}

struct Models {
    grammar: Option<GrammarOracle>,
    tagger: Option<FeatureTagger>,
}

impl Models {
    fn scorer(&self, kind: Option<PotentialKind>) -> Result<Scorer> {
        Ok(match kind {
            Some(PotentialKind::Grammar) => Scorer::Grammar(
                self.grammar
                    .clone()
                    .ok_or_else(|| CliError::input("--grammar is required"))?,
            ),
            Some(PotentialKind::Tagger) => Scorer::Tagger(
                self.tagger
                    .clone()
                    .ok_or_else(|| CliError::input("--tagger is required"))?,
            ),
            Some(PotentialKind::Length) | None => Scorer::None,
        })
    }
}

pub fn run(a: GenerateArgs, seed: Option<u64>, cfg: &Config) -> Result<String> {
    const S: &str = "generate";
    let method = pick_enum(cfg, a.method, S, "method", Method::Smc)?;
    let proposal_kind = pick_enum(cfg, a.proposal, S, "proposal", ProposalKind::Prior)?;
    let default_m = match proposal_kind {
        ProposalKind::Prior => DEFAULT_PARTICLES_PRIOR,
        ProposalKind::Bigram => DEFAULT_PARTICLES_BIGRAM,
    };
    let particles = cfg.pick(a.particles, S, "M", default_m)?;
    let tau = cfg.pick(a.tau, S, "tau", DEFAULT_TAU)?;
    let seed = cfg.pick(seed, S, "seed", 0u64)?;
    let k = cfg.pick_opt(a.k, S, "k")?;
    let max_words = cfg.pick_opt(a.max_words, S, "max_words")?;
    let remote_url = cfg.pick_opt(a.remote_url, S, "remote_url")?;
    let lm_path = cfg.pick_opt(a.lm_path, S, "lm_path")?;
    let default_lm = if remote_url.is_some() && lm_path.is_none() {
        LmKind::Remote
    } else {
        LmKind::Ngram
    };
    let lm_kind = pick_enum(cfg, a.lm, S, "lm", default_lm)?;

    let models = Models {
        grammar: cfg
            .pick_opt(a.grammar, S, "grammar")?
            .map(|g| load_grammar(&g).map(|g| GrammarOracle::new(Arc::new(g))))
            .transpose()?,
        tagger: cfg
            .pick_opt(a.tagger, S, "tagger")?
            .map(FeatureTagger::load)
            .transpose()?,
    };
    let default_potential = if models.grammar.is_some() {
        PotentialKind::Grammar
    } else if models.tagger.is_some() {
        PotentialKind::Tagger
    } else {
        PotentialKind::Length
    };
    let potential_kind = pick_enum(cfg, a.potential, S, "potential", default_potential)?;
    let default_shaper = match potential_kind {
        PotentialKind::Grammar => ShaperKind::Grammar,
        PotentialKind::Tagger => ShaperKind::Tagger,
        PotentialKind::Length => ShaperKind::Flat,
    };
    let shaper_kind = pick_enum(cfg, a.shaper, S, "shaper", default_shaper)?;
    let potential = models.scorer(Some(potential_kind))?;
    let shaper = models.scorer(match shaper_kind {
        ShaperKind::Grammar => Some(PotentialKind::Grammar),
        ShaperKind::Tagger => Some(PotentialKind::Tagger),
        ShaperKind::Flat => None,
    })?;

    let lm = match lm_kind {
        LmKind::Remote => {
            let url = remote_url.ok_or_else(|| CliError::input("--remote-url is required"))?;
            if proposal_kind != ProposalKind::Prior {
                return Err(CliError::input("remote models only support the prior proposal"));
            }
            Lm::Remote(RemoteLm::connect(&url))
        }
        kind => {
            let path = lm_path.ok_or_else(|| CliError::input("--lm-path is required"))?;
            let m = StoredLm::load(&path)?;
            match (&m, kind) {
                (StoredLm::Ngram(_), LmKind::Ngram) | (StoredLm::Tabular(_), LmKind::Tabular) => {}
                _ => {
                    return Err(CliError::input(format!(
                        "{} is not a {kind:?} model",
                        path.display()
                    )))
                }
            }
            Lm::Local(Arc::new(m))
        }
    };
    let bigram = match proposal_kind {
        ProposalKind::Bigram => {
            let path = cfg
                .pick_opt(a.bigram, S, "bigram")?
                .ok_or_else(|| CliError::input("--bigram is required for the bigram proposal"))?;
            Some(Arc::new(PosBigramModel::load(path)?))
        }
        ProposalKind::Prior => None,
    };
    let floor = cfg.pick(a.floor, S, "floor", DEFAULT_FLOOR)?;
    let top_k = cfg.pick(a.top_k, S, "top_k", DEFAULT_TOP_K)?;

    let templates = load_templates(&a.tree)?;
    let method_name = match method {
        Method::Sis => "sis",
        Method::Smc => "smc",
    };
    let mut out = String::new();
    for (i, template) in templates.iter().enumerate() {
        let tags = encode(template.tree());
        let config = RunConfig {
            particles,
            tau,
            max_words,
            seed: seed.wrapping_add(i as u64),
            trace: false,
        };
        let result = match &lm {
            Lm::Local(lm) => {
                let proposal: Box<dyn Proposal> = match &bigram {
                    Some(b) => Box::new(
                        BigramMixtureProposal::new(lm.clone(), b.clone(), template.pos_sequence())
                            .with_floor(floor)
                            .with_top_k(top_k),
                    ),
                    None => Box::new(PriorProposal::new(lm.clone())),
                };
                match method {
                    Method::Sis => sis(lm.as_ref(), proposal.as_ref(), potential.potential(), &tags, &config)?,
                    Method::Smc => smc(
                        lm.as_ref(),
                        proposal.as_ref(),
                        potential.potential(),
                        shaper.shaper(),
                        &tags,
                        &config,
                    )?,
                }
            }
            Lm::Remote(r) => {
                let stepper = RemoteStepper::new(r);
                match method {
                    Method::Sis => run_sis(&stepper, potential.potential(), &tags, &config)?,
                    Method::Smc => run_smc(&stepper, potential.potential(), shaper.shaper(), &tags, &config)?,
                }
            }
        };
        if result.degenerate {
            eprintln!("warning: template {}: every particle has zero weight", i + 1);
        }
        out += &render(&result, &config, method_name, template, k)?;
    }
    Ok(out)
}

fn render(result: &RunResult, config: &RunConfig, method: &str, template: &TreeTemplate, k: Option<usize>) -> Result<String> {
    let Some(k) = k else {
        return Ok(result.to_jsonl(config, method, Some(template.to_string())));
    };
    let header = RunHeader::new(result, config, method, Some(template.to_string()));
    let mut out = serde_json::to_string(&header)? + "\n";
    if result.support.is_empty() {
        return Ok(out);
    }
    let mut rng = keyed_rng(config.seed, u64::MAX - 1, 0);
    for words in sample_outputs(result, k, &mut rng)? {
        let entry = result
            .support
            .iter()
            .find(|e| e.words == words)
            .expect("drawn from the support");
        out += &serde_json::to_string(&SampleRecord::from(entry))?;
        out.push('\n');
    }
    Ok(out)
}
