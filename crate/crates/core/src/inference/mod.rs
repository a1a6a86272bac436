//! Sequential importance sampling and sequential Monte Carlo over words.
//!
//! Weights live in log space. A particle's weight after it completes is
//! `∏ p/q · ψ(y)` whatever the shaping, since shaping ratios telescope.

mod output;
mod remote;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use output::{RunHeader, SampleRecord};
pub use remote::{advance_word, RemoteStepper, WordDraw, DEFAULT_MAX_TOKENS};

use crate::lm::remote::BridgeError;
use crate::lm::{LanguageModel, LmError};
use crate::logspace::{accumulate, ext_f64, log_sum_exp, NEG_INF};
use crate::proposals::{Proposal, ProposalError};
use crate::taggers::{Potential, Shaper};
use crate::tetratag::TagSequence;

pub const DEFAULT_TAU: f64 = 0.25;
pub const DEFAULT_PARTICLES_PRIOR: usize = 20;
pub const DEFAULT_PARTICLES_BIGRAM: usize = 6;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Proposal(#[from] ProposalError),
    #[error(transparent)]
    Remote(#[from] BridgeError),
    #[error("no word boundary within {0} tokens")]
    BoundaryUndetected(usize),
    #[error("all weights are zero")]
    AllZeroWeights,
    #[error("run is degenerate: every weight is zero")]
    DegenerateRun,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub particles: usize,
    pub tau: f64,
    /// Word budget; EOS is forced once a particle has this many words.
    /// Defaults to the target's word count.
    pub max_words: Option<usize>,
    pub seed: u64,
    /// Record every particle's log weight after each step.
    pub trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            particles: DEFAULT_PARTICLES_PRIOR,
            tau: DEFAULT_TAU,
            max_words: None,
            seed: 0,
            trace: false,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), InferenceError> {
        if self.particles == 0 {
            return Err(InferenceError::InvalidConfig("need at least one particle".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(InferenceError::InvalidConfig("tau must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub words: Vec<String>,
    #[serde(with = "ext_f64")]
    pub log_weight: f64,
    /// True while the string is incomplete.
    pub active: bool,
    /// `log φ` of the current prefix.
    #[serde(with = "ext_f64")]
    pub log_shape: f64,
    /// Running `Σ log p`, EOS included once complete.
    #[serde(with = "ext_f64")]
    pub log_prior: f64,
    /// Running `Σ log q`.
    #[serde(with = "ext_f64")]
    pub log_proposal: f64,
    /// `log ψ`, set on completion.
    #[serde(with = "ext_f64::option", default)]
    pub log_potential: Option<f64>,
}

impl Particle {
    fn new(log_shape: f64) -> Self {
        Particle {
            words: Vec::new(),
            log_weight: log_shape,
            active: true,
            log_shape,
            log_prior: 0.0,
            log_proposal: 0.0,
            log_potential: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub ess: f64,
    pub resampled: bool,
    pub active_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEntry {
    pub words: Vec<String>,
    /// Normalized posterior weight.
    pub weight: f64,
    #[serde(with = "ext_f64")]
    pub log_prior: f64,
    #[serde(with = "ext_f64")]
    pub log_potential: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    #[serde(with = "ext_f64")]
    pub log_z_hat: f64,
    pub support: Vec<SupportEntry>,
    pub particles: Vec<Particle>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Every weight is zero; `support` is empty.
    pub degenerate: bool,
    /// Per step, each particle's log weight before resampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<Vec<f64>>>,
}

impl RunResult {
    pub fn z_hat(&self) -> f64 {
        self.log_z_hat.exp()
    }

    /// Normalized weight of each distinct string.
    pub fn posterior(&self) -> HashMap<Vec<String>, f64> {
        self.support
            .iter()
            .map(|e| (e.words.clone(), e.weight))
            .collect()
    }
}

/// What one stepping call produced: a word or EOS, with its log prior and
/// log proposal probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: Option<String>,
    pub log_p: f64,
    pub log_q: f64,
}

/// Extends a prefix by one word or EOS.
pub trait Stepper: Send + Sync {
    /// With `force_eos` the step must end the string, with `log_q = 0`.
    fn step(
        &self,
        prefix: &[String],
        force_eos: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepOutcome, InferenceError>;
}

/// Word-level stepping with a built-in model and any proposal.
pub struct WordStepper<'a> {
    lm: &'a dyn LanguageModel,
    proposal: &'a dyn Proposal,
}

impl<'a> WordStepper<'a> {
    pub fn new(lm: &'a dyn LanguageModel, proposal: &'a dyn Proposal) -> Self {
        WordStepper { lm, proposal }
    }
}

impl Stepper for WordStepper<'_> {
    fn step(
        &self,
        prefix: &[String],
        force_eos: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepOutcome, InferenceError> {
        let prior = self.lm.conditional(prefix)?;
        if force_eos {
            return Ok(StepOutcome {
                next: None,
                log_p: prior.eos_logprob(),
                log_q: 0.0,
            });
        }
        let q = self.proposal.propose(prefix)?;
        let sym = q.sample(rng);
        Ok(StepOutcome {
            next: q.word_string(sym).map(str::to_string),
            log_p: prior.logprob(sym),
            log_q: q.logprob(sym),
        })
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const RESAMPLE_STREAM: u64 = u64::MAX;

/// Generator for one `(seed, stream, step)` key. Particle `m` uses stream
/// `m`; resampling uses its own stream.
pub fn keyed_rng(seed: u64, stream: u64, step: u64) -> ChaCha8Rng {
    let k = splitmix(splitmix(splitmix(seed) ^ stream) ^ step.rotate_left(32));
    ChaCha8Rng::seed_from_u64(k)
}

/// `(Σw)² / Σw²` from log weights.
pub fn log_ess(log_weights: &[f64]) -> Result<f64, InferenceError> {
    let s = log_sum_exp(log_weights);
    if s == NEG_INF {
        return Err(InferenceError::AllZeroWeights);
    }
    let sq: Vec<f64> = log_weights.iter().map(|w| 2.0 * w).collect();
    Ok(2.0 * s - log_sum_exp(&sq))
}

pub fn ess(weights: &[f64]) -> Result<f64, InferenceError> {
    let logs: Vec<f64> = weights.iter().map(|&w| crate::logspace::ln(w)).collect();
    Ok(log_ess(&logs)?.exp())
}

/// Draws `count` indices with replacement, proportionally to `exp(w)`.
pub fn multinomial<R: Rng + ?Sized>(log_weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let max = log_weights.iter().copied().fold(NEG_INF, f64::max);
    let mut cum = Vec::with_capacity(log_weights.len());
    let mut acc = 0.0;
    for &w in log_weights {
        acc += (w - max).exp();
        cum.push(acc);
    }
    (0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * acc;
            let i = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
            // never land on a zero-weight entry through rounding
            (0..=i).rev().find(|&j| log_weights[j] > NEG_INF).unwrap_or(i)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleOutcome {
    pub ess: f64,
    pub resampled: bool,
}

/// Multinomial resampling when `ESS < tau · M`; survivors all carry the
/// average weight and keep their active flags.
pub fn resample<R: Rng + ?Sized>(
    particles: &mut Vec<Particle>,
    tau: f64,
    rng: &mut R,
) -> Result<ResampleOutcome, InferenceError> {
    let m = particles.len();
    let logs: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
    let ess = log_ess(&logs)?.exp();
    if ess >= tau * m as f64 {
        return Ok(ResampleOutcome {
            ess,
            resampled: false,
        });
    }
    let mean = log_sum_exp(&logs) - (m as f64).ln();
    let picks = multinomial(&logs, m, rng);
    let mut next: Vec<Particle> = picks.iter().map(|&i| particles[i].clone()).collect();
    for p in &mut next {
        p.log_weight = mean;
    }
    *particles = next;
    Ok(ResampleOutcome {
        ess,
        resampled: true,
    })
}

struct Engine<'a> {
    stepper: &'a dyn Stepper,
    potential: &'a dyn Potential,
    shaper: Option<&'a dyn Shaper>,
    target: &'a TagSequence,
    config: &'a RunConfig,
}

impl Engine<'_> {
    fn advance(&self, p: &mut Particle, m: usize, step: usize) -> Result<(), InferenceError> {
        let budget = self.config.max_words.unwrap_or(self.target.word_count());
        let mut rng = keyed_rng(self.config.seed, m as u64, step as u64);
        let out = self
            .stepper
            .step(&p.words, p.words.len() >= budget, &mut rng)?;
        p.log_prior = accumulate(p.log_prior, out.log_p);
        p.log_proposal += out.log_q;
        let ratio = out.log_p - out.log_q;
        match out.next {
            Some(word) => {
                p.words.push(word);
                let shape = match self.shaper {
                    Some(s) => s.log_extend(&p.words, p.log_shape, self.target),
                    None => 0.0,
                };
                p.log_weight = accumulate(p.log_weight, ratio + shape - p.log_shape);
                p.log_shape = shape;
                if p.log_weight == NEG_INF && self.shaper.is_some() {
                    // no completion can recover a zero weight
                    p.active = false;
                }
            }
            None => {
                let psi = self.potential.log_likelihood(&p.words, self.target);
                p.log_potential = Some(psi);
                p.log_weight = accumulate(p.log_weight, ratio + psi - p.log_shape);
                p.active = false;
            }
        }
        Ok(())
    }

    fn run(&self, resampling: bool) -> Result<RunResult, InferenceError> {
        self.config.validate()?;
        let m = self.config.particles;
        let init = match self.shaper {
            Some(s) => s.log_empty(self.target),
            None => 0.0,
        };
        let mut particles = vec![Particle::new(init); m];
        let mut diagnostics = Vec::new();
        let mut trace = self.config.trace.then(Vec::new);
        let mut degenerate = false;
        let mut step = 0;
        while particles.iter().any(|p| p.active) {
            particles
                .par_iter_mut()
                .enumerate()
                .filter(|(_, p)| p.active)
                .map(|(i, p)| self.advance(p, i, step))
                .collect::<Result<Vec<()>, _>>()?;
            if let Some(t) = trace.as_mut() {
                t.push(particles.iter().map(|p| p.log_weight).collect());
            }
            let logs: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
            let outcome = if resampling && self.config.tau > 0.0 {
                let mut rng = keyed_rng(self.config.seed, RESAMPLE_STREAM, step as u64);
                match resample(&mut particles, self.config.tau, &mut rng) {
                    Ok(o) => o,
                    Err(InferenceError::AllZeroWeights) => {
                        degenerate = true;
                        ResampleOutcome {
                            ess: 0.0,
                            resampled: false,
                        }
                    }
                    Err(e) => return Err(e),
                }
            } else {
                ResampleOutcome {
                    ess: log_ess(&logs).map_or(0.0, f64::exp),
                    resampled: false,
                }
            };
            diagnostics.push(StepDiagnostics {
                step,
                ess: outcome.ess,
                resampled: outcome.resampled,
                active_count: particles.iter().filter(|p| p.active).count(),
            });
            step += 1;
            if degenerate {
                for p in &mut particles {
                    p.active = false;
                }
            }
        }
        Ok(finish(particles, diagnostics, trace))
    }
}

fn finish(
    particles: Vec<Particle>,
    diagnostics: Vec<StepDiagnostics>,
    trace: Option<Vec<Vec<f64>>>,
) -> RunResult {
    let logs: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
    let total = log_sum_exp(&logs);
    let log_z_hat = total - (particles.len() as f64).ln();
    let mut support: Vec<SupportEntry> = Vec::new();
    let mut index: HashMap<&[String], usize> = HashMap::new();
    if total > NEG_INF {
        for p in &particles {
            if p.log_weight == NEG_INF {
                continue;
            }
            let w = (p.log_weight - total).exp();
            match index.get(p.words.as_slice()) {
                Some(&i) => support[i].weight += w,
                None => {
                    index.insert(&p.words, support.len());
                    support.push(SupportEntry {
                        words: p.words.clone(),
                        weight: w,
                        log_prior: p.log_prior,
                        log_potential: p.log_potential.unwrap_or(NEG_INF),
                    });
                }
            }
        }
    }
    RunResult {
        log_z_hat,
        degenerate: support.is_empty(),
        support,
        particles,
        diagnostics,
        trace,
    }
}

/// Sequential importance sampling: weights `∏ p/q`, times `ψ` at EOS.
pub fn run_sis(
    stepper: &dyn Stepper,
    potential: &dyn Potential,
    target: &TagSequence,
    config: &RunConfig,
) -> Result<RunResult, InferenceError> {
    Engine {
        stepper,
        potential,
        shaper: None,
        target,
        config,
    }
    .run(false)
}

/// Sequential Monte Carlo with shaping and ESS-triggered resampling.
pub fn run_smc(
    stepper: &dyn Stepper,
    potential: &dyn Potential,
    shaper: &dyn Shaper,
    target: &TagSequence,
    config: &RunConfig,
) -> Result<RunResult, InferenceError> {
    Engine {
        stepper,
        potential,
        shaper: Some(shaper),
        target,
        config,
    }
    .run(true)
}

pub fn sis(
    lm: &dyn LanguageModel,
    proposal: &dyn Proposal,
    potential: &dyn Potential,
    target: &TagSequence,
    config: &RunConfig,
) -> Result<RunResult, InferenceError> {
    run_sis(&WordStepper::new(lm, proposal), potential, target, config)
}

pub fn smc(
    lm: &dyn LanguageModel,
    proposal: &dyn Proposal,
    potential: &dyn Potential,
    shaper: &dyn Shaper,
    target: &TagSequence,
    config: &RunConfig,
) -> Result<RunResult, InferenceError> {
    run_smc(
        &WordStepper::new(lm, proposal),
        potential,
        shaper,
        target,
        config,
    )
}

/// `k` independent draws from the run's posterior approximation.
pub fn sample_outputs<R: Rng + ?Sized>(
    result: &RunResult,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<String>>, InferenceError> {
    if result.support.is_empty() {
        return Err(InferenceError::DegenerateRun);
    }
    let logs: Vec<f64> = result
        .support
        .iter()
        .map(|e| crate::logspace::ln(e.weight))
        .collect();
    Ok(multinomial(&logs, k, rng)
        .into_iter()
        .map(|i| result.support[i].words.clone())
        .collect())
}
