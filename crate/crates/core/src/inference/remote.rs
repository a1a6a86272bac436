use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{InferenceError, StepOutcome, Stepper};
use crate::lm::remote::{TokenDistribution, TokenLm};
use crate::logspace::{log_sum_exp, NEG_INF};

pub const DEFAULT_MAX_TOKENS: usize = 16;

/// A word (or EOS) assembled from tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct WordDraw {
    /// `None` for EOS.
    pub word: Option<String>,
    pub tokens: Vec<u32>,
    /// Per committed token, `log p - log q`.
    pub log_ratios: Vec<f64>,
    pub log_p: f64,
    pub log_q: f64,
}

enum Draw {
    Token(usize),
    Eos,
}

/// Samples from the listed tokens and EOS, renormalized; returns the draw
/// with its log proposal probability.
fn draw<R: Rng + ?Sized>(dist: &TokenDistribution, rng: &mut R) -> (Draw, f64) {
    let mut logs: Vec<f64> = dist.top.iter().map(|t| t.logprob).collect();
    logs.push(dist.eos_logprob);
    let z = log_sum_exp(&logs);
    let i = crate::lm::sample_index(&logs, rng);
    let lq = logs[i] - z;
    if i == dist.top.len() {
        (Draw::Eos, lq)
    } else {
        (Draw::Token(i), lq)
    }
}

/// Samples tokens until the next one would start a new word.
///
/// The proposal is the model's listed tokens plus EOS, renormalized. A
/// token whose text starts with whitespace, or EOS, ends a nonempty word;
/// that token is only peeked and is not part of the returned word. A
/// word-level model yields exactly one token.
pub fn advance_word<R: Rng + ?Sized>(
    lm: &dyn TokenLm,
    prefix_tokens: &[u32],
    max_tokens: usize,
    rng: &mut R,
) -> Result<WordDraw, InferenceError> {
    let mut context = prefix_tokens.to_vec();
    let mut out = WordDraw {
        word: None,
        tokens: Vec::new(),
        log_ratios: Vec::new(),
        log_p: 0.0,
        log_q: 0.0,
    };
    let mut word = String::new();
    loop {
        let dist = lm.next_token(&context)?;
        let (d, lq) = draw(&dist, rng);
        let (text, lp, id) = match d {
            Draw::Eos => {
                if word.is_empty() {
                    out.log_p = dist.eos_logprob;
                    out.log_q = lq;
                    out.log_ratios.push(dist.eos_logprob - lq);
                    return Ok(out);
                }
                break;
            }
            Draw::Token(i) => {
                let t = &dist.top[i];
                (t.text.as_str(), t.logprob, t.id)
            }
        };
        let starts_word = text.starts_with(char::is_whitespace);
        if starts_word && !word.is_empty() {
            break;
        }
        if out.tokens.len() == max_tokens {
            return Err(InferenceError::BoundaryUndetected(max_tokens));
        }
        word.push_str(text.trim_start());
        out.tokens.push(id);
        out.log_ratios.push(lp - lq);
        out.log_p += lp;
        out.log_q += lq;
        context.push(id);
        if lm.word_level() {
            break;
        }
    }
    out.word = Some(word);
    Ok(out)
}

/// Steps words through a token-level model, proposing from its own listed
/// tokens. Prefixes are re-tokenized from their text at every step.
pub struct RemoteStepper<'a> {
    lm: &'a dyn TokenLm,
    max_tokens: usize,
}

impl<'a> RemoteStepper<'a> {
    pub fn new(lm: &'a dyn TokenLm) -> Self {
        RemoteStepper {
            lm,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_max_tokens(mut self, n: usize) -> Self {
        self.max_tokens = n;
        self
    }

    fn tokens(&self, prefix: &[String]) -> Result<Vec<u32>, InferenceError> {
        if prefix.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.lm.tokenize(&prefix.join(" "))?.tokens)
    }
}

impl Stepper for RemoteStepper<'_> {
    fn step(
        &self,
        prefix: &[String],
        force_eos: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepOutcome, InferenceError> {
        let tokens = self.tokens(prefix)?;
        if force_eos {
            let dist = self.lm.next_token(&tokens)?;
            return Ok(StepOutcome {
                next: None,
                log_p: dist.eos_logprob,
                log_q: 0.0,
            });
        }
        let d = advance_word(self.lm, &tokens, self.max_tokens, rng)?;
        if d.word.as_deref() == Some("") {
            return Ok(StepOutcome {
                next: None,
                log_p: NEG_INF,
                log_q: d.log_q,
            });
        }
        Ok(StepOutcome {
            next: d.word,
            log_p: d.log_p,
            log_q: d.log_q,
        })
    }
}
