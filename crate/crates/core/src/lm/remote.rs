//! Client for the LM bridge: a JSON-over-HTTP service exposing a token-level
//! model's next-token distributions, exact token scores, tokenization with
//! word boundaries, and tag-head distributions.
//!
//! Log-probabilities travel as decimal strings. A next-token response lists
//! only the top tokens; the remaining mass is reported as a single
//! `other_mass_logprob`, and the exact log-probability of any token outside
//! the list comes from the score endpoint, never from renormalizing the list.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::LanguageModel;
use crate::logspace::{ext_f64, log_sum_exp, NEG_INF};

pub const NEXT_TOKEN: &str = "/v1/next_token";
pub const SCORE: &str = "/v1/score";
pub const TAGS: &str = "/v1/tags";
pub const TOKENIZE: &str = "/v1/tokenize";

/// Tolerance on `exp-sum(top) + eos + other = 1`.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("cannot reach bridge: {0}")]
    Connection(String),
    #[error("bridge returned HTTP {status}")]
    Http { status: u16 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("no fixture for {endpoint} {request}")]
    MissingFixture { endpoint: String, request: String },
}

/// Moves one JSON request to an endpoint and returns the JSON response.
pub trait Transport: Send + Sync {
    fn post(&self, endpoint: &str, body: &Value) -> Result<Value, BridgeError>;
}

pub struct HttpTransport {
    base: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpTransport {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }
}

impl Transport for HttpTransport {
    fn post(&self, endpoint: &str, body: &Value) -> Result<Value, BridgeError> {
        let url = format!("{}{}", self.base, endpoint);
        let mut resp = self.agent.post(&url).send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(status) => BridgeError::Http { status },
            other => BridgeError::Connection(other.to_string()),
        })?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| BridgeError::Protocol(e.to_string()))
    }
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub endpoint: String,
    pub request: Value,
    pub response: Value,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub transcript: Vec<FixtureEntry>,
}

/// Replays a recorded transcript; requests are matched by endpoint and
/// exact JSON equality.
#[derive(Debug, Clone, Default)]
pub struct FixtureTransport {
    entries: Vec<FixtureEntry>,
}

impl FixtureTransport {
    pub fn new(transcript: Transcript) -> Self {
        FixtureTransport {
            entries: transcript.transcript,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, BridgeError> {
        serde_json::from_str(text)
            .map(Self::new)
            .map_err(|e| BridgeError::Protocol(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BridgeError> {
        let text = fs::read_to_string(path).map_err(|e| BridgeError::Connection(e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn entries(&self) -> &[FixtureEntry] {
        &self.entries
    }
}

impl Transport for FixtureTransport {
    fn post(&self, endpoint: &str, body: &Value) -> Result<Value, BridgeError> {
        self.entries
            .iter()
            .find(|e| e.endpoint == endpoint && &e.request == body)
            .map(|e| e.response.clone())
            .ok_or_else(|| BridgeError::MissingFixture {
                endpoint: endpoint.to_string(),
                request: body.to_string(),
            })
    }
}

/// A candidate token with its exact log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopToken {
    pub id: u32,
    /// Decoded text of the token; a leading space marks a word start.
    #[serde(default)]
    pub text: String,
    #[serde(with = "ext_f64")]
    pub logprob: f64,
}

/// Next-token distribution as reported by a token-level model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub top: Vec<TopToken>,
    #[serde(with = "ext_f64")]
    pub eos_logprob: f64,
    #[serde(with = "ext_f64")]
    pub other_mass_logprob: f64,
}

impl TokenDistribution {
    /// Total probability of the listed tokens, EOS and the remainder.
    pub fn total_mass(&self) -> f64 {
        let mut lps: Vec<f64> = self.top.iter().map(|t| t.logprob).collect();
        lps.push(self.eos_logprob);
        lps.push(self.other_mass_logprob);
        log_sum_exp(&lps).exp()
    }

    pub fn check_mass(&self) -> Result<(), BridgeError> {
        let total = self.total_mass();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(BridgeError::Protocol(format!(
                "next-token mass sums to {total}"
            )));
        }
        Ok(())
    }

    pub fn find(&self, id: u32) -> Option<&TopToken> {
        self.top.iter().find(|t| t.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tokenized {
    pub tokens: Vec<u32>,
    pub word_ends: Vec<bool>,
}

/// Odd- and even-slot tag distributions at the last token of a prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TagLogprobs {
    pub odd: BTreeMap<String, f64>,
    pub even: BTreeMap<String, f64>,
}

/// A model whose units are subword tokens rather than words.
pub trait TokenLm: Send + Sync {
    fn next_token(&self, prefix: &[u32]) -> Result<TokenDistribution, BridgeError>;

    /// Exact `log p(token | prefix)` for any token.
    fn score(&self, prefix: &[u32], token: u32) -> Result<f64, BridgeError>;

    fn tokenize(&self, text: &str) -> Result<Tokenized, BridgeError>;

    /// True when every token is a whole word.
    fn word_level(&self) -> bool {
        false
    }

    /// `log p(token | prefix)` using the listed entry when present.
    fn token_logprob(&self, prefix: &[u32], token: u32) -> Result<f64, BridgeError> {
        let dist = self.next_token(prefix)?;
        match dist.find(token) {
            Some(t) => Ok(t.logprob),
            None => self.score(prefix, token),
        }
    }

    /// `log p(text)` over its tokenization, EOS included.
    fn text_logprob(&self, text: &str) -> Result<f64, BridgeError> {
        let tok = self.tokenize(text)?;
        let mut total = 0.0;
        for i in 0..tok.tokens.len() {
            total += self.token_logprob(&tok.tokens[..i], tok.tokens[i])?;
        }
        total += self.next_token(&tok.tokens)?.eos_logprob;
        Ok(total)
    }
}

fn logprob_value(x: f64) -> Value {
    if x.is_finite() {
        Value::String(format!("{x:?}"))
    } else if x < 0.0 {
        Value::String("-inf".into())
    } else {
        Value::String("inf".into())
    }
}

fn parse_logprob(v: &Value) -> Result<f64, BridgeError> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| BridgeError::Protocol(format!("bad number {n}"))),
        Value::String(s) => ext_f64::parse(s)
            .ok_or_else(|| BridgeError::Protocol(format!("bad logprob {s:?}"))),
        other => Err(BridgeError::Protocol(format!("bad logprob {other}"))),
    }
}

fn parse_tag_map(v: &Value) -> Result<BTreeMap<String, f64>, BridgeError> {
    let obj = v
        .as_object()
        .ok_or_else(|| BridgeError::Protocol("tag map must be an object".into()))?;
    obj.iter()
        .map(|(k, v)| Ok((k.clone(), parse_logprob(v)?)))
        .collect()
}

/// Token-level model served by the bridge.
pub struct RemoteLm {
    transport: Arc<dyn Transport>,
}

impl RemoteLm {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        RemoteLm { transport }
    }

    pub fn connect(base_url: &str) -> Self {
        Self::new(Arc::new(HttpTransport::new(base_url)))
    }

    pub fn tags(&self, prefix: &[u32]) -> Result<TagLogprobs, BridgeError> {
        let v = self
            .transport
            .post(TAGS, &json!({ "prefix_tokens": prefix }))?;
        let tags = TagLogprobs {
            odd: parse_tag_map(&v["odd"])?,
            even: parse_tag_map(&v["even"])?,
        };
        for (name, map) in [("odd", &tags.odd), ("even", &tags.even)] {
            let total = log_sum_exp(&map.values().copied().collect::<Vec<_>>()).exp();
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return Err(BridgeError::Protocol(format!(
                    "{name} tag distribution sums to {total}"
                )));
            }
        }
        Ok(tags)
    }
}

impl TokenLm for RemoteLm {
    fn next_token(&self, prefix: &[u32]) -> Result<TokenDistribution, BridgeError> {
        let v = self
            .transport
            .post(NEXT_TOKEN, &json!({ "prefix_tokens": prefix }))?;
        let top = v["top"]
            .as_array()
            .ok_or_else(|| BridgeError::Protocol("missing top list".into()))?
            .iter()
            .map(|e| {
                let id = e["id"]
                    .as_u64()
                    .ok_or_else(|| BridgeError::Protocol(format!("bad token id in {e}")))?;
                Ok(TopToken {
                    id: id as u32,
                    text: e["text"].as_str().unwrap_or_default().to_string(),
                    logprob: parse_logprob(&e["logprob"])?,
                })
            })
            .collect::<Result<Vec<_>, BridgeError>>()?;
        let dist = TokenDistribution {
            top,
            eos_logprob: parse_logprob(&v["eos_logprob"])?,
            other_mass_logprob: parse_logprob(&v["other_mass_logprob"])?,
        };
        dist.check_mass()?;
        Ok(dist)
    }

    fn score(&self, prefix: &[u32], token: u32) -> Result<f64, BridgeError> {
        let v = self.transport.post(
            SCORE,
            &json!({ "prefix_tokens": prefix, "token_id": token }),
        )?;
        parse_logprob(&v["logprob"])
    }

    fn tokenize(&self, text: &str) -> Result<Tokenized, BridgeError> {
        let v = self.transport.post(TOKENIZE, &json!({ "text": text }))?;
        let tok: Tokenized =
            serde_json::from_value(v).map_err(|e| BridgeError::Protocol(e.to_string()))?;
        if tok.tokens.len() != tok.word_ends.len() {
            return Err(BridgeError::Protocol(
                "tokens and word_ends differ in length".into(),
            ));
        }
        Ok(tok)
    }
}

/// Serializes a response body the way the bridge does, for building
/// fixtures.
pub fn next_token_response(dist: &TokenDistribution) -> Value {
    json!({
        "top": dist.top.iter().map(|t| json!({
            "id": t.id, "text": t.text, "logprob": logprob_value(t.logprob)
        })).collect::<Vec<_>>(),
        "eos_logprob": logprob_value(dist.eos_logprob),
        "other_mass_logprob": logprob_value(dist.other_mass_logprob),
    })
}

/// Exposes a word-level [`LanguageModel`] through the token interface:
/// token ids are vocabulary ids and every token is a whole word.
pub struct WordTokens<L> {
    lm: L,
}

impl<L: LanguageModel> WordTokens<L> {
    pub fn new(lm: L) -> Self {
        WordTokens { lm }
    }

    fn words(&self, prefix: &[u32]) -> Vec<String> {
        let vocab = self.lm.vocabulary();
        prefix
            .iter()
            .map(|&i| vocab.word(i as usize).to_string())
            .collect()
    }
}

impl<L: LanguageModel> TokenLm for WordTokens<L> {
    fn next_token(&self, prefix: &[u32]) -> Result<TokenDistribution, BridgeError> {
        let dist = self
            .lm
            .conditional(&self.words(prefix))
            .map_err(|e| BridgeError::Protocol(e.to_string()))?;
        let vocab = dist.vocabulary().clone();
        Ok(TokenDistribution {
            top: (0..vocab.len())
                .map(|i| TopToken {
                    id: i as u32,
                    text: vocab.word(i).to_string(),
                    logprob: dist.logprobs()[i],
                })
                .collect(),
            eos_logprob: dist.eos_logprob(),
            other_mass_logprob: NEG_INF,
        })
    }

    fn score(&self, prefix: &[u32], token: u32) -> Result<f64, BridgeError> {
        let dist = self
            .lm
            .conditional(&self.words(prefix))
            .map_err(|e| BridgeError::Protocol(e.to_string()))?;
        Ok(dist.logprobs()[token as usize])
    }

    fn tokenize(&self, text: &str) -> Result<Tokenized, BridgeError> {
        let vocab = self.lm.vocabulary();
        let tokens = text
            .split_whitespace()
            .map(|w| {
                vocab
                    .id(w)
                    .map(|i| i as u32)
                    .ok_or_else(|| BridgeError::Protocol(format!("unknown word {w:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let word_ends = vec![true; tokens.len()];
        Ok(Tokenized { tokens, word_ends })
    }

    fn word_level(&self) -> bool {
        true
    }
}
