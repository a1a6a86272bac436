use serde::{Deserialize, Serialize};

use super::{RunConfig, RunResult, StepDiagnostics, SupportEntry};
use crate::logspace::ext_f64;

/// First line of a run's JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    #[serde(with = "ext_f64")]
    pub z_hat: f64,
    #[serde(rename = "M")]
    pub particles: usize,
    pub tau: f64,
    pub seed: u64,
    pub method: String,
    #[serde(default)]
    pub template: Option<String>,
    pub degenerate: bool,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl RunHeader {
    pub fn new(result: &RunResult, config: &RunConfig, method: &str, template: Option<String>) -> Self {
        RunHeader {
            z_hat: result.z_hat(),
            particles: config.particles,
            tau: config.tau,
            seed: config.seed,
            method: method.to_string(),
            template,
            degenerate: result.degenerate,
            diagnostics: result.diagnostics.clone(),
        }
    }
}

/// One generated string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub text: String,
    pub words: Vec<String>,
    pub weight: f64,
    #[serde(with = "ext_f64")]
    pub logprior: f64,
    #[serde(with = "ext_f64")]
    pub logpotential: f64,
}

impl From<&SupportEntry> for SampleRecord {
    fn from(e: &SupportEntry) -> Self {
        SampleRecord {
            text: e.words.join(" "),
            words: e.words.clone(),
            weight: e.weight,
            logprior: e.log_prior,
            logpotential: e.log_potential,
        }
    }
}

impl RunResult {
    /// Header line followed by one line per supported string.
    pub fn to_jsonl(&self, config: &RunConfig, method: &str, template: Option<String>) -> String {
        let mut out = serde_json::to_string(&RunHeader::new(self, config, method, template))
            .expect("serializable");
        out.push('\n');
        for e in &self.support {
            out += &serde_json::to_string(&SampleRecord::from(e)).expect("serializable");
            out.push('\n');
        }
        out
    }
}
