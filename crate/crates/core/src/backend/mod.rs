//! Completion backends. The live HTTP client and the scripted replay backend
//! share one trait so the orchestrator never knows which one it is talking to.

mod http;
mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{Prompt, Stage};

pub use http::{BackendConfig, HttpBackend, Secret, API_KEY_ENV};
pub use scripted::{Fixture, Matcher, Persona, Script, ScriptedBackend};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure (status {status:?}): {body_excerpt}")]
    Transport {
        status: Option<u16>,
        body_excerpt: String,
    },
    #[error("request timed out")]
    Timeout,
    #[error("authentication rejected by the endpoint")]
    AuthFailure,
    #[error("backend returned no completion text")]
    EmptyCompletion,
    #[error("script exhausted at stage {stage} (call #{ordinal})")]
    ScriptExhausted { stage: String, ordinal: usize },
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
}

impl BackendError {
    /// Infrastructure failures abort a session without touching the refine
    /// budget; everything else is the model's fault.
    pub fn is_infrastructure(&self) -> bool {
        !matches!(self, BackendError::EmptyCompletion)
    }
}

pub trait CompletionBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, prompt: &Prompt) -> Result<Completion, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Wall-clock milliseconds. Never serialized, so transcripts stay byte-stable.
    #[serde(skip)]
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingPolicy {
    pub plan_temperature: f64,
    pub synth_temperature: f64,
    pub refine_temperature: f64,
}

impl Default for DecodingPolicy {
    fn default() -> Self {
        Self {
            plan_temperature: 0.1,
            synth_temperature: 0.25,
            refine_temperature: 0.25,
        }
    }
}

pub const PLAN_TEMPERATURE_RANGE: (f64, f64) = (0.0, 0.2);
pub const SYNTH_TEMPERATURE_RANGE: (f64, f64) = (0.2, 0.3);

impl DecodingPolicy {
    pub fn temperature_for(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Plan => self.plan_temperature,
            Stage::Synthesize => self.synth_temperature,
            Stage::Refine => self.refine_temperature,
        }
    }

    /// Out-of-band temperatures are allowed but reported.
    pub fn warnings(&self) -> Vec<String> {
        let check = |name: &str, v: f64, (lo, hi): (f64, f64)| {
            (!(lo..=hi).contains(&v))
                .then(|| format!("{name} {v} is outside the recommended range [{lo}, {hi}]"))
        };
        [
            check("plan_temperature", self.plan_temperature, PLAN_TEMPERATURE_RANGE),
            check("synth_temperature", self.synth_temperature, SYNTH_TEMPERATURE_RANGE),
            check("refine_temperature", self.refine_temperature, SYNTH_TEMPERATURE_RANGE),
        ]
        .into_iter()
        .flatten()
        .collect()
    }
}

/// Character-count token estimate, used whenever a provider reports no usage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenEstimator {
    pub chars_per_token: f64,
}

impl Default for TokenEstimator {
    fn default() -> Self {
        Self { chars_per_token: 4.0 }
    }
}

impl TokenEstimator {
    pub fn estimate(&self, text: &str) -> u64 {
        (text.chars().count() as f64 / self.chars_per_token).ceil() as u64
    }

    /// Tokens for everything sent: system message plus rendered sections.
    pub fn estimate_prompt(&self, prompt: &Prompt) -> u64 {
        self.estimate(prompt.system_message()) + self.estimate(&prompt.render())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
