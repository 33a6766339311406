//! Fixture-driven deterministic backend.
//!
//! Fixtures are consumed in order: a call takes the first unconsumed fixture
//! whose stage, per-stage ordinal and content matcher all accept the prompt.
//! `repeat` fixtures are never consumed.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, Completion, CompletionBackend, TokenEstimator};
use crate::prompt::{Prompt, Stage};

pub const SCRIPTED_MODEL_ID: &str = "scripted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Regex over the rendered user message.
    Regex(String),
    Contains(String),
    /// Hex SHA-256 of the rendered user message.
    PromptSha256(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persona {
    /// Rewrites every quoted occurrence of `field` in the response into its
    /// lower-cased, space-free form ("New cases" -> "newcases").
    EmitBadField { field: String },
    EmitMalformedObject,
    EmitEmpty,
}

impl Persona {
    fn apply(&self, response: &str) -> String {
        match self {
            Persona::EmitBadField { field } => {
                let mangled: String = field
                    .chars()
                    .filter(|c| !c.is_whitespace())
                    .flat_map(char::to_lowercase)
                    .collect();
                response.replace(&format!("\"{field}\""), &format!("\"{mangled}\""))
            }
            Persona::EmitMalformedObject => "{\"pipeline\": [{\"op\": \"select\", \"columns\": [".to_string(),
            Persona::EmitEmpty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matcher: Option<Matcher>,
    #[serde(default)]
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<Persona>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
}

impl Fixture {
    pub fn for_stage(stage: Stage, response: impl Into<String>) -> Self {
        Self {
            stage: Some(stage),
            ordinal: None,
            matcher: None,
            response: response.into(),
            persona: None,
            repeat: false,
        }
    }

    pub fn with_persona(mut self, persona: Persona) -> Self {
        self.persona = Some(persona);
        self
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default = "default_model_id")]
    pub model_id: String,
    pub fixtures: Vec<Fixture>,
}

fn default_model_id() -> String {
    SCRIPTED_MODEL_ID.to_string()
}

impl Script {
    pub fn new(fixtures: Vec<Fixture>) -> Self {
        Self {
            model_id: default_model_id(),
            fixtures,
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            BackendError::InvalidConfig(format!("cannot read script {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            BackendError::InvalidConfig(format!("invalid script {}: {e}", path.display()))
        })
    }
}

struct CompiledFixture {
    fixture: Fixture,
    regex: Option<Regex>,
}

impl CompiledFixture {
    fn accepts(&self, stage: Stage, ordinal: usize, text: &str) -> bool {
        if self.fixture.stage.is_some_and(|s| s != stage) {
            return false;
        }
        if self.fixture.ordinal.is_some_and(|o| o != ordinal) {
            return false;
        }
        match &self.fixture.matcher {
            None => true,
            Some(Matcher::Regex(_)) => self.regex.as_ref().is_some_and(|r| r.is_match(text)),
            Some(Matcher::Contains(needle)) => text.contains(needle.as_str()),
            Some(Matcher::PromptSha256(hash)) => {
                hex::encode(Sha256::digest(text.as_bytes())).eq_ignore_ascii_case(hash)
            }
        }
    }
}

struct State {
    consumed: Vec<bool>,
    stage_calls: HashMap<Stage, usize>,
}

pub struct ScriptedBackend {
    model_id: String,
    fixtures: Vec<CompiledFixture>,
    estimator: TokenEstimator,
    // one lock per call keeps ordinals well-defined under concurrent use
    state: Mutex<State>,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Result<Self, BackendError> {
        if script.fixtures.is_empty() {
            return Err(BackendError::InvalidConfig("script has no fixtures".into()));
        }
        let fixtures = script
            .fixtures
            .into_iter()
            .map(|fixture| {
                let regex = match &fixture.matcher {
                    Some(Matcher::Regex(pattern)) => Some(Regex::new(pattern).map_err(|e| {
                        BackendError::InvalidConfig(format!("bad fixture regex: {e}"))
                    })?),
                    _ => None,
                };
                Ok(CompiledFixture { fixture, regex })
            })
            .collect::<Result<Vec<_>, BackendError>>()?;
        Ok(Self {
            model_id: script.model_id,
            state: Mutex::new(State {
                consumed: vec![false; fixtures.len()],
                stage_calls: HashMap::new(),
            }),
            fixtures,
            estimator: TokenEstimator::default(),
        })
    }

    pub fn with_estimator(mut self, estimator: TokenEstimator) -> Self {
        self.estimator = estimator;
        self
    }

    /// Fixtures not yet consumed (repeat fixtures always count as remaining).
    pub fn remaining(&self) -> usize {
        let state = self.state.lock().expect("script lock");
        state.consumed.iter().filter(|c| !**c).count()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, prompt: &Prompt) -> Result<Completion, BackendError> {
        let text = prompt.render();
        let mut state = self.state.lock().expect("script lock");
        let ordinal = {
            let n = state.stage_calls.entry(prompt.stage).or_default();
            let current = *n;
            *n += 1;
            current
        };
        let index = (0..self.fixtures.len())
            .find(|&i| !state.consumed[i] && self.fixtures[i].accepts(prompt.stage, ordinal, &text))
            .ok_or_else(|| BackendError::ScriptExhausted {
                stage: prompt.stage.to_string(),
                ordinal,
            })?;
        let fixture = &self.fixtures[index].fixture;
        if !fixture.repeat {
            state.consumed[index] = true;
        }
        drop(state);

        let response = match &fixture.persona {
            Some(persona) => persona.apply(&fixture.response),
            None => fixture.response.clone(),
        };
        Ok(Completion {
            prompt_tokens: self.estimator.estimate_prompt(prompt),
            completion_tokens: self.estimator.estimate(&response),
            text: response,
            latency_ms: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(stage: Stage, body: &str) -> Prompt {
        Prompt::new(stage, 0.1).section("Body", body)
    }

    #[test]
    fn returns_fixture_verbatim() {
        let b = ScriptedBackend::new(Script::new(vec![Fixture::for_stage(Stage::Plan, "hello")])).unwrap();
        let c = b.complete(&prompt(Stage::Plan, "x")).unwrap();
        assert_eq!(c.text, "hello");
        assert!(c.prompt_tokens > 0);
        assert_eq!(c.completion_tokens, 2);
    }

    #[test]
    fn single_fixture_exhausts() {
        let b = ScriptedBackend::new(Script::new(vec![Fixture::for_stage(Stage::Plan, "a")])).unwrap();
        b.complete(&prompt(Stage::Plan, "x")).unwrap();
        assert_eq!(
            b.complete(&prompt(Stage::Plan, "x")).unwrap_err(),
            BackendError::ScriptExhausted {
                stage: "plan".into(),
                ordinal: 1
            }
        );
    }

    #[test]
    fn stage_and_ordinal_matching() {
        let mut second = Fixture::for_stage(Stage::Refine, "second refine");
        second.ordinal = Some(1);
        let b = ScriptedBackend::new(Script::new(vec![
            second,
            Fixture::for_stage(Stage::Refine, "first refine"),
            Fixture::for_stage(Stage::Synthesize, "synth"),
        ]))
        .unwrap();
        assert_eq!(b.complete(&prompt(Stage::Synthesize, "")).unwrap().text, "synth");
        assert_eq!(b.complete(&prompt(Stage::Refine, "")).unwrap().text, "first refine");
        assert_eq!(b.complete(&prompt(Stage::Refine, "")).unwrap().text, "second refine");
    }

    #[test]
    fn content_matchers() {
        let text = prompt(Stage::Plan, "needle").render();
        let hash = hex::encode(Sha256::digest(text.as_bytes()));
        let mk = |m: Matcher, r: &str| Fixture {
            matcher: Some(m),
            ..Fixture::for_stage(Stage::Plan, r)
        };
        let b = ScriptedBackend::new(Script::new(vec![
            mk(Matcher::Contains("haystack".into()), "wrong"),
            mk(Matcher::PromptSha256(hash), "by hash"),
            mk(Matcher::Regex("ne+dle".into()), "by regex"),
        ]))
        .unwrap();
        assert_eq!(b.complete(&prompt(Stage::Plan, "needle")).unwrap().text, "by hash");
        assert_eq!(b.complete(&prompt(Stage::Plan, "needle")).unwrap().text, "by regex");
    }

    #[test]
    fn personas() {
        let resp = r#"{"keys": ["New cases"], "n": "New cases total"}"#;
        let b = ScriptedBackend::new(Script::new(vec![
            Fixture::for_stage(Stage::Synthesize, resp).with_persona(Persona::EmitBadField {
                field: "New cases".into(),
            }),
            Fixture::for_stage(Stage::Synthesize, resp).with_persona(Persona::EmitEmpty),
            Fixture::for_stage(Stage::Synthesize, "")
                .with_persona(Persona::EmitMalformedObject)
                .repeating(),
        ]))
        .unwrap();
        let bad = b.complete(&prompt(Stage::Synthesize, "")).unwrap().text;
        assert_eq!(bad, r#"{"keys": ["newcases"], "n": "New cases total"}"#);
        assert_eq!(b.complete(&prompt(Stage::Synthesize, "")).unwrap().text, "");
        for _ in 0..5 {
            let t = b.complete(&prompt(Stage::Synthesize, "")).unwrap().text;
            assert!(crate::extract::first_object(&t).is_none());
        }
    }

    #[test]
    fn empty_script_rejected() {
        assert!(ScriptedBackend::new(Script::new(vec![])).is_err());
    }

    #[test]
    fn script_file_format() {
        let json = r#"{"fixtures": [
            {"stage": "plan", "response": "p"},
            {"stage": "synthesize", "persona": "emit_malformed_object", "repeat": true},
            {"matcher": {"contains": "Schema Header"}, "persona": {"emit_bad_field": {"field": "deaths"}}, "response": "\"deaths\""}
        ]}"#;
        let script: Script = serde_json::from_str(json).unwrap();
        assert_eq!(script.model_id, SCRIPTED_MODEL_ID);
        assert_eq!(script.fixtures.len(), 3);
        assert!(script.fixtures[1].repeat);
        let back: Script = serde_json::from_str(&serde_json::to_string(&script).unwrap()).unwrap();
        assert_eq!(back, script);
    }
}
