use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use strot::orchestrator::ModelPricing;
use std::collections::BTreeMap;

/// Optional TOML settings. Command-line flags win over the file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_output_tokens: Option<u32>,
    pub plan_temperature: Option<f64>,
    pub synth_temperature: Option<f64>,
    pub refine_temperature: Option<f64>,
    #[serde(rename = "T")]
    pub refine_budget: Option<usize>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub pricing: BTreeMap<String, ModelPricing>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file() {
        let cfg: FileConfig = toml::from_str(
            r#"
endpoint = "https://api.example.com/v1/chat/completions"
model = "gpt-4-turbo"
timeout_secs = 30
T = 2
plan_temperature = 0.0

[pricing.local-model]
input_per_1k = 0.001
output_per_1k = 0.002
"#,
        )
        .unwrap();
        assert_eq!(cfg.refine_budget, Some(2));
        assert_eq!(cfg.pricing["local-model"].output_per_1k, 0.002);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<FileConfig>("api_key = \"x\"").is_err());
    }
}
