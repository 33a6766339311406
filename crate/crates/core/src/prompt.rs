//! Sectioned prompts. Each section renders as `### <label>` followed by its body.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Plan,
    Synthesize,
    Refine,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Plan => "plan",
            Stage::Synthesize => "synthesize",
            Stage::Refine => "refine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSection {
    pub label: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub sections: Vec<PromptSection>,
    pub temperature: f64,
    pub stage: Stage,
}

impl Prompt {
    pub fn new(stage: Stage, temperature: f64) -> Self {
        Self {
            sections: Vec::new(),
            temperature,
            stage,
        }
    }

    pub fn section(mut self, label: &str, body: impl Into<String>) -> Self {
        self.sections.push(PromptSection {
            label: label.to_string(),
            body: body.into(),
        });
        self
    }

    pub fn section_body(&self, label: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|s| s.label == label)
            .map(|s| s.body.as_str())
    }

    /// User-message text.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str("### ");
            out.push_str(&s.label);
            out.push('\n');
            out.push_str(s.body.trim_end());
            out.push('\n');
        }
        out
    }

    /// System-message text: how to read the sections, per stage.
    pub fn system_message(&self) -> &'static str {
        match self.stage {
            Stage::Plan => {
                "You plan analyses of a tabular dataset. The request is split into sections headed '### <label>'. Reply with the object the Output Format Constraint asks for and nothing else."
            }
            Stage::Synthesize | Stage::Refine => {
                "You write transformation programs in a JSON pipeline language for a tabular dataset. The request is split into sections headed '### <label>'. Reply with one program object and nothing else."
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sections.iter().all(|s| s.body.trim().is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_delimited_sections() {
        let p = Prompt::new(Stage::Plan, 0.1)
            .section("A", "one\n")
            .section("B", "two");
        assert_eq!(p.render(), "### A\none\n\n### B\ntwo\n");
        assert_eq!(p.section_body("B"), Some("two"));
    }
}
