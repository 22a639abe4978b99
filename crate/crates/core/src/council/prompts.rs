use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::schemas::{Question, RoleId};

pub const DIRECT_PROMPT: &str = include_str!("../../prompts/direct.txt");
pub const EDGE_CASE_PROMPT: &str = include_str!("../../prompts/edge_case.txt");
pub const STEP_BY_STEP_PROMPT: &str = include_str!("../../prompts/step_by_step.txt");
pub const PRAGMATIC_PROMPT: &str = include_str!("../../prompts/pragmatic.txt");
pub const REVIEWER_PROMPT: &str = include_str!("../../prompts/reviewer.txt");
pub const CHAIRMAN_PROMPT: &str = include_str!("../../prompts/chairman.txt");
pub const VERIFIER_PROMPT: &str = include_str!("../../prompts/verifier.txt");

/// Appended to every multiple-choice user message.
pub const MC_INSTRUCTION: &str =
    "This is a multiple-choice question. Finish with a single line of the form FINAL: <LETTER>.";

pub fn role_prompt(role: RoleId) -> &'static str {
    match role {
        RoleId::Direct => DIRECT_PROMPT,
        RoleId::EdgeCase => EDGE_CASE_PROMPT,
        RoleId::StepByStep => STEP_BY_STEP_PROMPT,
        RoleId::Pragmatic => PRAGMATIC_PROMPT,
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// System prompts keyed by name: the four role ids plus `reviewer`,
/// `chairman` and `verifier`. A catalog file may override any subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptCatalog {
    prompts: BTreeMap<String, String>,
}

#[derive(Debug, thiserror::Error)]
pub enum PromptCatalogError {
    #[error("unknown prompt key {0:?}")]
    UnknownKey(String),
    #[error("prompt {0:?} is empty")]
    Empty(String),
}

impl Default for PromptCatalog {
    fn default() -> Self {
        let mut prompts = BTreeMap::new();
        for role in RoleId::ALL {
            prompts.insert(role.as_str().to_string(), role_prompt(role).to_string());
        }
        prompts.insert("reviewer".into(), REVIEWER_PROMPT.into());
        prompts.insert("chairman".into(), CHAIRMAN_PROMPT.into());
        prompts.insert("verifier".into(), VERIFIER_PROMPT.into());
        Self { prompts }
    }
}

impl PromptCatalog {
    pub const KEYS: [&'static str; 7] =
        ["direct", "edge_case", "step_by_step", "pragmatic", "reviewer", "chairman", "verifier"];

    /// Default catalog with `overrides` applied.
    pub fn with_overrides(overrides: BTreeMap<String, String>) -> Result<Self, PromptCatalogError> {
        let mut catalog = Self::default();
        for (key, text) in overrides {
            if !Self::KEYS.contains(&key.as_str()) {
                return Err(PromptCatalogError::UnknownKey(key));
            }
            if text.trim().is_empty() {
                return Err(PromptCatalogError::Empty(key));
            }
            catalog.prompts.insert(key, text);
        }
        Ok(catalog)
    }

    pub fn get(&self, key: &str) -> &str {
        self.prompts.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn role(&self, role: RoleId) -> &str {
        self.get(role.as_str())
    }

    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.prompts.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect()
    }
}

/// The question as shown to every model: text, then lettered options for
/// multiple-choice items.
pub fn render_question(question: &Question) -> String {
    let mut out = format!("Question: {}", question.text);
    if question.is_multiple_choice() {
        out.push_str("\n\nOptions:");
        for opt in &question.options {
            out.push_str(&format!("\n{}. {}", opt.letter, opt.text));
        }
    }
    out
}

/// User message for a Stage-1 or baseline generation call.
pub fn generation_message(question: &Question) -> String {
    let mut out = render_question(question);
    if question.is_multiple_choice() {
        out.push_str("\n\n");
        out.push_str(MC_INSTRUCTION);
    }
    out
}
