//! Stages 1 to 3 of a council query, plus the Stage-4 hand-off.
//!
//! Stage 1 fans out four role-prompted generations, Stage 2 has every
//! reviewer rank all four anonymized candidates, and Stage 3 asks the
//! chairman for a constrained synthesis. Each stage can be switched off for
//! ablations; the call budget is `4 + 4·s2 + s3 + s4`.

mod aggregate;
mod anonymize;
mod caught;
mod prompts;

use serde::{Deserialize, Serialize};

use crate::accounting::{CallTrace, Stage, TraceCollector};
use crate::gateway::{ChatMessage, ChatRequest, EndpointConfig, EndpointError, Gateway, RequestTag};
use crate::schemas::{
    extract_choice_letter, parse_review, parse_synthesis_flagged, CandidateAnswer, ChoiceSource, Letter,
    Question, Review, RoleId, SynthesisFlags, SynthesisOutput, CANDIDATE_COUNT,
};
use crate::verifier::{stage4_verify, VerificationReport, VerifyRequest};

pub use aggregate::{
    aggregate, borda_aggregate, dedupe_issues, render_summary, reviewer_order, AggregatedBestBit,
    AggregatedIssue, AggregatedReview,
};
pub use anonymize::{anonymize, derive_seed, verifier_map, AnonymizationMap};
pub use caught::{caught_error_events, referenced_span, span_removed, CaughtErrorEvent, MIN_SPAN_CHARS};
pub use prompts::{
    generation_message, render_question, role_prompt, sha256_hex, PromptCatalog, PromptCatalogError,
    CHAIRMAN_PROMPT, DIRECT_PROMPT, EDGE_CASE_PROMPT, MC_INSTRUCTION, PRAGMATIC_PROMPT, REVIEWER_PROMPT,
    STEP_BY_STEP_PROMPT, VERIFIER_PROMPT,
};

/// Stage-1 failures at or above this count abort the query.
pub const ABORT_FAILURES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleSpec {
    pub role_id: RoleId,
    pub system_prompt: String,
    pub endpoint: EndpointConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageToggles {
    pub stage2: bool,
    pub stage3: bool,
    pub stage4: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self { stage2: true, stage3: true, stage4: true }
    }
}

impl StageToggles {
    pub const FULL: StageToggles = StageToggles { stage2: true, stage3: true, stage4: true };

    pub fn call_budget(self) -> usize {
        4 + 4 * usize::from(self.stage2) + usize::from(self.stage3) + usize::from(self.stage4)
    }

    /// Stage digits kept, e.g. "134" without cross-review.
    pub fn digits(self) -> String {
        let mut s = String::from("1");
        for (on, d) in [(self.stage2, '2'), (self.stage3, '3'), (self.stage4, '4')] {
            if on {
                s.push(d);
            }
        }
        s
    }
}

/// What the system answers: a letter (or nothing) for multiple choice,
/// text otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemOutput {
    Choice(Option<Letter>),
    Text(String),
}

impl SystemOutput {
    pub fn letter(&self) -> Option<Letter> {
        match self {
            SystemOutput::Choice(l) => *l,
            SystemOutput::Text(_) => None,
        }
    }

    /// Text scored against free-form golds; empty when no letter.
    pub fn scoring_text(&self) -> String {
        match self {
            SystemOutput::Choice(l) => l.map(|l| l.to_string()).unwrap_or_default(),
            SystemOutput::Text(t) => t.clone(),
        }
    }

    /// The printable system output line; "none" when no letter was extracted.
    pub fn display(&self) -> String {
        match self {
            SystemOutput::Choice(Some(l)) => l.to_string(),
            SystemOutput::Choice(None) => "none".to_string(),
            SystemOutput::Text(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouncilConfig {
    /// Canonical order: direct, edge_case, step_by_step, pragmatic.
    pub roles: Vec<RoleSpec>,
    /// Reviewer slot `j` runs on `reviewers[j]`.
    pub reviewers: Vec<EndpointConfig>,
    pub chairman: EndpointConfig,
    pub verifier: EndpointConfig,
    pub stages: StageToggles,
    pub role_specialization: bool,
    pub run_seed: u64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub prompts: PromptCatalog,
}

#[derive(Debug, thiserror::Error)]
pub enum CouncilError {
    #[error("a council needs exactly {CANDIDATE_COUNT} roles, got {0}")]
    RoleCount(usize),
    #[error("a council needs exactly {CANDIDATE_COUNT} reviewers, got {0}")]
    ReviewerCount(usize),
    #[error("roles must appear once each in canonical order")]
    RoleOrder,
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
}

impl CouncilConfig {
    /// Roles in canonical order on `endpoints`; reviewers reuse the same
    /// endpoints, slot for slot.
    pub fn new(
        endpoints: [EndpointConfig; CANDIDATE_COUNT],
        chairman: EndpointConfig,
        verifier: EndpointConfig,
        prompts: PromptCatalog,
    ) -> Self {
        let roles = RoleId::ALL
            .iter()
            .zip(endpoints.iter())
            .map(|(role, ep)| RoleSpec {
                role_id: *role,
                system_prompt: prompts.role(*role).to_string(),
                endpoint: ep.clone(),
            })
            .collect();
        Self {
            roles,
            reviewers: endpoints.to_vec(),
            chairman,
            verifier,
            stages: StageToggles::default(),
            role_specialization: true,
            run_seed: 0,
            temperature: 0.0,
            max_tokens: 512,
            prompts,
        }
    }

    pub fn validate(&self) -> Result<(), CouncilError> {
        if self.roles.len() != CANDIDATE_COUNT {
            return Err(CouncilError::RoleCount(self.roles.len()));
        }
        if self.reviewers.len() != CANDIDATE_COUNT {
            return Err(CouncilError::ReviewerCount(self.reviewers.len()));
        }
        if self.roles.iter().zip(RoleId::ALL).any(|(r, id)| r.role_id != id) {
            return Err(CouncilError::RoleOrder);
        }
        for ep in self.roles.iter().map(|r| &r.endpoint).chain(&self.reviewers) {
            ep.validate()?;
        }
        self.chairman.validate()?;
        self.verifier.validate()?;
        Ok(())
    }

    fn role_ids(&self) -> Vec<RoleId> {
        self.roles.iter().map(|r| r.role_id).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSlot {
    pub reviewer_slot: usize,
    pub map: AnonymizationMap,
    pub review: Option<Review>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReviewSlot {
    pub fn valid(&self) -> bool {
        self.review.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouncilResult {
    pub question_id: String,
    pub candidates: Vec<CandidateAnswer>,
    pub reviews: Vec<ReviewSlot>,
    pub aggregated: AggregatedReview,
    pub synthesis: Option<SynthesisOutput>,
    #[serde(default)]
    pub synthesis_flags: SynthesisFlags,
    pub system_output: SystemOutput,
    /// Answer text shown to the user and handed to the verifier.
    pub answer_text: String,
    /// Raw model text the system output was read from: the chairman's
    /// response, or the Borda-top candidate when Stage 3 is off.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
    pub verification: Option<VerificationReport>,
    #[serde(default)]
    pub caught_errors: Vec<CaughtErrorEvent>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub traces: Vec<CallTrace>,
}

impl CouncilResult {
    pub fn aborted(&self) -> bool {
        self.flags.iter().any(|f| f == "aborted")
    }

    /// Validity per reviewer slot, 1 for a usable review.
    pub fn review_validity(&self) -> Vec<u8> {
        self.reviews.iter().map(|r| u8::from(r.valid())).collect()
    }
}

fn request(system: &str, user: String, tag: RequestTag, config: &CouncilConfig) -> ChatRequest {
    ChatRequest::new(vec![ChatMessage::system(system), ChatMessage::user(user)], tag)
        .with_temperature(config.temperature)
        .with_max_tokens(config.max_tokens)
}

fn candidate_block(c: &CandidateAnswer) -> &str {
    if c.failed || c.text.trim().is_empty() {
        "(no answer)"
    } else {
        &c.text
    }
}

/// Reviewer user message: the question, then candidates in label order.
pub fn reviewer_message(question: &Question, candidates: &[CandidateAnswer], map: &AnonymizationMap) -> String {
    let mut out = render_question(question);
    for idx in map.presentation_order() {
        out.push_str(&format!("\n\nCandidate {}:\n{}", map.label_of(idx), candidate_block(&candidates[idx])));
    }
    out
}

/// Chairman user message: the question, role-labelled candidates in canonical
/// order, and the cross-review summary when Stage 2 ran.
pub fn chairman_message(question: &Question, candidates: &[CandidateAnswer], summary: Option<&str>) -> String {
    let kind = if question.is_multiple_choice() { "multiple-choice" } else { "free-form" };
    let mut out = format!("Task type: {kind}\n\n{}\n\nCandidate answers:", render_question(question));
    for c in candidates {
        out.push_str(&format!("\n\n[{}]\n{}", c.role_id.display_name(), candidate_block(c)));
    }
    out.push_str("\n\n");
    out.push_str(summary.unwrap_or("Cross-review summary: not available."));
    out
}

async fn stage1_generate(
    gateway: &Gateway,
    question: &Question,
    config: &CouncilConfig,
    sink: &TraceCollector,
) -> Vec<CandidateAnswer> {
    let user = generation_message(question);
    let batch: Vec<_> = config
        .roles
        .iter()
        .enumerate()
        .map(|(i, role)| {
            let system = if config.role_specialization {
                role.system_prompt.as_str()
            } else {
                config.prompts.role(RoleId::Direct)
            };
            let tag = RequestTag::new(&question.id, Stage::Stage1, role.role_id.as_str(), i as u32);
            (role.endpoint.clone(), request(system, user.clone(), tag, config))
        })
        .collect();
    let responses = gateway.complete_parallel(&batch, sink).await;
    config
        .roles
        .iter()
        .zip(responses)
        .map(|(role, response)| {
            let (text, failed) = match response {
                Ok(r) => (r.text, false),
                Err(e) => {
                    tracing::warn!(query = %question.id, role = %role.role_id, "generation failed: {e}");
                    (String::new(), true)
                }
            };
            let extracted_choice = if question.is_multiple_choice() && !failed {
                extract_choice_letter(ChoiceSource::Text(&text))
            } else {
                None
            };
            CandidateAnswer {
                role_id: role.role_id,
                model_id: role.endpoint.endpoint_id.clone(),
                text,
                extracted_choice,
                failed,
            }
        })
        .collect()
}

async fn stage2_review(
    gateway: &Gateway,
    question: &Question,
    candidates: &[CandidateAnswer],
    config: &CouncilConfig,
    sink: &TraceCollector,
) -> Vec<ReviewSlot> {
    let maps: Vec<AnonymizationMap> =
        (0..CANDIDATE_COUNT).map(|j| anonymize(j, config.run_seed, &question.id)).collect();
    let batch: Vec<_> = maps
        .iter()
        .enumerate()
        .map(|(j, map)| {
            let tag = RequestTag::new(&question.id, Stage::Stage2, config.roles[j].role_id.as_str(), j as u32);
            let user = reviewer_message(question, candidates, map);
            (config.reviewers[j].clone(), request(config.prompts.get("reviewer"), user, tag, config))
        })
        .collect();
    let responses = gateway.complete_parallel(&batch, sink).await;
    maps.into_iter()
        .zip(responses)
        .enumerate()
        .map(|(j, (map, response))| {
            let parsed = response
                .map_err(|e| e.to_string())
                .and_then(|r| parse_review(&r.text).map_err(|e| e.to_string()));
            match parsed {
                Ok(review) => ReviewSlot { reviewer_slot: j, map, review: Some(review), error: None },
                Err(error) => ReviewSlot { reviewer_slot: j, map, review: None, error: Some(error) },
            }
        })
        .collect()
}

/// Highest-ranked candidate that produced an answer (index 0 if none did).
fn borda_top(aggregated: &AggregatedReview, candidates: &[CandidateAnswer]) -> usize {
    aggregated
        .consensus_order
        .iter()
        .copied()
        .find(|&i| !candidates[i].failed)
        .unwrap_or(aggregated.consensus_order[0])
}

/// Runs every enabled stage for one question. Traces are stamped with
/// `method` and returned sorted by stage and slot.
pub async fn run_council(
    gateway: &Gateway,
    question: &Question,
    config: &CouncilConfig,
    method: &str,
) -> Result<CouncilResult, CouncilError> {
    config.validate()?;
    let sink = TraceCollector::new(method);
    let mc = question.is_multiple_choice();
    let mut flags = Vec::new();

    let candidates = stage1_generate(gateway, question, config, &sink).await;
    let failures = candidates.iter().filter(|c| c.failed).count();
    for c in candidates.iter().filter(|c| c.failed) {
        flags.push(format!("generation_failed:{}", c.role_id));
    }
    if failures >= ABORT_FAILURES {
        flags.push("aborted".into());
        let system_output = if mc { SystemOutput::Choice(None) } else { SystemOutput::Text(String::new()) };
        return Ok(CouncilResult {
            question_id: question.id.clone(),
            candidates,
            reviews: vec![],
            aggregated: AggregatedReview::uniform(),
            synthesis: None,
            synthesis_flags: SynthesisFlags::default(),
            system_output,
            answer_text: String::new(),
            raw_output: None,
            verification: None,
            caught_errors: vec![],
            flags,
            traces: sink.take_sorted(),
        });
    }

    let reviews = if config.stages.stage2 {
        stage2_review(gateway, question, &candidates, config, &sink).await
    } else {
        Vec::new()
    };
    for r in reviews.iter().filter(|r| !r.valid()) {
        flags.push(format!("review_invalid:{}", r.reviewer_slot));
    }
    let valid: Vec<(&Review, &AnonymizationMap)> =
        reviews.iter().filter_map(|r| r.review.as_ref().map(|rev| (rev, &r.map))).collect();
    let aggregated = aggregate(&valid);
    if config.stages.stage2 && aggregated.degenerate {
        flags.push("all_reviews_invalid".into());
    }
    let top = borda_top(&aggregated, &candidates);

    let mut synthesis = None;
    let mut synthesis_flags = SynthesisFlags::default();
    let mut raw_output = None;
    let (system_output, answer_text) = if config.stages.stage3 {
        let summary = config.stages.stage2.then(|| render_summary(&aggregated, &config.role_ids()));
        let tag = RequestTag::new(&question.id, Stage::Stage3, "chair", 0);
        let user = chairman_message(question, &candidates, summary.as_deref());
        let req = request(config.prompts.get("chairman"), user, tag, config);
        let response = gateway.complete(&config.chairman, &req, &sink).await;
        if let Ok(r) = &response {
            raw_output = Some(r.text.clone());
        }
        let parsed = response
            .map_err(|e| e.to_string())
            .and_then(|r| parse_synthesis_flagged(&r.text, mc).map_err(|e| e.to_string()));
        match parsed {
            Ok((out, f)) => {
                synthesis_flags = f;
                if f.null_string_choice {
                    flags.push("null_string_choice".into());
                }
                if f.dropped_choice {
                    flags.push("dropped_choice".into());
                }
                let result = if mc {
                    let letter = out.choice;
                    let text = if !out.final_answer.trim().is_empty() {
                        out.final_answer.clone()
                    } else {
                        letter
                            .map(|l| match question.option_text(l) {
                                Some(opt) => format!("Answer: {l}. {opt}"),
                                None => format!("Answer: {l}."),
                            })
                            .unwrap_or_default()
                    };
                    (SystemOutput::Choice(letter), text)
                } else {
                    (SystemOutput::Text(out.final_answer.clone()), out.final_answer.clone())
                };
                synthesis = Some(out);
                result
            }
            Err(e) => {
                tracing::warn!(query = %question.id, "synthesis unusable: {e}");
                flags.push("synthesis_failed".into());
                if mc {
                    (SystemOutput::Choice(None), String::new())
                } else {
                    flags.push("fallback_borda_top".into());
                    let text = candidates[top].text.clone();
                    (SystemOutput::Text(text.clone()), text)
                }
            }
        }
    } else {
        let c = &candidates[top];
        raw_output = Some(c.text.clone());
        if mc {
            (SystemOutput::Choice(c.extracted_choice), c.text.clone())
        } else {
            (SystemOutput::Text(c.text.clone()), c.text.clone())
        }
    };

    let caught_errors = if !mc && synthesis.is_some() {
        caught_error_events(&aggregated.issues, &candidates, &answer_text)
    } else {
        Vec::new()
    };

    let verification = if config.stages.stage4 {
        let report = stage4_verify(
            gateway,
            VerifyRequest {
                query_id: &question.id,
                run_seed: config.run_seed,
                final_answer: &answer_text,
                candidates: &candidates,
                endpoint: &config.verifier,
                prompts: &config.prompts,
                temperature: config.temperature,
                max_tokens: config.max_tokens,
            },
            &sink,
        )
        .await;
        if report.unverified {
            flags.push("unverified".into());
        }
        if report.empty_input {
            flags.push("verifier_empty_input".into());
        }
        Some(report)
    } else {
        None
    };

    Ok(CouncilResult {
        question_id: question.id.clone(),
        candidates,
        reviews,
        aggregated,
        synthesis,
        synthesis_flags,
        system_output,
        answer_text,
        raw_output,
        verification,
        caught_errors,
        flags,
        traces: sink.take_sorted(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budgets() {
        let t = |s2, s3, s4| StageToggles { stage2: s2, stage3: s3, stage4: s4 };
        assert_eq!(t(true, true, true).call_budget(), 10);
        assert_eq!(t(false, true, true).call_budget(), 6);
        assert_eq!(t(true, false, true).call_budget(), 9);
        assert_eq!(t(false, true, true).digits(), "134");
        assert_eq!(t(true, true, true).digits(), "1234");
    }

    #[test]
    fn system_output_display() {
        assert_eq!(SystemOutput::Choice(Some(Letter::C)).display(), "C");
        assert_eq!(SystemOutput::Choice(None).display(), "none");
    }
}
