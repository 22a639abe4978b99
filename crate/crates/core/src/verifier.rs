//! Stage 4: claim extraction, agreement tags and selective answering.
//!
//! The verifier call only labels claims; nothing here alters the answer it
//! was given.

use serde::{Deserialize, Serialize};

use crate::accounting::{Stage, TraceSink};
use crate::council::{verifier_map, AnonymizationMap, PromptCatalog};
use crate::gateway::{ChatMessage, ChatRequest, EndpointConfig, Gateway, RequestTag};
use crate::schemas::{parse_verifier, CandidateAnswer, EvidenceLabel, ExtractedClaim, CANDIDATE_COUNT};

/// Fixed warning prepended when the answer is not fully cross-verified.
pub const SELECTIVE_WARNING: &str =
    "Note: parts of this answer could not be cross-verified by the council and may require external verification.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimTag {
    Consistent,
    Uncertain,
    Contradicted,
}

impl ClaimTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ClaimTag::Consistent => "consistent",
            ClaimTag::Uncertain => "uncertain",
            ClaimTag::Contradicted => "contradicted",
        }
    }
}

/// Any contradiction wins; otherwise three supporters make a claim consistent.
pub fn claim_tag(support: usize, contradict: usize) -> ClaimTag {
    if contradict >= 1 {
        ClaimTag::Contradicted
    } else if support >= 3 {
        ClaimTag::Consistent
    } else {
        ClaimTag::Uncertain
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEvidence {
    pub candidate: usize,
    pub label: EvidenceLabel,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub span: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimVerdict {
    pub claim: String,
    /// One entry per candidate index; candidates the verifier skipped are
    /// irrelevant.
    pub evidence: Vec<CandidateEvidence>,
    pub s: usize,
    pub c: usize,
    pub tag: ClaimTag,
}

/// De-anonymizes one claim's evidence through `map` and tags it.
pub fn aggregate_claim(claim: &ExtractedClaim, map: &AnonymizationMap) -> ClaimVerdict {
    let mut evidence: Vec<CandidateEvidence> = (0..CANDIDATE_COUNT)
        .map(|candidate| CandidateEvidence { candidate, label: EvidenceLabel::Irrelevant, span: String::new() })
        .collect();
    for e in &claim.evidence {
        if let Some(i) = map.index_of(e.candidate) {
            evidence[i].label = e.label;
            evidence[i].span = e.span.clone();
        }
    }
    let count = |label| evidence.iter().filter(|e| e.label == label).count();
    let (s, c) = (count(EvidenceLabel::Support), count(EvidenceLabel::Contradict));
    ClaimVerdict { claim: claim.claim.clone(), evidence, s, c, tag: claim_tag(s, c) }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub claims: Vec<ClaimVerdict>,
    /// True only for a verified, nonempty claim set that is all consistent.
    pub all_consistent: bool,
    /// The verifier's output could not be parsed (or the call failed).
    #[serde(default)]
    pub unverified: bool,
    /// There was no final answer to verify.
    #[serde(default)]
    pub empty_input: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<AnonymizationMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl VerificationReport {
    pub fn from_claims(claims: Vec<ClaimVerdict>, map: AnonymizationMap) -> Self {
        let all_consistent = !claims.is_empty() && claims.iter().all(|c| c.tag == ClaimTag::Consistent);
        Self { claims, all_consistent, unverified: false, empty_input: false, map: Some(map), error: None }
    }

    pub fn unverified(map: Option<AnonymizationMap>, error: String) -> Self {
        Self { claims: vec![], all_consistent: false, unverified: true, empty_input: false, map, error: Some(error) }
    }

    pub fn empty_input(map: AnonymizationMap) -> Self {
        Self { claims: vec![], all_consistent: false, unverified: false, empty_input: true, map: Some(map), error: None }
    }

    /// Whether this report counts toward selective-answering coverage.
    pub fn covered(&self) -> bool {
        self.all_consistent && !self.unverified
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum SelectiveAnswer {
    Plain(String),
    WithWarning(String),
}

impl SelectiveAnswer {
    pub fn text(&self) -> &str {
        match self {
            SelectiveAnswer::Plain(t) | SelectiveAnswer::WithWarning(t) => t,
        }
    }
}

/// Plain answer only when every claim is consistent; otherwise warn.
pub fn selective_policy(report: &VerificationReport, answer: &str) -> SelectiveAnswer {
    if report.covered() {
        SelectiveAnswer::Plain(answer.to_string())
    } else {
        SelectiveAnswer::WithWarning(format!("{SELECTIVE_WARNING}\n\n{answer}"))
    }
}

/// User message: the final answer, then candidates in label order.
pub fn verifier_message(final_answer: &str, candidates: &[CandidateAnswer], map: &AnonymizationMap) -> String {
    let mut out = format!("Chairman final answer:\n{final_answer}\n");
    for idx in map.presentation_order() {
        let text = candidates.get(idx).map(|c| c.text.as_str()).unwrap_or("");
        out.push_str(&format!("\nCandidate {}:\n{}\n", map.label_of(idx), text));
    }
    out
}

pub struct VerifyRequest<'a> {
    pub query_id: &'a str,
    pub run_seed: u64,
    pub final_answer: &'a str,
    pub candidates: &'a [CandidateAnswer],
    pub endpoint: &'a EndpointConfig,
    pub prompts: &'a PromptCatalog,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// One verifier call over a fresh permutation of the candidates. Failures
/// produce an unverified report. An empty answer is still sent, keeping the
/// per-query call budget fixed, but its report carries no claims.
pub async fn stage4_verify(gateway: &Gateway, req: VerifyRequest<'_>, sink: &dyn TraceSink) -> VerificationReport {
    let map = verifier_map(req.run_seed, req.query_id);
    let request = ChatRequest::new(
        vec![
            ChatMessage::system(req.prompts.get("verifier")),
            ChatMessage::user(verifier_message(req.final_answer, req.candidates, &map)),
        ],
        RequestTag::new(req.query_id, Stage::Stage4, "verifier", 0),
    )
    .with_temperature(req.temperature)
    .with_max_tokens(req.max_tokens);
    let response = gateway.complete(req.endpoint, &request, sink).await;
    if req.final_answer.trim().is_empty() {
        return VerificationReport::empty_input(map);
    }
    match response {
        Err(e) => VerificationReport::unverified(Some(map), e.to_string()),
        Ok(response) => match parse_verifier(&response.text) {
            Err(e) => VerificationReport::unverified(Some(map), e.to_string()),
            Ok(output) => {
                let claims = output.claims.iter().map(|c| aggregate_claim(c, &map)).collect();
                VerificationReport::from_claims(claims, map)
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemas::{ClaimEvidence, Letter};

    fn claim(labels: &[(Letter, EvidenceLabel)]) -> ExtractedClaim {
        ExtractedClaim {
            claim: "x".into(),
            evidence: labels
                .iter()
                .map(|(l, e)| ClaimEvidence { candidate: *l, label: *e, span: String::new() })
                .collect(),
        }
    }

    use EvidenceLabel::*;
    use Letter::*;

    #[test]
    fn seasons_example_tags() {
        let id = AnonymizationMap::identity(0);
        let v = aggregate_claim(&claim(&[(A, Support), (B, Support), (C, Support), (D, Support)]), &id);
        assert_eq!(v.tag, ClaimTag::Consistent);
        let v = aggregate_claim(&claim(&[(A, Support), (B, Support), (C, Irrelevant), (D, Irrelevant)]), &id);
        assert_eq!((v.s, v.c, v.tag), (2, 0, ClaimTag::Uncertain));
        let v = aggregate_claim(&claim(&[(A, Support), (B, Support), (C, Support), (D, Contradict)]), &id);
        assert_eq!(v.tag, ClaimTag::Contradicted);
    }

    #[test]
    fn absent_candidate_is_irrelevant() {
        let v = aggregate_claim(&claim(&[(A, Support), (B, Support), (C, Support)]), &AnonymizationMap::identity(0));
        assert_eq!(v.evidence[3].label, Irrelevant);
        assert_eq!(v.tag, ClaimTag::Consistent);
    }

    #[test]
    fn evidence_is_deanonymized() {
        let map = AnonymizationMap { reviewer_slot: 0, labels: [C, A, D, B] };
        let v = aggregate_claim(&claim(&[(A, Contradict)]), &map);
        assert_eq!(v.evidence[1].label, Contradict);
        assert_eq!(v.evidence[0].label, Irrelevant);
    }

    #[test]
    fn policy() {
        let id = AnonymizationMap::identity(0);
        let good = aggregate_claim(&claim(&[(A, Support), (B, Support), (C, Support)]), &id);
        let weak = aggregate_claim(&claim(&[(A, Support)]), &id);
        let plain = VerificationReport::from_claims(vec![good.clone()], id);
        assert_eq!(selective_policy(&plain, "ok"), SelectiveAnswer::Plain("ok".into()));
        let mixed = VerificationReport::from_claims(vec![good, weak], id);
        let warned = selective_policy(&mixed, "ok");
        assert!(matches!(warned, SelectiveAnswer::WithWarning(_)));
        assert!(warned.text().starts_with(SELECTIVE_WARNING));
        assert!(warned.text().ends_with("ok"));
        let none = VerificationReport::from_claims(vec![], id);
        assert!(!none.all_consistent);
        assert!(matches!(selective_policy(&VerificationReport::unverified(None, "bad".into()), "ok"), SelectiveAnswer::WithWarning(_)));
    }
}
