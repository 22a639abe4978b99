use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::extract::first_balanced_object;
use super::{candidate_label, Letter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceLabel {
    Support,
    Contradict,
    Irrelevant,
}

impl EvidenceLabel {
    pub fn parse(s: &str) -> Option<EvidenceLabel> {
        match s {
            "support" => Some(EvidenceLabel::Support),
            "contradict" => Some(EvidenceLabel::Contradict),
            "irrelevant" => Some(EvidenceLabel::Irrelevant),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimEvidence {
    pub candidate: Letter,
    pub label: EvidenceLabel,
    #[serde(default)]
    pub span: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedClaim {
    pub claim: String,
    pub evidence: Vec<ClaimEvidence>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierOutput {
    pub claims: Vec<ExtractedClaim>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifierError {
    #[error("verifier output is empty")]
    Empty,
    #[error("no JSON object found in verifier output")]
    NoObject,
    #[error("malformed verifier object: {0}")]
    Malformed(String),
    #[error("evidence label {0:?} is not one of support|contradict|irrelevant")]
    UnknownLabel(String),
    #[error("candidate label {0:?} is not one of A-D")]
    UnknownCandidate(String),
    #[error("claim {claim} lists candidate {candidate} more than once")]
    DuplicateEvidence { claim: usize, candidate: Letter },
}

#[derive(Deserialize)]
struct RawEvidence {
    candidate: String,
    label: String,
    #[serde(default)]
    span: Option<String>,
}

#[derive(Deserialize)]
struct RawClaim {
    claim: String,
    #[serde(default)]
    evidence: Vec<RawEvidence>,
}

#[derive(Deserialize)]
struct RawVerifier {
    claims: Vec<RawClaim>,
}

pub fn parse_verifier(raw_text: &str) -> Result<VerifierOutput, VerifierError> {
    if raw_text.trim().is_empty() {
        return Err(VerifierError::Empty);
    }
    let object = first_balanced_object(raw_text).ok_or(VerifierError::NoObject)?;
    let raw: RawVerifier =
        serde_json::from_str(object).map_err(|e| VerifierError::Malformed(e.to_string()))?;
    let mut claims = Vec::with_capacity(raw.claims.len());
    for (index, c) in raw.claims.into_iter().enumerate() {
        let mut seen = BTreeSet::new();
        let mut evidence = Vec::with_capacity(c.evidence.len());
        for e in c.evidence {
            let candidate = candidate_label(&e.candidate)
                .ok_or_else(|| VerifierError::UnknownCandidate(e.candidate.clone()))?;
            if !seen.insert(candidate) {
                return Err(VerifierError::DuplicateEvidence { claim: index, candidate });
            }
            let label =
                EvidenceLabel::parse(&e.label).ok_or(VerifierError::UnknownLabel(e.label))?;
            evidence.push(ClaimEvidence {
                candidate,
                label,
                span: e.span.unwrap_or_default(),
            });
        }
        claims.push(ExtractedClaim { claim: c.claim, evidence });
    }
    Ok(VerifierOutput { claims })
}
