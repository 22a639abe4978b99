use std::fmt;
use std::str::FromStr;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::baselines::{best_of_3, majority_vote, self_consistency_select, text_majority_index, text_mode_index};
use super::report::{MethodResult, QuestionRecord};
use super::{score_em, score_mc1, score_rubric, BenchmarkSet};
use crate::accounting::{aggregate_query, CallTrace, PricingModel, Stage, TraceCollector};
use crate::council::{generation_message, run_council, CouncilConfig, CouncilError, StageToggles, SystemOutput};
use crate::gateway::{ChatMessage, ChatRequest, EndpointConfig, Gateway, RequestTag};
use crate::schemas::{extract_choice_letter, ChoiceSource, Gold, Letter, Question, RoleId};

/// One evaluated system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodSpec {
    SingleModel,
    SelfConsistency { k: usize, temperature: f64 },
    MajorityVote,
    BestOf3Oracle,
    Council { stages: StageToggles, role_specialization: bool },
}

impl MethodSpec {
    pub const EJ_FULL: MethodSpec = MethodSpec::Council { stages: StageToggles::FULL, role_specialization: true };

    /// The four ablation variants: full, no cross-review, no synthesis, and
    /// no role specialization.
    pub fn ablation_variants() -> [MethodSpec; 4] {
        let council = |stage2, stage3, role_specialization| MethodSpec::Council {
            stages: StageToggles { stage2, stage3, stage4: true },
            role_specialization,
        };
        [council(true, true, true), council(false, true, true), council(true, false, true), council(true, true, false)]
    }

    pub fn is_council(&self) -> bool {
        matches!(self, MethodSpec::Council { .. })
    }

    pub fn id(&self) -> String {
        match self {
            MethodSpec::SingleModel => "S1".into(),
            MethodSpec::SelfConsistency { k, .. } => format!("SC-{k}"),
            MethodSpec::MajorityVote => "MV".into(),
            MethodSpec::BestOf3Oracle => "BO3".into(),
            MethodSpec::Council { stages, role_specialization } => {
                let base = if *stages == StageToggles::FULL { "EJ-Full".to_string() } else { format!("EJ-{}", stages.digits()) };
                match (*role_specialization, *stages == StageToggles::FULL) {
                    (true, _) => base,
                    (false, true) => "EJ-NoRoles".into(),
                    (false, false) => format!("{base}-NoRoles"),
                }
            }
        }
    }

    /// Model calls per question when nothing aborts.
    pub fn call_budget(&self) -> usize {
        match self {
            MethodSpec::SingleModel => 1,
            MethodSpec::SelfConsistency { k, .. } => *k,
            MethodSpec::MajorityVote | MethodSpec::BestOf3Oracle => 3,
            MethodSpec::Council { stages, .. } => stages.call_budget(),
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown method {0:?} (expected S1, SC-<k>, MV, BO3, EJ-Full, EJ-<stages>, EJ-NoRoles)")]
pub struct UnknownMethod(pub String);

/// Default self-consistency sampling temperature.
pub const SC_TEMPERATURE: f64 = 0.7;
pub const SC_DEFAULT_K: usize = 5;

impl FromStr for MethodSpec {
    type Err = UnknownMethod;

    /// Case-insensitive. `EJ-<digits>` keeps the listed stages, which must
    /// include 1; a `-NoRoles` suffix turns role prompts off.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || UnknownMethod(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "s1" => return Ok(MethodSpec::SingleModel),
            "sc" => return Ok(MethodSpec::SelfConsistency { k: SC_DEFAULT_K, temperature: SC_TEMPERATURE }),
            "mv" => return Ok(MethodSpec::MajorityVote),
            "bo3" | "best-of-3" => return Ok(MethodSpec::BestOf3Oracle),
            _ => {}
        }
        if let Some(k) = lower.strip_prefix("sc-").or_else(|| lower.strip_prefix("sc")) {
            let k: usize = k.parse().map_err(|_| err())?;
            if k == 0 {
                return Err(err());
            }
            return Ok(MethodSpec::SelfConsistency { k, temperature: SC_TEMPERATURE });
        }
        let rest = lower.strip_prefix("ej").ok_or_else(err)?;
        let (rest, role_specialization) = match rest.strip_suffix("-noroles") {
            Some(r) => (r, false),
            None => (rest, true),
        };
        let stages = match rest.trim_start_matches('-') {
            "" | "full" | "1234" => StageToggles::FULL,
            digits => {
                if !digits.starts_with('1') || !digits.chars().all(|c| ('1'..='4').contains(&c)) {
                    return Err(err());
                }
                let chars: Vec<char> = digits.chars().collect();
                if chars.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(err());
                }
                StageToggles { stage2: digits.contains('2'), stage3: digits.contains('3'), stage4: digits.contains('4') }
            }
        };
        Ok(MethodSpec::Council { stages, role_specialization })
    }
}

/// Endpoints for the non-council baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Single model, also the self-consistency sampler.
    pub single: EndpointConfig,
    /// The three majority-vote / best-of-3 models; the first is the
    /// designated strongest and breaks 3-way ties.
    pub trio: Vec<EndpointConfig>,
}

/// Everything a method run needs besides the questions.
pub struct EvalContext<'a> {
    pub gateway: &'a Gateway,
    pub council: &'a CouncilConfig,
    pub baselines: &'a BaselineConfig,
    pub pricing: PricingModel,
    /// Questions evaluated concurrently.
    pub question_parallelism: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Council(#[from] CouncilError),
    #[error("majority vote and best-of-3 need exactly 3 endpoints, got {0}")]
    TrioSize(usize),
}

pub fn score(question: &Question, output: &SystemOutput) -> bool {
    match (&question.gold, output) {
        (Gold::Letter(gold), SystemOutput::Choice(letter)) => score_mc1(*letter, *gold),
        (Gold::Letter(gold), SystemOutput::Text(text)) => {
            score_mc1(extract_choice_letter(ChoiceSource::Text(text)), *gold)
        }
        (Gold::Answers(golds), out) => score_em(&out.scoring_text(), golds),
        (Gold::Rubric(rubric), out) => score_rubric(&out.scoring_text(), rubric),
    }
}

struct Sampled {
    texts: Vec<String>,
    failed: usize,
}

async fn sample(
    ctx: &EvalContext<'_>,
    question: &Question,
    calls: Vec<(EndpointConfig, String, Option<f64>)>,
    sink: &TraceCollector,
) -> Sampled {
    let user = generation_message(question);
    let system = ctx.council.prompts.role(RoleId::Direct);
    let batch: Vec<_> = calls
        .into_iter()
        .enumerate()
        .map(|(i, (ep, slot, temperature))| {
            let req = ChatRequest::new(
                vec![ChatMessage::system(system), ChatMessage::user(user.clone())],
                RequestTag::new(&question.id, Stage::Baseline, slot, i as u32),
            )
            .with_temperature(temperature.unwrap_or(ctx.council.temperature))
            .with_max_tokens(ctx.council.max_tokens);
            (ep, req)
        })
        .collect();
    let responses = ctx.gateway.complete_parallel(&batch, sink).await;
    let failed = responses.iter().filter(|r| r.is_err()).count();
    let texts = responses.into_iter().map(|r| r.map(|r| r.text).unwrap_or_default()).collect();
    Sampled { texts, failed }
}

fn choices(question: &Question, texts: &[String]) -> Vec<Option<Letter>> {
    texts
        .iter()
        .map(|t| if question.is_multiple_choice() { extract_choice_letter(ChoiceSource::Text(t)) } else { None })
        .collect()
}

fn trio(ctx: &EvalContext<'_>) -> Result<[EndpointConfig; 3], EvalError> {
    <[EndpointConfig; 3]>::try_from(ctx.baselines.trio.clone()).map_err(|v| EvalError::TrioSize(v.len()))
}

/// Runs one method on one question. Returns the scored record and its traces.
pub async fn run_question(
    ctx: &EvalContext<'_>,
    spec: &MethodSpec,
    question: &Question,
) -> Result<(QuestionRecord, Vec<CallTrace>), EvalError> {
    let method = spec.id();
    let mc = question.is_multiple_choice();
    let sink = TraceCollector::new(&method);
    let mut flags = Vec::new();
    let mut all_consistent = None;
    let mut claim_tags = None;
    let mut raw_outputs = Vec::new();
    let (system_output, correct, traces) = match spec {
        MethodSpec::Council { stages, role_specialization } => {
            let mut config = ctx.council.clone();
            config.stages = *stages;
            config.role_specialization = *role_specialization;
            let result = run_council(ctx.gateway, question, &config, &method).await?;
            flags.extend(result.flags.iter().cloned());
            if let Some(report) = &result.verification {
                all_consistent = Some(report.covered());
                claim_tags = Some(report.claims.iter().map(|c| c.tag).collect());
            }
            raw_outputs.extend(result.raw_output);
            let correct = score(question, &result.system_output);
            (result.system_output, correct, result.traces)
        }
        MethodSpec::SingleModel => {
            let s = sample(ctx, question, vec![(ctx.baselines.single.clone(), "s1".into(), None)], &sink).await;
            let output = if mc {
                SystemOutput::Choice(choices(question, &s.texts)[0])
            } else {
                SystemOutput::Text(s.texts[0].clone())
            };
            if s.failed > 0 {
                flags.push("call_failed".into());
            }
            raw_outputs = s.texts;
            let correct = score(question, &output);
            (output, correct, sink.take_sorted())
        }
        MethodSpec::SelfConsistency { k, temperature } => {
            let calls = (0..*k)
                .map(|i| (ctx.baselines.single.clone(), format!("sc{k}:{i}"), Some(*temperature)))
                .collect();
            let s = sample(ctx, question, calls, &sink).await;
            let output = if mc {
                SystemOutput::Choice(self_consistency_select(&choices(question, &s.texts)))
            } else {
                SystemOutput::Text(text_mode_index(&s.texts).map(|i| s.texts[i].clone()).unwrap_or_default())
            };
            if s.failed > 0 {
                flags.push(format!("calls_failed:{}", s.failed));
            }
            raw_outputs = s.texts;
            let correct = score(question, &output);
            (output, correct, sink.take_sorted())
        }
        MethodSpec::MajorityVote | MethodSpec::BestOf3Oracle => {
            let oracle = matches!(spec, MethodSpec::BestOf3Oracle);
            let prefix = if oracle { "bo3" } else { "mv" };
            let calls = trio(ctx)?
                .into_iter()
                .enumerate()
                .map(|(i, ep)| (ep, format!("{prefix}:{i}"), None))
                .collect();
            let s = sample(ctx, question, calls, &sink).await;
            if s.failed > 0 {
                flags.push(format!("calls_failed:{}", s.failed));
            }
            let letters = choices(question, &s.texts);
            raw_outputs = s.texts.clone();
            let letters: [Option<Letter>; 3] = [letters[0], letters[1], letters[2]];
            let outputs: Vec<SystemOutput> = if mc {
                letters.iter().map(|l| SystemOutput::Choice(*l)).collect()
            } else {
                s.texts.iter().map(|t| SystemOutput::Text(t.clone())).collect()
            };
            if oracle {
                flags.push("oracle".into());
                let correct = match (&question.gold, mc) {
                    (Gold::Letter(gold), true) => best_of_3(&letters, *gold),
                    _ => outputs.iter().any(|o| score(question, o)),
                };
                let shown = outputs.iter().position(|o| score(question, o)).unwrap_or(0);
                (outputs[shown].clone(), correct, sink.take_sorted())
            } else {
                let output = if mc {
                    SystemOutput::Choice(majority_vote(&letters))
                } else {
                    outputs[text_majority_index(&s.texts)].clone()
                };
                let correct = score(question, &output);
                (output, correct, sink.take_sorted())
            }
        }
    };
    let usage = aggregate_query(&traces, &ctx.pricing);
    let record = QuestionRecord {
        method,
        question_id: question.id.clone(),
        category: question.category.clone(),
        correct,
        system_output,
        usage,
        all_consistent,
        claim_tags,
        flags,
        raw_outputs,
    };
    Ok((record, traces))
}

/// A method's records plus the traces behind them, in question order.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub result: MethodResult,
    pub traces: Vec<CallTrace>,
}

/// Evaluates every question (concurrently, order preserved).
pub async fn run_method(ctx: &EvalContext<'_>, spec: &MethodSpec, set: &BenchmarkSet) -> Result<MethodRun, EvalError> {
    let outcomes: Vec<_> = stream::iter(set.items.iter())
        .map(|q| run_question(ctx, spec, q))
        .buffered(ctx.question_parallelism.max(1))
        .collect()
        .await;
    let mut records = Vec::with_capacity(outcomes.len());
    let mut traces = Vec::new();
    for outcome in outcomes {
        let (record, t) = outcome?;
        records.push(record);
        traces.extend(t);
    }
    Ok(MethodRun { result: MethodResult::new(spec.id(), records), traces })
}
