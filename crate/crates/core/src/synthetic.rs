//! Deterministic synthetic benchmarks and matching mock fixtures.
//!
//! Used by the test suites, the benches and the CLI `demo` material. A suite
//! scripts every call the engine can make for each question (all council
//! stages and every baseline slot), so any method can run against it.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::accounting::Stage;
use crate::council::{anonymize, derive_seed, verifier_map, AnonymizationMap};
use crate::evalharness::{BenchmarkKind, BenchmarkSet, Combine, Rubric, RubricCheck, SampleManifest};
use crate::gateway::FixtureRecord;
use crate::schemas::{Gold, Letter, McOption, Question, QuestionKind, RoleId, CANDIDATE_COUNT};

pub const CATEGORIES: [&str; 5] = ["Misconceptions", "Health", "Law", "Science", "History"];

/// Per-call usage of a council call: ten calls sum to 3,000 in, 900 out and
/// 12,500 Neurons.
pub const COUNCIL_CALL_TOKENS: (u64, u64) = (300, 90);
pub const COUNCIL_CALL_NEURONS: u64 = 1_250;

/// Stage latency targets (P50, P95) planted in generated traces.
pub const STAGE_LATENCY_TARGETS: [(Stage, u64, u64); 4] = [
    (Stage::Stage1, 2_850, 4_200),
    (Stage::Stage2, 2_140, 3_800),
    (Stage::Stage3, 2_410, 4_100),
    (Stage::Stage4, 1_020, 2_100),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub questions: usize,
    /// Seeds the generated content.
    pub seed: u64,
    /// The council run seed the reviews are written against.
    pub run_seed: u64,
    /// Self-consistency sample counts to script.
    pub sc_k: Vec<usize>,
    /// Inject malformed outputs and failed calls.
    pub faults: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { questions: 20, seed: 7, run_seed: 0, sc_k: vec![3, 5], faults: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSuite {
    pub benchmark: BenchmarkSet,
    pub fixtures: Vec<FixtureRecord>,
}

/// `n` latencies whose nearest-rank P50 and P95 are exactly `p50` and
/// `p95`, in a seeded order. Needs `n >= 2` so the two ranks differ.
pub fn planted_latencies(n: usize, p50: u64, p95: u64, rng: &mut impl Rng) -> Vec<u64> {
    assert!(n > 0 && p50 <= p95);
    let r50 = crate::accounting::nearest_rank_index(n, 50.0);
    let r95 = crate::accounting::nearest_rank_index(n, 95.0);
    let mut values: Vec<u64> = (0..n)
        .map(|r| {
            if r < r50 {
                p50 * 6 / 10 + (p50 * 4 / 10) * r as u64 / r50.max(1) as u64
            } else if r == r50 {
                p50
            } else if r < r95 {
                p50 + (p95 - p50) * (r - r50) as u64 / (r95 - r50) as u64
            } else if r == r95 {
                p95
            } else {
                p95 + 100 * (r - r95) as u64
            }
        })
        .collect();
    // Keep the planted ranks exact when p50 == p95 or ranks coincide.
    values.sort_unstable();
    for i in (0..n).rev() {
        let j = rng.random_range(0..=i);
        values.swap(i, j);
    }
    values
}

fn rng_for(seed: u64, query_id: &str, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, query_id, purpose, 0))
}

fn pick_letter(rng: &mut ChaCha8Rng, gold: Letter, p_correct: f64, n_options: usize) -> Letter {
    if rng.random_bool(p_correct) {
        return gold;
    }
    let wrong: Vec<Letter> = Letter::ALL[..n_options].iter().copied().filter(|l| *l != gold).collect();
    *wrong.choose(rng).expect("at least two options")
}

fn council_record(q: &str, stage: Stage, slot: &str, text: String, latency: u64) -> FixtureRecord {
    FixtureRecord::new(q, stage, slot, text)
        .with_tokens(COUNCIL_CALL_TOKENS.0, COUNCIL_CALL_TOKENS.1)
        .with_neurons(COUNCIL_CALL_NEURONS)
        .with_latency(latency)
}

fn baseline_record(q: &str, slot: String, letter: Letter, tokens: (u64, u64), neurons: u64, latency: u64) -> FixtureRecord {
    let text = format!("The most defensible option is {letter}.\nFINAL: {letter}");
    FixtureRecord::new(q, Stage::Baseline, slot, text)
        .with_tokens(tokens.0, tokens.1)
        .with_neurons(neurons)
        .with_latency(latency)
}

fn review_json(
    map: &AnonymizationMap,
    letters: &[Option<Letter>; CANDIDATE_COUNT],
    gold: Letter,
    rng: &mut ChaCha8Rng,
    drop_one: bool,
) -> String {
    let mut rankings = Vec::new();
    let mut issues = Vec::new();
    let mut best = (0u8, 0usize);
    for (k, letter) in letters.iter().enumerate() {
        let label = map.label_of(k).to_string();
        let correct = *letter == Some(gold);
        let accuracy: u8 = if correct { rng.random_range(7..=9) } else { rng.random_range(3..=6) };
        if accuracy > best.0 {
            best = (accuracy, k);
        }
        rankings.push(json!({
            "candidate": label,
            "accuracy": accuracy,
            "insight": rng.random_range(5..=9u8),
            "clarity": rng.random_range(5..=9u8),
        }));
        match letter {
            None => issues.push(json!({"candidate": label, "type": "incomplete", "detail": "No final option is selected."})),
            Some(l) if !correct => issues.push(json!({
                "candidate": label,
                "type": "factual_risk",
                "detail": format!("Selects option {l}, which rests on a common misconception."),
            })),
            _ => {}
        }
    }
    if drop_one {
        rankings.pop();
    }
    let review = json!({
        "rankings": rankings,
        "issues": issues,
        "best_bits": [{"candidate": map.label_of(best.1).to_string(), "extract": "States the key fact plainly."}],
    });
    review.to_string()
}

fn verifier_json(map: &AnonymizationMap, letters: &[Option<Letter>; CANDIDATE_COUNT], chosen: Letter, rng: &mut ChaCha8Rng) -> String {
    let n_claims = rng.random_range(1..=3);
    let claims: Vec<_> = (0..n_claims)
        .map(|c| {
            let evidence: Vec<_> = map
                .presentation_order()
                .iter()
                .map(|&k| {
                    let (label, span) = match letters[k] {
                        Some(l) if l == chosen => ("support", format!("FINAL: {l}")),
                        Some(l) if rng.random_bool(0.35) => ("contradict", format!("FINAL: {l}")),
                        _ => ("irrelevant", String::new()),
                    };
                    json!({"candidate": map.label_of(k).to_string(), "label": label, "span": span})
                })
                .collect();
            json!({"claim": format!("Claim {} supporting option {chosen}.", c + 1), "evidence": evidence})
        })
        .collect();
    json!({ "claims": claims }).to_string()
}

fn mc_question(index: usize, rng: &mut ChaCha8Rng) -> Question {
    let id = format!("q{index:03}");
    let n_options = if rng.random_bool(0.2) { 5 } else { 4 };
    let gold = Letter::ALL[rng.random_range(0..n_options)];
    let options = Letter::ALL[..n_options]
        .iter()
        .map(|l| McOption { letter: *l, text: format!("Statement {l} about item {index}") })
        .collect();
    Question {
        id,
        category: CATEGORIES[index % CATEGORIES.len()].to_string(),
        kind: QuestionKind::MultipleChoice,
        text: format!("Which statement about item {index} is true?"),
        options,
        gold: Gold::Letter(gold),
    }
}

/// Role accuracies used for Stage-1 draws.
const ROLE_ACCURACY: [f64; CANDIDATE_COUNT] = [0.62, 0.55, 0.60, 0.55];

/// A multiple-choice suite with fixtures for every method.
pub fn mc_suite(opts: &SuiteOptions) -> SyntheticSuite {
    let mut latency_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let stage_latency: Vec<Vec<u64>> = STAGE_LATENCY_TARGETS
        .iter()
        .map(|(_, p50, p95)| planted_latencies(opts.questions.max(1), *p50, *p95, &mut latency_rng))
        .collect();

    let mut items = Vec::with_capacity(opts.questions);
    let mut fixtures = Vec::new();
    for i in 0..opts.questions {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, &format!("q{i:03}"), "question", 0));
        let question = mc_question(i, &mut rng);
        let q = question.id.as_str();
        let gold = question.gold_letter().expect("mc");
        let n_options = question.options.len();
        let faults = opts.faults;
        let mut content = rng_for(opts.seed, q, "content");

        // Stage 1
        let failed_slot = (faults && content.random_bool(0.05)).then(|| content.random_range(0..CANDIDATE_COUNT));
        let mut letters: [Option<Letter>; CANDIDATE_COUNT] = [None; CANDIDATE_COUNT];
        for (k, role) in RoleId::ALL.iter().enumerate() {
            let latency = stage_latency[0][i] - 40 * (k as u64 % 2) * u64::from(k != 0);
            let slot = role.as_str();
            if failed_slot == Some(k) {
                fixtures.push(FixtureRecord::new(q, Stage::Stage1, slot, "").failing().with_latency(latency));
                continue;
            }
            let letter = pick_letter(&mut content, gold, ROLE_ACCURACY[k], n_options);
            let text = if faults && k == 0 && content.random_bool(0.04) {
                "It depends on how the statement is read.".to_string()
            } else if faults && k == 1 && content.random_bool(0.03) {
                let other = pick_letter(&mut content, gold, 0.0, n_options);
                format!("Either could hold.\nFINAL: {letter}\nFINAL: {other}")
            } else {
                letters[k] = Some(letter);
                format!("{} considers statement {letter} the accurate one.\nFINAL: {letter}", role.display_name())
            };
            // Latency is highest on slot 0 so the stage maximum is the planted value.
            let latency = if k == 0 { stage_latency[0][i] } else { latency.saturating_sub(100 + 10 * k as u64) };
            let ttft = 200 + 25 * k as u64 + (i as u64 * 37) % 180;
            fixtures.push(council_record(q, Stage::Stage1, slot, text, latency).with_ttft(ttft));
        }
        // Re-derive letters exactly as the engine will extract them.
        for (k, role) in RoleId::ALL.iter().enumerate() {
            let rec = fixtures.iter().rev().find(|r| r.query_id == q && r.stage == Stage::Stage1 && r.slot == role.as_str());
            letters[k] = rec.and_then(|r| crate::schemas::extract_choice_letter(crate::schemas::ChoiceSource::Text(&r.text)));
        }

        // Stage 2
        for (j, role) in RoleId::ALL.iter().enumerate() {
            let map = anonymize(j, opts.run_seed, q);
            let latency = if j == 0 { stage_latency[1][i] } else { stage_latency[1][i].saturating_sub(50 * j as u64) };
            let text = if faults && content.random_bool(0.04) {
                "Candidate A looks best overall to me.".to_string()
            } else {
                let drop_one = faults && content.random_bool(0.05);
                let body = review_json(&map, &letters, gold, &mut content, drop_one);
                if content.random_bool(0.2) { format!("```json\n{body}\n```") } else { body }
            };
            fixtures.push(council_record(q, Stage::Stage2, role.as_str(), text, latency));
        }

        // Stage 3
        let present: Vec<Letter> = letters.iter().flatten().copied().collect();
        let majority = crate::evalharness::self_consistency_select(&letters);
        let chosen = if content.random_bool(0.8) { gold } else { majority.unwrap_or(gold) };
        let chair_text = if faults && content.random_bool(0.03) {
            let other = pick_letter(&mut content, gold, 0.0, n_options);
            json!({"choice": format!("{chosen} or {other}"), "final_answer": "", "rationale": [], "open_questions": [], "disagreements": []}).to_string()
        } else if faults && content.random_bool(0.02) {
            json!({"choice": "null", "final_answer": "", "rationale": [], "open_questions": [], "disagreements": []}).to_string()
        } else {
            let disagreements = if present.iter().any(|l| *l != chosen) {
                json!([{"topic": "which statement holds", "positions": present.iter().map(|l| l.to_string()).collect::<Vec<_>>(), "resolution": format!("{chosen} survives review")}])
            } else {
                json!([])
            };
            json!({
                "choice": chosen.to_string(),
                "final_answer": format!("Statement {chosen} is accurate."),
                "rationale": ["Most reviewers rated this option highest."],
                "open_questions": [],
                "disagreements": disagreements,
            })
            .to_string()
        };
        fixtures.push(council_record(q, Stage::Stage3, "chair", chair_text, stage_latency[2][i]));

        // Stage 4
        let vmap = verifier_map(opts.run_seed, q);
        let verifier_text = if faults && content.random_bool(0.03) {
            "All claims look fine.".to_string()
        } else {
            verifier_json(&vmap, &letters, chosen, &mut content)
        };
        fixtures.push(council_record(q, Stage::Stage4, "verifier", verifier_text, stage_latency[3][i]));

        // Baselines
        let mut base = rng_for(opts.seed, q, "baselines");
        let s1 = pick_letter(&mut base, gold, 0.6, n_options);
        fixtures.push(baseline_record(q, "s1".into(), s1, (300, 200), 1_200, 1_900));
        for &k in &opts.sc_k {
            for s in 0..k {
                let l = pick_letter(&mut base, gold, 0.6, n_options);
                let out = if k == 5 { 180 } else { 200 };
                fixtures.push(baseline_record(q, format!("sc{k}:{s}"), l, (300, out), 1_200, 1_900 + 10 * s as u64));
            }
        }
        let trio_neurons = [1_200, 1_300, 1_300];
        let trio_acc = [0.6, 0.55, 0.5];
        for m in 0..3 {
            let l = pick_letter(&mut base, gold, trio_acc[m], n_options);
            fixtures.push(baseline_record(q, format!("mv:{m}"), l, (300, 200), trio_neurons[m], 1_900));
            fixtures.push(baseline_record(q, format!("bo3:{m}"), l, (300, 200), trio_neurons[m], 1_900));
        }

        items.push(question);
    }
    let item_ids = items.iter().map(|q| q.id.clone()).collect();
    SyntheticSuite {
        benchmark: BenchmarkSet {
            name: "synthetic-mc".into(),
            kind: BenchmarkKind::Mc1,
            items,
            sample_manifest: SampleManifest { seed: Some(opts.seed), source_split: Some("synthetic".into()), item_ids },
        },
        fixtures,
    }
}

pub const SEASONS_ID: &str = "seasons";

pub const SEASONS_CANDIDATES: [&str; CANDIDATE_COUNT] = [
    "Seasons are caused by Earth's axial tilt of approximately 23.5 degrees. As Earth orbits the Sun, different hemispheres receive more direct sunlight at different times of year, causing summer (more direct light) and winter (less direct light).",
    "Earth's 23.5-degree axial tilt causes seasons. Key considerations: (1) This is NOT caused by Earth's distance from the Sun - Earth is actually closest to the Sun during Northern Hemisphere winter. (2) Equatorial regions experience minimal seasonal variation. (3) The Arctic/Antarctic have extreme seasons with 24-hour daylight or darkness.",
    "Step 1: Earth's axis is tilted 23.5 degrees relative to its orbital plane.\nStep 2: During the Northern Hemisphere summer, the North Pole tilts toward the Sun.\nStep 3: This causes sunlight to hit the Northern Hemisphere more directly (higher angle).\nStep 4: More direct sunlight = more energy per unit area = warmer temperatures.\nStep 5: Six months later, the South Pole tilts toward the Sun, reversing the seasons.",
    "Seasons result from axial tilt. Practical implications: Plan travel around seasonal patterns; summer solstice (June 21) marks longest day in Northern Hemisphere; equinoxes (March 20, September 22) have equal day/night globally.",
];

pub const SEASONS_FINAL_ANSWER: &str = "Seasons on Earth are caused by the planet's axial tilt of approximately 23.5 degrees relative to its orbital plane around the Sun. As Earth orbits the Sun over the course of a year, this tilt causes different hemispheres to receive varying amounts of direct sunlight:\n\n1. When the Northern Hemisphere tilts toward the Sun (around June), it experiences summer with longer days and more direct sunlight, while the Southern Hemisphere has winter.\n\n2. Six months later (around December), the situation reverses.\n\nImportant clarification: Seasons are NOT caused by Earth's distance from the Sun. In fact, Earth is closest to the Sun (perihelion) in early January during Northern Hemisphere winter. The key factor is the angle of sunlight, not distance.\n\nNote: Equatorial regions experience minimal seasonal temperature variation, while polar regions have extreme seasons including 24-hour daylight or darkness near the solstices.";

/// (claim, per-candidate labels in index order) for the seasons example:
/// consistent, consistent, uncertain, consistent.
pub const SEASONS_CLAIMS: [(&str, [&str; CANDIDATE_COUNT]); 4] = [
    ("Earth's axial tilt is approximately 23.5 degrees", ["support", "support", "support", "support"]),
    ("Seasons are NOT caused by Earth's distance from the Sun", ["support", "support", "support", "irrelevant"]),
    ("Earth is closest to the Sun in early January", ["irrelevant", "support", "support", "irrelevant"]),
    ("Equatorial regions experience minimal seasonal variation", ["support", "support", "support", "irrelevant"]),
];

pub fn seasons_question() -> Question {
    Question {
        id: SEASONS_ID.into(),
        category: "Science".into(),
        kind: QuestionKind::Rubric,
        text: "What causes the seasons on Earth?".into(),
        options: vec![],
        gold: Gold::Rubric(Rubric {
            combine: Combine::All,
            checks: vec![
                RubricCheck::KeywordRequired { keywords: vec!["axial tilt".into()] },
                RubricCheck::KeywordForbidden { keywords: vec!["closer to the Sun in summer".into()] },
            ],
        }),
    }
}

/// Fixtures reproducing the seasons walkthrough: reviews that rank the edge
/// case finder first, a chairman synthesis without a `choice` key and four
/// labelled claims.
pub fn seasons_fixtures(run_seed: u64) -> Vec<FixtureRecord> {
    let q = SEASONS_ID;
    let mut out = Vec::new();
    for (k, role) in RoleId::ALL.iter().enumerate() {
        out.push(council_record(q, Stage::Stage1, role.as_str(), SEASONS_CANDIDATES[k].into(), 2_850));
    }
    // scores by candidate index: A, B, C, D in the walkthrough's naming
    let scores = [(8, 6, 8), (9, 9, 8), (8, 7, 9), (7, 6, 7)];
    for (j, role) in RoleId::ALL.iter().enumerate() {
        let map = anonymize(j, run_seed, q);
        let rankings: Vec<_> = scores
            .iter()
            .enumerate()
            .map(|(k, (a, i, c))| json!({"candidate": map.label_of(k).to_string(), "accuracy": a, "insight": i, "clarity": c}))
            .collect();
        let review = json!({
            "rankings": rankings,
            "issues": [
                {"candidate": map.label_of(0).to_string(), "type": "incomplete", "detail": "Does not address common misconception about distance from Sun."},
                {"candidate": map.label_of(3).to_string(), "type": "incomplete", "detail": "Focuses on practical implications but lacks explanation of mechanism."}
            ],
            "best_bits": [
                {"candidate": map.label_of(1).to_string(), "extract": "Explicitly debunks distance misconception; mentions polar extremes."},
                {"candidate": map.label_of(2).to_string(), "extract": "Clear step-by-step derivation; easy to follow."}
            ]
        });
        out.push(council_record(q, Stage::Stage2, role.as_str(), review.to_string(), 2_140));
    }
    let synthesis = json!({
        "final_answer": SEASONS_FINAL_ANSWER,
        "rationale": [
            "Combined B's misconception correction with C's step-by-step clarity",
            "Included B's edge cases about equatorial and polar regions",
            "Addressed the 'distance from Sun' misconception flagged as missing from A"
        ],
        "open_questions": [],
        "disagreements": []
    });
    out.push(council_record(q, Stage::Stage3, "chair", serde_json::to_string_pretty(&synthesis).unwrap(), 2_410));
    let vmap = verifier_map(run_seed, q);
    let claims: Vec<_> = SEASONS_CLAIMS
        .iter()
        .map(|(claim, labels)| {
            let evidence: Vec<_> = vmap
                .presentation_order()
                .iter()
                .map(|&k| json!({"candidate": vmap.label_of(k).to_string(), "label": labels[k], "span": if labels[k] == "irrelevant" { "" } else { "23.5" }}))
                .collect();
            json!({"claim": claim, "evidence": evidence})
        })
        .collect();
    out.push(council_record(q, Stage::Stage4, "verifier", json!({"claims": claims}).to_string(), 1_020));
    out
}
