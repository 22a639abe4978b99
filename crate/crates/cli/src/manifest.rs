use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use edgejury_core::evalharness::{BenchmarkKind, SampleManifest, StatOptions};
use edgejury_core::MethodSpec;

use crate::config::{canonical_hash, RunConfig};

/// Recorded when the run is not made from a checkout with a known commit.
pub const UNVERSIONED: &str = "unversioned";

pub const EM_NORMALIZATION: &str = "lowercase; strip punctuation; drop leading a/an/the; collapse whitespace";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub name: String,
    pub path: String,
    pub kind: BenchmarkKind,
    pub manifest: SampleManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub engine_version: String,
    pub commit: String,
    pub config_hash: String,
    /// Hash of the config as each method ran it (stage toggles included).
    pub method_config_hashes: BTreeMap<String, String>,
    pub prompt_hashes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkRecord>,
    pub methods: Vec<String>,
    pub stat_options: StatOptions,
    pub em_normalization: String,
    pub started_at: String,
    pub finished_at: String,
    pub trace_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stat_report_path: Option<String>,
    /// Blind multiple-choice parse sample for manual checking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_sample_path: Option<String>,
    /// Stage-2 reviewers receive the question text along with the candidates.
    #[serde(default)]
    pub reviewer_sees_question: bool,
}

/// Config hash for one method: the config with the method's stage toggles
/// applied.
pub fn method_config_hash(config: &RunConfig, spec: &MethodSpec) -> String {
    let mut c = config.clone();
    if let MethodSpec::Council { stages, role_specialization } = spec {
        c.stages.stage2 = stages.stage2;
        c.stages.stage3 = stages.stage3;
        c.stages.stage4 = stages.stage4;
        c.stages.role_specialization = *role_specialization;
    }
    canonical_hash(&serde_json::json!({ "config": c, "method": spec.id() }))
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
