//! Run configuration: one TOML file holding every tunable of a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use edgejury_core::council::{sha256_hex, PromptCatalog};
use edgejury_core::evalharness::{BaselineConfig, StatOptions};
use edgejury_core::gateway::{ChatBackend, HttpBackend, RetryPolicy};
use edgejury_core::{CouncilConfig, EndpointConfig, Gateway, MockBackend, PricingModel, StageToggles};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Live,
    Mock { fixture: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolesConfig {
    pub direct: String,
    pub edge_case: String,
    pub step_by_step: String,
    pub pragmatic: String,
    pub chairman: String,
    pub verifier: String,
    /// Reviewer slot endpoints; defaults to the four role endpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewers: Option<Vec<String>>,
}

impl RolesConfig {
    fn generators(&self) -> [&str; 4] {
        [&self.direct, &self.edge_case, &self.step_by_step, &self.pragmatic]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselinesConfig {
    pub single: String,
    pub trio: Vec<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagesConfig {
    #[serde(default = "yes")]
    pub stage2: bool,
    #[serde(default = "yes")]
    pub stage3: bool,
    #[serde(default = "yes")]
    pub stage4: bool,
    #[serde(default = "yes")]
    pub role_specialization: bool,
}

impl Default for StagesConfig {
    fn default() -> Self {
        Self { stage2: true, stage3: true, stage4: true, role_specialization: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(default = "default_resamples")]
    pub n_resamples: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Bootstrap seed; defaults to `run_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Method every other method is compared against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

fn default_resamples() -> usize {
    10_000
}

fn default_alpha() -> f64 {
    0.05
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { n_resamples: default_resamples(), alpha: default_alpha(), seed: None, reference: None }
    }
}

fn default_parallelism() -> usize {
    8
}

fn default_max_tokens() -> u32 {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_seed: u64,
    /// Model calls in flight at once.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Questions evaluated at once.
    #[serde(default = "default_parallelism")]
    pub question_parallelism: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// TOML table of prompt overrides keyed by role, "reviewer", "chairman"
    /// or "verifier".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    #[serde(default)]
    pub stages: StagesConfig,
    #[serde(default)]
    pub pricing: PricingModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry: Option<RetryPolicy>,
    #[serde(default)]
    pub stats: StatsConfig,
    pub backend: BackendConfig,
    pub endpoints: BTreeMap<String, EndpointConfig>,
    pub roles: RolesConfig,
    pub baselines: BaselinesConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let mut refs: Vec<(&str, &str)> = self
            .roles
            .generators()
            .into_iter()
            .zip(["direct", "edge_case", "step_by_step", "pragmatic"])
            .map(|(r, k)| (k, r))
            .collect();
        refs.push(("chairman", &self.roles.chairman));
        refs.push(("verifier", &self.roles.verifier));
        refs.push(("baselines.single", &self.baselines.single));
        for r in &self.baselines.trio {
            refs.push(("baselines.trio", r));
        }
        for r in self.roles.reviewers.iter().flatten() {
            refs.push(("reviewers", r));
        }
        for (field, name) in refs {
            ensure!(self.endpoints.contains_key(name), "{field} refers to undefined endpoint {name:?}");
        }
        if let Some(r) = &self.roles.reviewers {
            ensure!(r.len() == 4, "roles.reviewers needs 4 endpoints, got {}", r.len());
        }
        ensure!(self.baselines.trio.len() == 3, "baselines.trio needs 3 endpoints, got {}", self.baselines.trio.len());
        ensure!(self.parallelism >= 1 && self.question_parallelism >= 1, "parallelism must be at least 1");
        ensure!(self.max_tokens >= 1, "max_tokens must be at least 1");
        ensure!((0.0..=2.0).contains(&self.temperature), "temperature must be in [0, 2]");
        ensure!(self.stats.n_resamples >= 1, "stats.n_resamples must be at least 1");
        ensure!(self.stats.alpha > 0.0 && self.stats.alpha < 1.0, "stats.alpha must be in (0, 1)");
        for (name, ep) in &self.endpoints {
            ep.validate().with_context(|| format!("endpoint {name:?}"))?;
            if matches!(self.backend, BackendConfig::Live) && ep.base_url.is_empty() {
                bail!("endpoint {name:?} has no base_url, which live mode needs");
            }
        }
        Ok(())
    }

    /// sha256 of the canonical JSON form (sorted keys, no whitespace).
    pub fn hash(&self) -> String {
        canonical_hash(&serde_json::to_value(self).expect("config serializes"))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn fixture_path(&self) -> Option<PathBuf> {
        match &self.backend {
            BackendConfig::Mock { fixture } => Some(self.resolve(fixture)),
            BackendConfig::Live => None,
        }
    }

    pub fn prompt_catalog(&self) -> Result<PromptCatalog> {
        let Some(path) = &self.prompts else { return Ok(PromptCatalog::default()) };
        let path = self.resolve(path);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading prompts {}", path.display()))?;
        let overrides: BTreeMap<String, String> =
            toml::from_str(&text).with_context(|| format!("parsing prompts {}", path.display()))?;
        Ok(PromptCatalog::with_overrides(overrides)?)
    }

    fn endpoint(&self, name: &str) -> EndpointConfig {
        self.endpoints[name].clone()
    }

    pub fn council(&self, prompts: PromptCatalog) -> CouncilConfig {
        let gens = self.roles.generators().map(|n| self.endpoint(n));
        let mut c = CouncilConfig::new(gens, self.endpoint(&self.roles.chairman), self.endpoint(&self.roles.verifier), prompts);
        if let Some(r) = &self.roles.reviewers {
            c.reviewers = r.iter().map(|n| self.endpoint(n)).collect();
        }
        c.stages = StageToggles { stage2: self.stages.stage2, stage3: self.stages.stage3, stage4: self.stages.stage4 };
        c.role_specialization = self.stages.role_specialization;
        c.run_seed = self.run_seed;
        c.temperature = self.temperature;
        c.max_tokens = self.max_tokens;
        c
    }

    pub fn baselines(&self) -> BaselineConfig {
        BaselineConfig {
            single: self.endpoint(&self.baselines.single),
            trio: self.baselines.trio.iter().map(|n| self.endpoint(n)).collect(),
        }
    }

    pub fn stat_options(&self) -> StatOptions {
        StatOptions {
            seed: self.stats.seed.unwrap_or(self.run_seed),
            n_resamples: self.stats.n_resamples,
            alpha: self.stats.alpha,
            reference: self.stats.reference.clone(),
        }
    }

    /// Builds the gateway. Live mode fails here, before any call, when an
    /// auth variable is unset.
    pub fn gateway(&self) -> Result<Gateway> {
        let backend: Arc<dyn ChatBackend> = match &self.backend {
            BackendConfig::Mock { .. } => {
                let path = self.fixture_path().expect("mock");
                Arc::new(MockBackend::load(&path).with_context(|| format!("loading fixture {}", path.display()))?)
            }
            BackendConfig::Live => {
                HttpBackend::check_auth(self.endpoints.values())?;
                Arc::new(HttpBackend::new())
            }
        };
        let mut gw = Gateway::new(backend).with_parallelism(self.parallelism);
        if let Some(r) = self.retry {
            gw = gw.with_retry(r);
        }
        Ok(gw)
    }
}

pub fn canonical_hash(value: &serde_json::Value) -> String {
    // serde_json maps are sorted, so this string is canonical.
    sha256_hex(&serde_json::to_string(value).expect("value serializes"))
}

/// A mock-mode config over four generator endpoints, used by `synth`.
pub fn example_mock_config(fixture: &str, run_seed: u64) -> String {
    format!(
        r#"run_seed = {run_seed}
parallelism = 8
question_parallelism = 8
temperature = 0.0
max_tokens = 512

[backend]
mode = "mock"
fixture = "{fixture}"

[stages]
stage2 = true
stage3 = true
stage4 = true
role_specialization = true

[pricing]
usd_per_1k_neurons = 0.011

[stats]
n_resamples = 2000
alpha = 0.05

[endpoints.llama-8b-a]
endpoint_id = "@cf/meta/llama-3.1-8b-instruct"

[endpoints.llama-8b-b]
endpoint_id = "@cf/meta/llama-3.1-8b-instruct"

[endpoints.llama-3b]
endpoint_id = "@cf/meta/llama-3.2-3b-instruct"

[endpoints.mistral-7b]
endpoint_id = "@hf/mistral/mistral-7b-instruct-v0.2"

[roles]
direct = "llama-8b-a"
edge_case = "llama-8b-b"
step_by_step = "llama-3b"
pragmatic = "mistral-7b"
chairman = "llama-8b-a"
verifier = "llama-8b-a"

[baselines]
single = "llama-8b-a"
trio = ["llama-8b-a", "llama-3b", "mistral-7b"]
"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        let c: RunConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    #[test]
    fn example_parses_and_hash_is_stable() {
        let a = parse(&example_mock_config("f.jsonl", 0)).unwrap();
        let b = parse(&example_mock_config("f.jsonl", 0)).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = parse(&example_mock_config("f.jsonl", 1)).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn undefined_endpoint_is_named() {
        let text = example_mock_config("f.jsonl", 0).replace("chairman = \"llama-8b-a\"", "chairman = \"nope\"");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("chairman") && err.contains("nope"), "{err}");
    }

    #[test]
    fn seed_is_required() {
        let text = example_mock_config("f.jsonl", 0).replace("run_seed = 0\n", "");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn stage_toggles_change_the_hash() {
        let a = parse(&example_mock_config("f.jsonl", 0)).unwrap();
        let mut b = a.clone();
        b.stages.stage2 = false;
        assert_ne!(a.hash(), b.hash());
    }
}
