#![allow(dead_code)]

use std::sync::Arc;

use edgejury_core::council::PromptCatalog;
use edgejury_core::evalharness::{run_method, BaselineConfig, EvalContext, MethodRun};
use edgejury_core::gateway::FixtureRecord;
use edgejury_core::{BenchmarkSet, CouncilConfig, EndpointConfig, Gateway, MethodSpec, MockBackend, PricingModel};

pub fn council_config(run_seed: u64) -> CouncilConfig {
    let eps = ["llama-3.1-8b", "llama-3.1-8b", "llama-3.2-3b", "mistral-7b"].map(EndpointConfig::new);
    let mut config = CouncilConfig::new(
        eps,
        EndpointConfig::new("llama-3.1-8b"),
        EndpointConfig::new("llama-3.2-3b"),
        PromptCatalog::default(),
    );
    config.run_seed = run_seed;
    config
}

pub fn baselines() -> BaselineConfig {
    BaselineConfig {
        single: EndpointConfig::new("llama-3.1-8b"),
        trio: ["llama-3.1-8b", "llama-3.2-3b", "mistral-7b"].into_iter().map(EndpointConfig::new).collect(),
    }
}

pub fn gateway(fixtures: Vec<FixtureRecord>, parallelism: usize) -> Gateway {
    Gateway::new(Arc::new(MockBackend::from_records(fixtures).unwrap())).with_parallelism(parallelism)
}

pub async fn run(
    gateway: &Gateway,
    config: &CouncilConfig,
    spec: MethodSpec,
    set: &BenchmarkSet,
    question_parallelism: usize,
) -> MethodRun {
    let baselines = baselines();
    let ctx = EvalContext {
        gateway,
        council: config,
        baselines: &baselines,
        pricing: PricingModel::default(),
        question_parallelism,
    };
    run_method(&ctx, &spec, set).await.unwrap()
}
