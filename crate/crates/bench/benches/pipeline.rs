use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use edgejury_core::council::PromptCatalog;
use edgejury_core::evalharness::{run_method, BaselineConfig, EvalContext};
use edgejury_core::synthetic::{mc_suite, SuiteOptions};
use edgejury_core::{CouncilConfig, EndpointConfig, Gateway, MethodSpec, MockBackend, PricingModel};

/// Whole-suite council runs on the mock backend: orchestration overhead only.
fn council_suite(c: &mut Criterion) {
    let suite = mc_suite(&SuiteOptions { questions: 50, faults: true, ..SuiteOptions::default() });
    let gateway = Gateway::new(Arc::new(MockBackend::from_records(suite.fixtures).unwrap())).with_parallelism(8);
    let council = CouncilConfig::new(
        ["m1", "m2", "m3", "m4"].map(EndpointConfig::new),
        EndpointConfig::new("chair"),
        EndpointConfig::new("verifier"),
        PromptCatalog::default(),
    );
    let baselines = BaselineConfig {
        single: EndpointConfig::new("chair"),
        trio: ["chair", "m2", "m3"].into_iter().map(EndpointConfig::new).collect(),
    };
    let ctx = EvalContext {
        gateway: &gateway,
        council: &council,
        baselines: &baselines,
        pricing: PricingModel::default(),
        question_parallelism: 8,
    };
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let mut group = c.benchmark_group("suite50");
    group.sample_size(20);
    for spec in [MethodSpec::EJ_FULL, MethodSpec::SingleModel, "sc5".parse().unwrap()] {
        group.bench_function(spec.id(), |b| {
            b.iter(|| runtime.block_on(run_method(&ctx, &spec, &suite.benchmark)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, council_suite);
criterion_main!(benches);
