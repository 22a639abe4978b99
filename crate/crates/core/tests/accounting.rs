use proptest::prelude::*;

use edgejury_core::accounting::{aggregate_query, percentile, stage_breakdown};
use edgejury_core::{CallTrace, PricingModel, Stage};

fn trace(q: usize, stage: Stage, slot: usize, tokens: (u64, u64), neurons: Option<u64>, latency: u64) -> CallTrace {
    CallTrace {
        query_id: format!("q{q}"),
        method: "EJ-Full".into(),
        stage,
        slot: slot.to_string(),
        model_id: "m".into(),
        input_tokens: tokens.0,
        output_tokens: tokens.1,
        latency_ms: latency,
        neurons,
        ttft_ms: None,
        token_counts_estimated: false,
        failed: false,
        timestamp_ms: 0,
    }
}

fn traces() -> impl Strategy<Value = Vec<CallTrace>> {
    let stage = prop::sample::select(vec![Stage::Stage1, Stage::Stage2, Stage::Stage3, Stage::Stage4]);
    prop::collection::vec(
        (0usize..5, stage, 0usize..4, (0u64..2000, 0u64..2000), prop::option::of(0u64..5000), 0u64..10_000),
        0..60,
    )
    .prop_map(|v| v.into_iter().map(|(q, s, slot, t, n, l)| trace(q, s, slot, t, n, l)).collect())
}

proptest! {
    #[test]
    fn usd_is_linear_in_rate(ts in traces(), rate in 0.001f64..1.0) {
        let one = aggregate_query(&ts, &PricingModel { usd_per_1k_neurons: rate });
        let two = aggregate_query(&ts, &PricingModel { usd_per_1k_neurons: 2.0 * rate });
        match (one.usd, two.usd) {
            (Some(a), Some(b)) => prop_assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs().max(1.0)),
            (None, None) => prop_assert!(ts.iter().all(|t| t.neurons.is_none())),
            _ => prop_assert!(false, "usd presence differs"),
        }
        prop_assert_eq!(one.total_tokens, one.input_tokens + one.output_tokens);
    }

    #[test]
    fn percentiles_are_ordered(values in prop::collection::vec(0u64..100_000, 1..200)) {
        prop_assert!(percentile(&values, 50.0) <= percentile(&values, 95.0));
    }

    #[test]
    fn stage_calls_sum_to_query_calls(ts in traces()) {
        let usage = aggregate_query(&ts, &PricingModel::default());
        let rows = stage_breakdown(&ts);
        prop_assert_eq!(rows.iter().map(|r| r.calls).sum::<usize>(), usage.calls as usize);
        for r in &rows {
            prop_assert!(r.p50_ms <= r.p95_ms);
        }
    }
}
