use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use proptest::prelude::*;

use edgejury_core::accounting::{aggregate_query, TraceCollector};
use edgejury_core::gateway::{
    ChatBackend, ChatMessage, ChatRequest, ChatResponse, FixtureRecord, GatewayError, RequestTag, RetryPolicy,
};
use edgejury_core::{EndpointConfig, Gateway, MockBackend, PricingModel, Stage};

fn request(q: &str, slot: &str, order: u32) -> ChatRequest {
    ChatRequest::new(vec![ChatMessage::user("hi")], RequestTag::new(q, Stage::Stage1, slot, order))
}

/// Answers with the slot name after a delay that shrinks with the slot
/// index, so later requests finish first.
struct Reversed;

#[async_trait]
impl ChatBackend for Reversed {
    async fn send(&self, _: &EndpointConfig, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let i: u64 = req.tag.slot.parse().unwrap();
        tokio::time::sleep(Duration::from_millis(20 - i)).await;
        if i % 5 == 4 {
            return Err(GatewayError::Status { status: 400, body: req.tag.slot.clone() });
        }
        Ok(ChatResponse {
            text: req.tag.slot.clone(),
            input_tokens: 1,
            output_tokens: 1,
            latency_ms: 1,
            neurons: None,
            ttft_ms: None,
            token_counts_estimated: false,
        })
    }
}

#[tokio::test]
async fn parallel_results_keep_input_order() {
    let gw = Gateway::new(Arc::new(Reversed)).with_parallelism(16);
    let ep = EndpointConfig::new("m");
    for size in 1..=16u32 {
        let batch: Vec<_> = (0..size).map(|i| (ep.clone(), request("q", &i.to_string(), i))).collect();
        let sink = TraceCollector::new("t");
        let out = gw.complete_parallel(&batch, &sink).await;
        assert_eq!(out.len(), size as usize);
        for (i, r) in out.iter().enumerate() {
            match r {
                Ok(resp) => assert_eq!(resp.text, i.to_string()),
                Err(GatewayError::Status { body, .. }) => assert_eq!(body, &i.to_string()),
                Err(e) => panic!("{e}"),
            }
        }
        let traces = sink.take_sorted();
        let slots: Vec<String> = traces.iter().map(|t| t.slot.clone()).collect();
        assert_eq!(slots, (0..size).map(|i| i.to_string()).collect::<Vec<_>>());
    }
}

/// Fails a fixed number of times with a retryable error, then succeeds.
struct Flaky {
    failures: AtomicU32,
    attempts: AtomicU32,
}

#[async_trait]
impl ChatBackend for Flaky {
    async fn send(&self, _: &EndpointConfig, _: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        if self.failures.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok() {
            return Err(GatewayError::Status { status: 503, body: "busy".into() });
        }
        Ok(ChatResponse {
            text: "ok".into(),
            input_tokens: 3,
            output_tokens: 2,
            latency_ms: 5,
            neurons: Some(10),
            ttft_ms: None,
            token_counts_estimated: false,
        })
    }
}

#[tokio::test]
async fn retries_emit_one_trace_per_logical_call() {
    for failures in 0..=2 {
        let backend = Arc::new(Flaky { failures: AtomicU32::new(failures), attempts: AtomicU32::new(0) });
        let gw = Gateway::new(backend.clone()).with_retry(RetryPolicy { max_retries: 2, initial_backoff_ms: 1 });
        let sink = TraceCollector::new("t");
        let r = gw.complete(&EndpointConfig::new("m"), &request("q", "direct", 0), &sink).await;
        assert!(r.is_ok());
        assert_eq!(backend.attempts.load(Ordering::SeqCst), failures + 1);
        let traces = sink.take_sorted();
        assert_eq!(traces.len(), 1);
        assert!(!traces[0].failed);
        let usage = aggregate_query(&traces, &PricingModel::default());
        assert_eq!((usage.calls, usage.total_tokens, usage.neurons), (1, 5, Some(10)));
    }
}

proptest! {
    #[test]
    fn missing_usage_is_estimated(text in "\\PC{0,200}") {
        let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
        let mock = MockBackend::from_records([FixtureRecord::new("q", Stage::Stage1, "direct", text.clone())]).unwrap();
        let gw = Gateway::new(Arc::new(mock));
        let sink = TraceCollector::new("t");
        let resp = rt.block_on(gw.complete(&EndpointConfig::new("m"), &request("q", "direct", 0), &sink)).unwrap();
        let chars = text.chars().count() as u64;
        prop_assert_eq!(resp.output_tokens, chars.div_ceil(4));
        prop_assert!(resp.token_counts_estimated);
        let traces = sink.take_sorted();
        prop_assert!(traces[0].token_counts_estimated);
        prop_assert_eq!(aggregate_query(&traces, &PricingModel::default()).estimated_calls, 1);
    }
}
