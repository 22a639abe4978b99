//! Per-call traces and their rollups: tokens, Neurons, USD, latency percentiles.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

/// Pipeline stage a model call belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
    Stage3,
    Stage4,
    Baseline,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Stage1,
        Stage::Stage2,
        Stage::Stage3,
        Stage::Stage4,
        Stage::Baseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::Stage3 => "stage3",
            Stage::Stage4 => "stage4",
            Stage::Baseline => "baseline",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Stage::Stage1 => "Stage 1 (Generation)",
            Stage::Stage2 => "Stage 2 (Cross-Review)",
            Stage::Stage3 => "Stage 3 (Synthesis)",
            Stage::Stage4 => "Stage 4 (Verification)",
            Stage::Baseline => "Baseline",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One model call as recorded in the trace log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallTrace {
    pub query_id: String,
    #[serde(default)]
    pub method: String,
    pub stage: Stage,
    pub slot: String,
    pub model_id: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neurons: Option<u64>,
    /// Only when the provider reports it; never derived from latency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttft_ms: Option<u64>,
    #[serde(default)]
    pub token_counts_estimated: bool,
    /// The call failed after retries; token counts are zero.
    #[serde(default)]
    pub failed: bool,
    pub timestamp_ms: u64,
}

/// Receives traces as calls complete. `order` is the caller-assigned position
/// of the call within its stage, used to restore a deterministic order.
pub trait TraceSink: Send + Sync {
    fn record(&self, order: u32, trace: CallTrace);
}

/// Append-only per-query collector.
#[derive(Debug, Default)]
pub struct TraceCollector {
    method: String,
    entries: Mutex<Vec<(u32, CallTrace)>>,
}

impl TraceCollector {
    pub fn new(method: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drains the collected traces, sorted by stage and then call order.
    pub fn take_sorted(&self) -> Vec<CallTrace> {
        let mut entries = std::mem::take(&mut *self.entries.lock().unwrap());
        entries.sort_by(|(oa, a), (ob, b)| a.stage.cmp(&b.stage).then(oa.cmp(ob)));
        entries.into_iter().map(|(_, t)| t).collect()
    }
}

impl TraceSink for TraceCollector {
    fn record(&self, order: u32, mut trace: CallTrace) {
        if trace.method.is_empty() {
            trace.method = self.method.clone();
        }
        self.entries.lock().unwrap().push((order, trace));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingModel {
    pub usd_per_1k_neurons: f64,
}

impl Default for PricingModel {
    fn default() -> Self {
        Self { usd_per_1k_neurons: 0.011 }
    }
}

impl PricingModel {
    pub fn usd(&self, neurons: u64) -> f64 {
        neurons as f64 / 1000.0 * self.usd_per_1k_neurons
    }
}

/// Rounds half-up to `places` decimals. A relative nudge absorbs binary
/// representation error so that e.g. 0.1375 rounds to 0.138.
pub fn round_half_up(value: f64, places: u32) -> f64 {
    let scale = 10f64.powi(places as i32);
    let scaled = value * scale;
    let nudged = scaled + scaled.abs() * 1e-12 + 1e-12;
    (nudged + 0.5).floor() / scale
}

/// `$0.138`-style display with three decimals, rounded half-up.
pub fn format_usd(value: f64) -> String {
    format!("${:.3}", round_half_up(value, 3))
}

/// Per-query rollup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryUsage {
    pub calls: u32,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total_tokens: u64,
    /// Summed over calls that report Neurons; absent when none do.
    pub neurons: Option<u64>,
    pub usd: Option<f64>,
    /// Calls whose token counts were estimated from text length.
    #[serde(default)]
    pub estimated_calls: u32,
}

pub fn aggregate_query(traces: &[CallTrace], pricing: &PricingModel) -> QueryUsage {
    let mut usage = QueryUsage::default();
    for t in traces {
        usage.calls += 1;
        usage.input_tokens += t.input_tokens;
        usage.output_tokens += t.output_tokens;
        if let Some(n) = t.neurons {
            *usage.neurons.get_or_insert(0) += n;
        }
        if t.token_counts_estimated {
            usage.estimated_calls += 1;
        }
    }
    usage.total_tokens = usage.input_tokens + usage.output_tokens;
    usage.usd = usage.neurons.map(|n| pricing.usd(n));
    usage
}

/// Median; even counts average the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Field-wise medians over per-query usages. Medians are taken per field, so
/// `input + output` need not equal `total`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub queries: usize,
    pub calls: f64,
    pub input_tokens: f64,
    pub output_tokens: f64,
    pub total_tokens: f64,
    pub neurons: Option<f64>,
    pub usd: Option<f64>,
    /// Queries with at least one estimated token count (included in medians).
    pub queries_with_estimates: usize,
}

pub fn method_summary(usages: &[QueryUsage]) -> UsageSummary {
    let field = |f: fn(&QueryUsage) -> f64| {
        median(&usages.iter().map(f).collect::<Vec<_>>()).unwrap_or(0.0)
    };
    let neurons: Vec<f64> = usages.iter().filter_map(|u| u.neurons.map(|n| n as f64)).collect();
    let usd: Vec<f64> = usages.iter().filter_map(|u| u.usd).collect();
    UsageSummary {
        queries: usages.len(),
        calls: field(|u| u.calls as f64),
        input_tokens: field(|u| u.input_tokens as f64),
        output_tokens: field(|u| u.output_tokens as f64),
        total_tokens: field(|u| u.total_tokens as f64),
        neurons: median(&neurons),
        usd: median(&usd),
        queries_with_estimates: usages.iter().filter(|u| u.estimated_calls > 0).count(),
    }
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(q/100 * N)` of
/// the sorted list.
pub fn percentile(values: &[u64], q: f64) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    Some(sorted[nearest_rank_index(sorted.len(), q)])
}

/// Zero-based index for the nearest-rank percentile over `n` sorted values.
pub fn nearest_rank_index(n: usize, q: f64) -> usize {
    let rank = (q / 100.0 * n as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, n) - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub stage: Stage,
    pub p50_ms: u64,
    pub p95_ms: u64,
    /// Share of the summed stage P50s, in percent.
    pub percent_of_total: f64,
    pub calls: usize,
}

/// Per-stage latency percentiles. A stage's latency for one query is the
/// slowest call in that stage, since calls within a stage run concurrently.
pub fn stage_breakdown(traces: &[CallTrace]) -> Vec<StageLatency> {
    let mut per_stage: BTreeMap<Stage, BTreeMap<(&str, &str), u64>> = BTreeMap::new();
    let mut calls: BTreeMap<Stage, usize> = BTreeMap::new();
    for t in traces {
        let slot = per_stage
            .entry(t.stage)
            .or_default()
            .entry((t.method.as_str(), t.query_id.as_str()))
            .or_insert(0);
        *slot = (*slot).max(t.latency_ms);
        *calls.entry(t.stage).or_insert(0) += 1;
    }
    let mut rows: Vec<StageLatency> = per_stage
        .into_iter()
        .map(|(stage, by_query)| {
            let latencies: Vec<u64> = by_query.into_values().collect();
            StageLatency {
                stage,
                p50_ms: percentile(&latencies, 50.0).unwrap_or(0),
                p95_ms: percentile(&latencies, 95.0).unwrap_or(0),
                percent_of_total: 0.0,
                calls: calls[&stage],
            }
        })
        .collect();
    let total: u64 = rows.iter().map(|r| r.p50_ms).sum();
    for row in &mut rows {
        row.percent_of_total = if total == 0 {
            0.0
        } else {
            row.p50_ms as f64 / total as f64 * 100.0
        };
    }
    rows
}

/// Median time to first token of the earliest Stage-1 response, over the
/// (method, query) pairs where the provider reported one. Returns the median
/// and the number of pairs it covers.
pub fn median_ttft(traces: &[CallTrace]) -> Option<(f64, usize)> {
    let mut first: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for t in traces.iter().filter(|t| t.stage == Stage::Stage1) {
        if let Some(ttft) = t.ttft_ms {
            let e = first.entry((t.method.as_str(), t.query_id.as_str())).or_insert(ttft);
            *e = (*e).min(ttft);
        }
    }
    let values: Vec<f64> = first.values().map(|&v| v as f64).collect();
    median(&values).map(|m| (m, values.len()))
}
