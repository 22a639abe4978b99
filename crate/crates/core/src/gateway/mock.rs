use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{estimate_tokens, ChatBackend, ChatRequest, ChatResponse, EndpointConfig, GatewayError};
use crate::accounting::Stage;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FixtureKey {
    pub query_id: String,
    pub stage: Stage,
    pub slot: String,
}

/// One scripted response. Missing token counts are estimated and flagged,
/// exactly as for a live provider that omits usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub query_id: String,
    pub stage: Stage,
    pub slot: String,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neurons: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttft_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fail: bool,
}

impl FixtureRecord {
    pub fn new(query_id: impl Into<String>, stage: Stage, slot: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            stage,
            slot: slot.into(),
            text: text.into(),
            input_tokens: None,
            output_tokens: None,
            latency_ms: 0,
            neurons: None,
            ttft_ms: None,
            fail: false,
        }
    }

    pub fn with_tokens(mut self, input: u64, output: u64) -> Self {
        self.input_tokens = Some(input);
        self.output_tokens = Some(output);
        self
    }

    pub fn with_latency(mut self, latency_ms: u64) -> Self {
        self.latency_ms = latency_ms;
        self
    }

    pub fn with_neurons(mut self, neurons: u64) -> Self {
        self.neurons = Some(neurons);
        self
    }

    pub fn with_ttft(mut self, ttft_ms: u64) -> Self {
        self.ttft_ms = Some(ttft_ms);
        self
    }

    pub fn failing(mut self) -> Self {
        self.fail = true;
        self
    }

    pub fn key(&self) -> FixtureKey {
        FixtureKey {
            query_id: self.query_id.clone(),
            stage: self.stage,
            slot: self.slot.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("reading fixture: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("fixture line {line}: duplicate key ({}, {}, {})", .key.query_id, .key.stage, .key.slot)]
    Duplicate { line: usize, key: FixtureKey },
}

/// Scripted backend keyed by `(query_id, stage, slot)`. The table is read-only
/// after load; a request with no entry is an explicit error.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    table: HashMap<FixtureKey, FixtureRecord>,
}

impl MockBackend {
    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Result<Self, FixtureError> {
        let mut table = HashMap::new();
        for (i, record) in records.into_iter().enumerate() {
            let key = record.key();
            if table.insert(key.clone(), record).is_some() {
                return Err(FixtureError::Duplicate { line: i + 1, key });
            }
        }
        Ok(Self { table })
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, FixtureError> {
        let mut records = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord = serde_json::from_str(&line).map_err(|e| FixtureError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(record);
        }
        Self::from_records(records)
    }

    /// Loads a newline-delimited fixture file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FixtureError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, key: &FixtureKey) -> Option<&FixtureRecord> {
        self.table.get(key)
    }
}

/// Writes records as newline-delimited JSON.
pub fn write_fixture(mut writer: impl Write, records: &[FixtureRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

impl MockBackend {
    pub fn write(records: &[FixtureRecord], path: impl AsRef<Path>) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        write_fixture(&mut w, records)?;
        w.flush()
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    async fn send(&self, _endpoint: &EndpointConfig, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = FixtureKey {
            query_id: request.tag.query_id.clone(),
            stage: request.tag.stage,
            slot: request.tag.slot.clone(),
        };
        let record = self.table.get(&key).ok_or_else(|| GatewayError::FixtureMiss(key.clone()))?;
        if record.fail {
            return Err(GatewayError::ScriptedFailure(key));
        }
        let estimated = record.input_tokens.is_none() || record.output_tokens.is_none();
        Ok(ChatResponse {
            text: record.text.clone(),
            input_tokens: record
                .input_tokens
                .unwrap_or_else(|| estimate_tokens(request.prompt_chars())),
            output_tokens: record
                .output_tokens
                .unwrap_or_else(|| estimate_tokens(record.text.chars().count())),
            latency_ms: record.latency_ms,
            neurons: record.neurons,
            ttft_ms: record.ttft_ms,
            token_counts_estimated: estimated,
        })
    }

    /// Mock runs use a fixed clock so traces are reproducible.
    fn now_ms(&self) -> u64 {
        0
    }
}
