use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::episode::EpisodeConfig;
use super::state::{ActionFailure, Event, FailCause, Phase};
use crate::agents::{
    ActRequest, Decision, EnvDescription, ObserveRequest, PlanRequest, SubTaskPlan, Verification,
    VerifyRequest,
};
use crate::llm::LlmAudit;
use crate::memory::{HistoryRecord, ReflectStage};
use crate::reflection::SegmentLabel;
use crate::simworld::Scenario;
use crate::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Master,
    Planner,
    Observer,
    Controller,
    Memory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectNotice {
    pub reason: ActionFailure,
    pub t: u32,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum Payload {
    PlanRequest(PlanRequest),
    PlanReply(SubTaskPlan),
    ObserveRequest(ObserveRequest),
    ObserveReply(EnvDescription),
    ActRequest(Box<ActRequest>),
    ActReply(Decision),
    VerifyRequest(Box<VerifyRequest>),
    VerifyReply(Verification),
    ReflectNotice(ReflectNotice),
}

/// A routed message between the master and one sub-agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub from: Role,
    pub to: Role,
    pub phase: Phase,
    /// Logical step: world steps executed so far.
    pub t: u32,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub scenario_hash: String,
    pub scenario: Scenario,
    pub config: EpisodeConfig,
    pub backends: BTreeMap<String, String>,
    pub code_version: String,
    pub seed: u64,
}

/// Episode-level reflection over one history segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalReflectRecord {
    pub stage: ReflectStage,
    pub flag: SegmentLabel,
    pub reason: String,
    pub matched_id: Option<String>,
    pub similarity: Option<f64>,
    pub start_t: u32,
    pub end_t: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndRecord {
    pub phase: Phase,
    pub cause: Option<FailCause>,
    pub steps: u32,
    pub completed_subtasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(Box<TraceHeader>),
    Envelope(Envelope),
    Transition {
        from: Phase,
        event: Event,
        to: Phase,
    },
    History(Box<HistoryRecord>),
    Reflect(GlobalReflectRecord),
    Llm(LlmAudit),
    End(EndRecord),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace corrupt: {0}")]
    Corrupt(String),
}

/// One JSON document per line, in record order.
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<(), TraceError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(to_jsonl(records).as_bytes())?;
    Ok(())
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records = vec![];
    for (i, line) in BufReader::new(std::fs::File::open(path)?)
        .lines()
        .enumerate()
    {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

/// Typed access to the parts of a parsed trace.
pub struct TraceView<'a> {
    pub header: &'a TraceHeader,
    pub end: &'a EndRecord,
    records: &'a [TraceRecord],
}

impl<'a> TraceView<'a> {
    pub fn new(records: &'a [TraceRecord]) -> Result<Self, TraceError> {
        let header = match records.first() {
            Some(TraceRecord::Header(h)) => h.as_ref(),
            _ => return Err(TraceError::Corrupt("first record is not a header".into())),
        };
        let end = match records.last() {
            Some(TraceRecord::End(e)) => e,
            _ => {
                return Err(TraceError::Corrupt(
                    "last record is not an end record".into(),
                ))
            }
        };
        Ok(TraceView {
            header,
            end,
            records,
        })
    }

    pub fn history(&self) -> impl Iterator<Item = &'a HistoryRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::History(h) => Some(h.as_ref()),
            _ => None,
        })
    }

    pub fn envelopes(&self) -> impl Iterator<Item = &'a Envelope> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Envelope(e) => Some(e),
            _ => None,
        })
    }

    pub fn transitions(&self) -> impl Iterator<Item = (Phase, &'a Event, Phase)> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Transition { from, event, to } => Some((*from, event, *to)),
            _ => None,
        })
    }

    pub fn global_reflections(&self) -> impl Iterator<Item = &'a GlobalReflectRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Reflect(g) => Some(g),
            _ => None,
        })
    }
}
