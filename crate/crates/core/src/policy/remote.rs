//! Line-delimited JSON protocol for policies served by an external process.
//!
//! Each request is one JSON object on one line, tagged with `"system"`
//! (`"s1"` or `"s2"`); each response is one JSON object on one line.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{DeliberativePolicy, FastPolicy, LearnOutcome, PolicyAction, ReasoningPath};
use crate::cognitive::CognitiveState;
use crate::controller::TriggerReason;
use crate::dialog::{BeliefState, DialogAct};
use crate::distill::{DistillBuffer, DistillRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S1Request {
    pub belief_state: BeliefState,
    pub available_actions: Vec<DialogAct>,
}

impl S1Request {
    pub fn new(belief: &BeliefState, available: &[DialogAct]) -> Self {
        S1Request {
            belief_state: belief.clone(),
            available_actions: available.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S1Response {
    pub action: Vec<DialogAct>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S2Request {
    pub belief_state: BeliefState,
    pub available_actions: Vec<DialogAct>,
    pub d_t: f64,
    pub u_t: f64,
    pub p_t: f64,
    pub trigger_reason: String,
}

impl S2Request {
    pub fn new(
        belief: &BeliefState,
        available: &[DialogAct],
        c: &CognitiveState,
        reason: TriggerReason,
    ) -> Self {
        S2Request {
            belief_state: belief.clone(),
            available_actions: available.to_vec(),
            d_t: c.d,
            u_t: c.u,
            p_t: c.rho,
            trigger_reason: reason.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S2Response {
    pub reasoning_paths: Vec<ReasoningPath>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system")]
pub enum WireRequest {
    #[serde(rename = "s1")]
    S1(S1Request),
    #[serde(rename = "s2")]
    S2(S2Request),
}

impl S1Response {
    /// Parses and checks a response line; any problem is a schema error
    /// carrying the raw payload.
    pub fn parse(raw: &str) -> Result<Self> {
        let r: S1Response = serde_json::from_str(raw).map_err(|e| schema(e.to_string(), raw))?;
        if r.action.is_empty() {
            return Err(schema("\"action\" is empty".into(), raw));
        }
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(schema(format!("confidence {} outside [0, 1]", r.confidence), raw));
        }
        Ok(r)
    }
}

impl S2Response {
    pub fn parse(raw: &str) -> Result<Self> {
        let r: S2Response = serde_json::from_str(raw).map_err(|e| schema(e.to_string(), raw))?;
        for p in &r.reasoning_paths {
            if p.action_sequence.is_empty() {
                return Err(schema(format!("path {} has no actions", p.sequence_id), raw));
            }
            if !(0.0..=1.0).contains(&p.estimated_success_probability) {
                return Err(schema(
                    format!(
                        "path {} probability {} outside [0, 1]",
                        p.sequence_id, p.estimated_success_probability
                    ),
                    raw,
                ));
            }
        }
        Ok(r)
    }
}

fn schema(message: String, raw: &str) -> Error {
    Error::Schema {
        message,
        raw: raw.to_string(),
    }
}

/// Sends one request line and returns one response line.
pub trait Transport: Send {
    fn round_trip(&mut self, line: &str) -> std::io::Result<String>;
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> std::io::Result<Self> {
        let writer = TcpStream::connect(addr)?;
        let reader = BufReader::new(writer.try_clone()?);
        Ok(TcpTransport { reader, writer })
    }
}

impl Transport for TcpTransport {
    fn round_trip(&mut self, line: &str) -> std::io::Result<String> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut response = String::new();
        if self.reader.read_line(&mut response)? == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "connection closed before a response",
            ));
        }
        Ok(response.trim_end().to_string())
    }
}

/// In-process transport, handy for tests and embedding.
pub struct FnTransport<F>(pub F);

impl<F: FnMut(&str) -> String + Send> Transport for FnTransport<F> {
    fn round_trip(&mut self, line: &str) -> std::io::Result<String> {
        Ok((self.0)(line))
    }
}

/// A policy answered over a [`Transport`]. It can serve either system; a
/// distillation pass only exports demonstrations.
pub struct RemotePolicy {
    name: String,
    transport: Box<dyn Transport>,
    export_path: Option<PathBuf>,
}

impl RemotePolicy {
    pub fn new(name: impl Into<String>, transport: Box<dyn Transport>) -> Self {
        RemotePolicy {
            name: name.into(),
            transport,
            export_path: None,
        }
    }

    pub fn with_export_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.export_path = Some(path.into());
        self
    }

    fn call(&mut self, request: &WireRequest) -> Result<String> {
        let line = serde_json::to_string(request).expect("request serializes");
        self.transport.round_trip(&line).map_err(|e| Error::Backend {
            message: format!("{}: {e}", self.name),
            raw: line,
        })
    }
}

impl FastPolicy for RemotePolicy {
    fn identity(&self) -> String {
        format!("remote:{}", self.name)
    }

    fn infer(&mut self, request: &S1Request) -> Result<PolicyAction> {
        let raw = self.call(&WireRequest::S1(request.clone()))?;
        let r = S1Response::parse(&raw)?;
        Ok(PolicyAction {
            acts: r.action,
            confidence: r.confidence,
        })
    }

    fn learn(&mut self, records: &[DistillRecord], _step: f64) -> Result<LearnOutcome> {
        let Some(path) = self.export_path.clone() else {
            return Ok(LearnOutcome::Unsupported);
        };
        let mut buffer = DistillBuffer::new(records.len().max(1));
        for r in records {
            buffer.maybe_store(r.clone());
        }
        buffer.export(&path)?;
        Ok(LearnOutcome::Exported(path))
    }
}

impl DeliberativePolicy for RemotePolicy {
    fn identity(&self) -> String {
        format!("remote:{}", self.name)
    }

    fn propose(&mut self, request: &S2Request) -> Result<Vec<ReasoningPath>> {
        let raw = self.call(&WireRequest::S2(request.clone()))?;
        Ok(S2Response::parse(&raw)?.reasoning_paths)
    }
}
