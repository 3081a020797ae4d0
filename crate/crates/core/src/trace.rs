//! Event log of a run: one record per send, ingest, aggregation, broadcast
//! or barrier, with logical time. Serializes to line-delimited JSON.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// A machine deposited its updated payload (the master's own deposit
    /// is counted like any other).
    Send { tick: u64, machine: usize, epoch: u64 },
    /// The master ingested a message; stale ones are kept in the log.
    Ingest { tick: u64, machine: usize, epoch: u64, stale: bool },
    /// The master averaged its slot table. Carries the sampled objective
    /// when the run evaluates one at this round.
    Aggregate {
        tick: u64,
        round: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        objective: Option<f64>,
    },
    /// The averaged payload was broadcast to all machines.
    Broadcast { tick: u64, round: u64 },
    /// A synchronization barrier of the synchronous baselines.
    Barrier { tick: u64, index: u64 },
}

impl TraceEvent {
    pub fn tick(&self) -> u64 {
        match *self {
            TraceEvent::Send { tick, .. }
            | TraceEvent::Ingest { tick, .. }
            | TraceEvent::Aggregate { tick, .. }
            | TraceEvent::Broadcast { tick, .. }
            | TraceEvent::Barrier { tick, .. } => tick,
        }
    }
}

/// The full event log of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub events: Vec<TraceEvent>,
}

impl RunTrace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: TraceEvent = serde_json::from_str(line).map_err(|err| {
                crate::error::Error::Parse { line: i + 1, message: err.to_string() }
            })?;
            events.push(e);
        }
        Ok(RunTrace { events })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut trace = RunTrace::default();
        trace.push(TraceEvent::Send { tick: 0, machine: 1, epoch: 0 });
        trace.push(TraceEvent::Ingest { tick: 0, machine: 1, epoch: 0, stale: false });
        trace.push(TraceEvent::Aggregate { tick: 0, round: 1, objective: Some(0.75) });
        trace.push(TraceEvent::Aggregate { tick: 1, round: 2, objective: None });
        trace.push(TraceEvent::Broadcast { tick: 1, round: 2 });
        trace.push(TraceEvent::Barrier { tick: 2, index: 0 });
        let text = trace.to_jsonl();
        assert_eq!(text.lines().count(), 6);
        let back = RunTrace::from_jsonl(&text).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = RunTrace::from_jsonl("{\"event\":\"send\",\"tick\":0,\"machine\":0,\"epoch\":0}\nnot json\n");
        match err {
            Err(crate::error::Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
