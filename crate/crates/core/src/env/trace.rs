//! JSON-lines episode traces.

use super::ActionDecision;
use crate::chart::DashboardState;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// One transition: the state the decision was taken in, the decision, and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub state: DashboardState,
    pub decision: ActionDecision,
    pub reward: f64,
    pub done: bool,
}

pub fn write_trace(mut out: impl Write, records: &[TraceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(input: impl BufRead) -> std::io::Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
