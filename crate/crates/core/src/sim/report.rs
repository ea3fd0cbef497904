use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use super::engine::TraceRow;
use crate::ir::{MemoryImage, Value};
use crate::memory::MemStats;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StageStats {
    pub index: usize,
    pub ii: u32,
    pub busy: u64,
    pub stall_mem: u64,
    pub stall_fifo_full: u64,
    pub stall_fifo_empty: u64,
    /// Cycles after the stage returned.
    pub idle: u64,
    pub instructions: u64,
    /// Loop-header entries.
    pub iterations: u64,
    pub finished_at: u64,
}

impl StageStats {
    pub fn total(&self) -> u64 {
        self.busy + self.stall_mem + self.stall_fifo_full + self.stall_fifo_empty + self.idle
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FifoStats {
    pub name: String,
    pub depth: usize,
    pub pushes: u64,
    pub pops: u64,
    pub max_occupancy: usize,
    /// Cycles observed at each occupancy, index = entries held.
    pub occupancy: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub engine: String,
    pub kernel: String,
    pub total_cycles: u64,
    pub stages: Vec<StageStats>,
    pub fifos: Vec<FifoStats>,
    pub memory: MemStats,
    pub hit_ratio: f64,
    pub digest: String,
    pub return_value: Option<String>,
    #[serde(skip)]
    pub ret: Option<Value>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    #[serde(skip)]
    pub image: MemoryImage,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedupSummary {
    pub kernel: String,
    pub baseline: String,
    pub candidate: String,
    pub baseline_cycles: u64,
    pub candidate_cycles: u64,
    /// baseline cycles / candidate cycles.
    pub speedup: f64,
    pub stall_mem_delta: i64,
    pub stall_fifo_delta: i64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("functional mismatch: {a} digest {da} vs {b} digest {db}")]
    Digest {
        a: String,
        b: String,
        da: String,
        db: String,
    },
    #[error("functional mismatch: return value {0:?} vs {1:?}")]
    Return(Option<String>, Option<String>),
}

fn stalls(r: &SimReport) -> (i64, i64) {
    let mem: u64 = r.stages.iter().map(|s| s.stall_mem).sum();
    let fifo: u64 = r
        .stages
        .iter()
        .map(|s| s.stall_fifo_full + s.stall_fifo_empty)
        .sum();
    (mem as i64, fifo as i64)
}

/// Speedup of `b` over `a`; the two runs must agree functionally.
pub fn compare(a: &SimReport, b: &SimReport) -> Result<SpeedupSummary, CompareError> {
    if a.digest != b.digest {
        return Err(CompareError::Digest {
            a: a.engine.clone(),
            b: b.engine.clone(),
            da: a.digest.clone(),
            db: b.digest.clone(),
        });
    }
    if a.return_value != b.return_value {
        return Err(CompareError::Return(a.return_value.clone(), b.return_value.clone()));
    }
    let (am, af) = stalls(a);
    let (bm, bf) = stalls(b);
    Ok(SpeedupSummary {
        kernel: a.kernel.clone(),
        baseline: a.engine.clone(),
        candidate: b.engine.clone(),
        baseline_cycles: a.total_cycles,
        candidate_cycles: b.total_cycles,
        speedup: a.total_cycles as f64 / b.total_cycles.max(1) as f64,
        stall_mem_delta: bm - am,
        stall_fifo_delta: bf - af,
    })
}

/// `cycle,stage,state` rows.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("cycle,stage,state\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.cycle, r.stage, r.state);
    }
    out
}
