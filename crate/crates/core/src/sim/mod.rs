//! Cycle-approximate simulation of a monolithic accelerator and of the
//! decoupled stage pipeline, both over the shared memory model.

mod engine;
mod report;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::cdfg::{build_cdfg, find_sccs, Cdfg, SccSet};
use crate::ir::{LatencyTable, MemoryImage, Program, Trap, Value};
use crate::memory::MemConfig;
use crate::partition::{Channel, StageProgram};

pub use engine::{StallReason, TraceRow};
pub use report::{compare, trace_csv, CompareError, FifoStats, SimReport, SpeedupSummary, StageStats};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub mem: MemConfig,
    pub latency: LatencyTable,
    pub trace: bool,
    /// Trace rows kept (stage-cycles), when tracing.
    pub trace_rows: usize,
    /// Instruction budget across all stages.
    pub fuel: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mem: MemConfig::default(),
            latency: LatencyTable::default(),
            trace: false,
            trace_rows: 100_000,
            fuel: 2_000_000_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("stage {stage}: {trap}")]
    Trap { stage: usize, trap: Trap },
    #[error("deadlock at cycle {cycle}: {}", describe(.blocked))]
    Deadlock {
        cycle: u64,
        blocked: Vec<(usize, StallReason)>,
    },
    #[error("invalid memory configuration: {0}")]
    Config(String),
    #[error("stage program uses undeclared channel {0}")]
    UnknownChannel(String),
}

fn describe(blocked: &[(usize, StallReason)]) -> String {
    blocked
        .iter()
        .map(|(s, r)| format!("stage {s} {}", r.name()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// II of a stage: the slowest resident recurrence, and at least the
/// latency of any non-pipelined operation it holds.
pub fn compute_ii(resident: &[usize], g: &Cdfg, s: &SccSet, table: &LatencyTable) -> u32 {
    let mut ii = 1;
    for &c in resident {
        ii = ii.max(s.cycle_latency[c]);
        for &n in &s.members[c] {
            if let Some(e) = table.get(g.nodes[n].opcode) {
                if !e.pipelined {
                    ii = ii.max(e.cycles);
                }
            }
        }
    }
    ii
}

/// Pipeline drain after the last return: the longest operation latency used.
fn drain(programs: &[&Program], table: &LatencyTable) -> u64 {
    let ops: BTreeSet<_> = programs
        .iter()
        .flat_map(|p| p.blocks.iter().flat_map(|b| b.insts.iter().map(|i| i.opcode())))
        .collect();
    ops.into_iter()
        .map(|op| table.cycles_or_zero(op) as u64)
        .max()
        .unwrap_or(0)
}

/// One engine running the whole program: every memory access goes through
/// a single port and the whole datapath waits for any late operand.
pub fn simulate_monolithic(
    p: &Program,
    cfg: &SimConfig,
    mem: &MemoryImage,
    args: &[Value],
) -> Result<SimReport, SimError> {
    cfg.mem.validate().map_err(SimError::Config)?;
    let g = build_cdfg(p);
    let s = find_sccs(&g, &cfg.latency);
    let all: Vec<usize> = (0..s.len()).collect();
    let ii = compute_ii(&all, &g, &s, &cfg.latency);
    let unit = engine::Unit {
        program: p.clone(),
        ii,
        returns_value: true,
    };
    engine::run(
        "monolithic",
        &p.name,
        &[unit],
        &[],
        cfg,
        mem,
        args,
        false,
        drain(&[p], &cfg.latency),
    )
}

/// Stages advance independently, connected by bounded FIFOs.
pub fn simulate_pipeline(
    stages: &[StageProgram],
    channels: &[Channel],
    g: &Cdfg,
    s: &SccSet,
    cfg: &SimConfig,
    mem: &MemoryImage,
    args: &[Value],
) -> Result<SimReport, SimError> {
    cfg.mem.validate().map_err(SimError::Config)?;
    let units: Vec<engine::Unit> = stages
        .iter()
        .map(|st| engine::Unit {
            program: st.program.clone(),
            ii: compute_ii(&st.resident, g, s, &cfg.latency),
            returns_value: st.returns_value,
        })
        .collect();
    let programs: Vec<&Program> = stages.iter().map(|s| &s.program).collect();
    engine::run(
        "pipeline",
        &g.program.name,
        &units,
        channels,
        cfg,
        mem,
        args,
        true,
        drain(&programs, &cfg.latency),
    )
}

#[cfg(test)]
mod tests;
