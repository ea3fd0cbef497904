use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use super::Opcode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LatencyEntry {
    pub cycles: u32,
    pub pipelined: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatencyError {
    #[error("no latency entry for opcode `{0}`")]
    Missing(&'static str),
    #[error("`{0}` is a control opcode and has no latency")]
    Control(&'static str),
    #[error("latency of `{0}` must be at least 1 cycle")]
    Zero(&'static str),
}

/// Operation latencies in cycles. Every non-control opcode has an entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LatencyTable {
    entries: BTreeMap<Opcode, LatencyEntry>,
}

impl Serialize for Opcode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl Default for LatencyTable {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        for op in Opcode::ALL {
            if op.is_control() {
                continue;
            }
            let entry = match op {
                Opcode::Fadd | Opcode::Fmul => LatencyEntry {
                    cycles: 4,
                    pipelined: true,
                },
                Opcode::Fdiv => LatencyEntry {
                    cycles: 16,
                    pipelined: false,
                },
                _ => LatencyEntry {
                    cycles: 1,
                    pipelined: true,
                },
            };
            entries.insert(op, entry);
        }
        Self { entries }
    }
}

impl LatencyTable {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, op: Opcode, cycles: u32, pipelined: bool) -> Result<(), LatencyError> {
        if op.is_control() {
            return Err(LatencyError::Control(op.name()));
        }
        if cycles == 0 {
            return Err(LatencyError::Zero(op.name()));
        }
        self.entries.insert(op, LatencyEntry { cycles, pipelined });
        Ok(())
    }

    pub fn get(&self, op: Opcode) -> Option<LatencyEntry> {
        self.entries.get(&op).copied()
    }

    /// Latency used when summing dependence cycles. Control opcodes take no
    /// datapath time.
    pub fn cycles_or_zero(&self, op: Opcode) -> u32 {
        if op.is_control() {
            0
        } else {
            self.get(op).map_or(1, |e| e.cycles)
        }
    }

    /// An operation is long-latency when it cannot complete within one cycle.
    pub fn is_long(&self, op: Opcode) -> bool {
        !op.is_control() && self.cycles_or_zero(op) > 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (Opcode, LatencyEntry)> + '_ {
        self.entries.iter().map(|(op, e)| (*op, *e))
    }
}

pub fn opcode_latency(op: Opcode, table: &LatencyTable) -> Result<(u32, bool), LatencyError> {
    if op.is_control() {
        return Err(LatencyError::Control(op.name()));
    }
    table
        .get(op)
        .map(|e| (e.cycles, e.pipelined))
        .ok_or(LatencyError::Missing(op.name()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchored_latencies() {
        let t = LatencyTable::default();
        assert_eq!(opcode_latency(Opcode::Fmul, &t), Ok((4, true)));
        assert_eq!(opcode_latency(Opcode::Iadd, &t), Ok((1, true)));
        assert_eq!(opcode_latency(Opcode::Fadd, &t), Ok((4, true)));
        assert_eq!(opcode_latency(Opcode::Fdiv, &t), Ok((16, false)));
    }

    #[test]
    fn every_non_control_opcode_has_an_entry() {
        let t = LatencyTable::default();
        for op in Opcode::ALL {
            if op.is_control() {
                assert!(opcode_latency(op, &t).is_err());
            } else {
                let (cycles, _) = opcode_latency(op, &t).unwrap();
                assert!(cycles >= 1);
            }
        }
    }

    #[test]
    fn long_predicate_follows_table() {
        let mut t = LatencyTable::default();
        assert!(t.is_long(Opcode::Fmul));
        assert!(!t.is_long(Opcode::Iadd));
        assert!(!t.is_long(Opcode::Load));
        t.set(Opcode::Imul, 3, true).unwrap();
        assert!(t.is_long(Opcode::Imul));
    }

    #[test]
    fn missing_entry_is_an_error() {
        let t = LatencyTable::empty();
        assert_eq!(
            opcode_latency(Opcode::Fmul, &t),
            Err(LatencyError::Missing("fmul"))
        );
        let mut t = LatencyTable::default();
        assert_eq!(t.set(Opcode::Iadd, 0, true), Err(LatencyError::Zero("iadd")));
    }
}
