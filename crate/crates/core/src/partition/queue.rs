use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use super::{Channel, StageProgram};
use crate::ir::{ChannelIo, Lowered, Machine, MemoryImage, Outcome, Trap, Value};

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("stage {stage}: {trap}")]
    Trap { stage: usize, trap: Trap },
    #[error("deadlock: every unfinished stage is blocked on a channel")]
    Deadlock,
    #[error("channel {0} still holds tokens after all stages returned")]
    Leftover(String),
    #[error("stage program uses undeclared channel {0}")]
    UnknownChannel(String),
}

struct Fifos<'a> {
    queues: &'a mut [VecDeque<Value>],
    capacity: &'a [usize],
    local: &'a [usize],
}

impl ChannelIo for Fifos<'_> {
    fn pop(&mut self, chan: usize) -> Option<Value> {
        self.queues[self.local[chan]].pop_front()
    }

    fn push(&mut self, chan: usize, value: Value) -> bool {
        let q = self.local[chan];
        if self.queues[q].len() >= self.capacity[q] {
            return false;
        }
        self.queues[q].push_back(value);
        true
    }
}

/// Runs stage programs round-robin over bounded FIFOs sharing one memory
/// image. Returns the final memory and the returning stage's value.
pub fn run_queued(
    stages: &[StageProgram],
    channels: &[Channel],
    mem: &MemoryImage,
    args: &[Value],
    fuel: u64,
) -> Result<(MemoryImage, Option<Value>), QueueError> {
    let by_name: HashMap<&str, usize> = channels
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.as_str(), i))
        .collect();
    let lowered: Vec<Lowered> = stages.iter().map(|s| Lowered::new(&s.program)).collect();
    let mut locals = Vec::new();
    for l in &lowered {
        let mut map = Vec::new();
        for name in &l.chan_names {
            map.push(
                *by_name
                    .get(name.as_str())
                    .ok_or_else(|| QueueError::UnknownChannel(name.clone()))?,
            );
        }
        locals.push(map);
    }
    let mut machines = Vec::new();
    for (i, l) in lowered.iter().enumerate() {
        machines.push(
            Machine::new(l, args, mem).map_err(|trap| QueueError::Trap { stage: i, trap })?,
        );
    }
    let capacity: Vec<usize> = channels.iter().map(|c| c.depth.max(1)).collect();
    let mut queues = vec![VecDeque::new(); channels.len()];
    let mut mem = mem.clone();
    let mut spent = 0u64;
    const QUANTUM: usize = 256;
    loop {
        let mut progress = false;
        let mut all_done = true;
        for (i, m) in machines.iter_mut().enumerate() {
            if m.finished().is_some() {
                continue;
            }
            let mut io = Fifos {
                queues: &mut queues,
                capacity: &capacity,
                local: &locals[i],
            };
            for _ in 0..QUANTUM {
                let out = m
                    .step(&mut mem, &mut io)
                    .map_err(|trap| QueueError::Trap { stage: i, trap })?;
                match out {
                    Outcome::Blocked => break,
                    Outcome::Returned(_) => {
                        progress = true;
                        break;
                    }
                    _ => progress = true,
                }
                spent += 1;
                if spent > fuel {
                    return Err(QueueError::Trap {
                        stage: i,
                        trap: Trap::FuelExhausted(fuel),
                    });
                }
            }
            all_done &= m.finished().is_some();
        }
        if all_done {
            break;
        }
        if !progress {
            return Err(QueueError::Deadlock);
        }
    }
    if let Some(i) = queues.iter().position(|q| !q.is_empty()) {
        return Err(QueueError::Leftover(channels[i].name.clone()));
    }
    let ret = stages
        .iter()
        .zip(&machines)
        .find(|(s, _)| s.returns_value)
        .and_then(|(_, m)| m.finished().flatten());
    Ok((mem, ret))
}
