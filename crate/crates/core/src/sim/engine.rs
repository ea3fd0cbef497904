use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::Serialize;

use super::report::{FifoStats, SimReport, StageStats};
use super::{SimConfig, SimError};
use crate::cfg::Cfg;
use crate::ir::{
    AccessKind, ChannelIo, LKind, LOp, Lowered, Machine, MemoryImage, Outcome, Program, Value,
};
use crate::memory::{MemoryModel, SpacePolicy};
use crate::partition::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StallReason {
    Mem,
    FifoFull,
    FifoEmpty,
}

impl StallReason {
    pub fn name(self) -> &'static str {
        match self {
            StallReason::Mem => "mem",
            StallReason::FifoFull => "fifo_full",
            StallReason::FifoEmpty => "fifo_empty",
        }
    }
}

/// What a stage did in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CycleState {
    Busy,
    Stall(StallReason),
    Idle,
}

impl CycleState {
    pub fn name(self) -> &'static str {
        match self {
            CycleState::Busy => "busy",
            CycleState::Stall(r) => r.name(),
            CycleState::Idle => "idle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub cycle: u64,
    pub stage: usize,
    pub state: &'static str,
}

pub(crate) struct Unit {
    pub program: Program,
    pub ii: u32,
    pub returns_value: bool,
}

/// When a value becomes usable: not before `at`, and not before memory
/// request `req` (if any) has been delivered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Ready {
    at: u64,
    req: Option<u64>,
}


struct Fifo {
    entries: VecDeque<(Value, Ready)>,
    capacity: usize,
    pushes: u64,
    pops: u64,
    max_occupancy: usize,
    histogram: Vec<u64>,
}

/// Streaming read port: bursts requested ahead of the reader.
#[derive(Default)]
struct StreamRead {
    /// (start, len, readiness), in address order.
    bursts: VecDeque<(u32, u32, Ready)>,
    next: u32,
}

/// Streaming write port: merges consecutive stores into one burst.
#[derive(Default, Clone, Copy)]
struct WriteBuf {
    start: u32,
    len: u32,
}

struct Stage<'a> {
    machine: Machine<'a>,
    ready: Vec<Ready>,
    busy_until: u64,
    done: bool,
    headers: Vec<bool>,
    in_loop: Vec<bool>,
    ii: u64,
    chans: Vec<usize>,
    streams: BTreeMap<usize, StreamRead>,
    writes: BTreeMap<usize, WriteBuf>,
    stats: StageStats,
}

enum Gate {
    Go,
    Stall(StallReason),
}

struct Shared<'c> {
    mem_model: MemoryModel,
    image: MemoryImage,
    fifos: Vec<Fifo>,
    policies: Vec<SpacePolicy>,
    extents: Vec<u32>,
    cfg: &'c SimConfig,
    bursts: bool,
    space_count: usize,
    delivered: HashMap<u64, u64>,
    last_delivery: u64,
}

impl Shared<'_> {
    fn deliver(&mut self, now: u64) {
        for r in self.mem_model.tick(now) {
            self.delivered.insert(r.id, now);
            self.last_delivery = now;
        }
    }

    fn delivered_by(&self, id: u64, now: u64) -> bool {
        self.delivered.get(&id).is_some_and(|&t| t <= now)
    }

    /// Whether a value is usable at `now`, polling memory once if it waits
    /// on a request.
    fn ready(&mut self, r: Ready, now: u64) -> bool {
        if r.at > now {
            return false;
        }
        match r.req {
            None => true,
            Some(id) => {
                if !self.delivered_by(id, now) {
                    self.deliver(now);
                }
                self.delivered_by(id, now)
            }
        }
    }
}

struct Io<'s> {
    fifos: &'s mut [Fifo],
    chans: &'s [usize],
}

impl ChannelIo for Io<'_> {
    fn pop(&mut self, chan: usize) -> Option<Value> {
        let f = &mut self.fifos[self.chans[chan]];
        f.pops += 1;
        f.entries.pop_front().map(|(v, _)| v)
    }

    fn push(&mut self, _chan: usize, _value: Value) -> bool {
        // Pushes are applied by the engine, which knows readiness.
        true
    }
}

fn op_ready(st: &Stage<'_>, op: &LOp) -> Ready {
    match op {
        LOp::Slot(s) => st.ready[*s],
        LOp::Imm(_) => Ready::default(),
    }
}

impl<'a> Stage<'a> {
    fn port(&self, index: usize, sh: &Shared<'_>, space: usize) -> usize {
        if sh.bursts {
            index * sh.space_count + space
        } else {
            0
        }
    }

    fn block_cost(&self, b: usize) -> u64 {
        if self.headers[b] {
            self.ii
        } else if self.in_loop[b] {
            0
        } else {
            1
        }
    }

    /// Issues any pending merged write; `false` if the memory refused.
    fn flush_writes(&mut self, index: usize, sh: &mut Shared<'_>, now: u64) -> bool {
        let spaces: Vec<usize> = self.writes.keys().copied().collect();
        for space in spaces {
            let w = self.writes[&space];
            let port = self.port(index, sh, space);
            if sh
                .mem_model
                .issue(port, space, w.start, w.len, AccessKind::Write, false, now)
                .is_none()
            {
                return false;
            }
            self.writes.remove(&space);
        }
        true
    }

    /// Runs the stage for one cycle.
    fn cycle(&mut self, index: usize, sh: &mut Shared<'_>, now: u64) -> Result<CycleState, SimError> {
        if self.done {
            return Ok(CycleState::Idle);
        }
        if now < self.busy_until {
            return Ok(CycleState::Busy);
        }
        let mut progressed = false;
        loop {
            let Some(inst) = self.machine.next_inst() else {
                self.done = true;
                return Ok(CycleState::Busy);
            };
            let gate = self.gate(index, inst, sh, now)?;
            if let Gate::Stall(r) = gate {
                return Ok(if progressed { CycleState::Busy } else { CycleState::Stall(r) });
            }
            if let LKind::Ret(_) = inst.kind {
                if !self.flush_writes(index, sh, now) {
                    return Ok(if progressed { CycleState::Busy } else { CycleState::Stall(StallReason::Mem) });
                }
            }
            // Readiness of a popped value is known before the pop.
            let popped = match inst.kind {
                LKind::Pop { chan } => sh.fifos[self.chans[chan]].entries.front().map(|e| e.1),
                _ => None,
            };
            let pushed = match &inst.kind {
                LKind::Push { value, .. } => {
                    let r = op_ready(self, value);
                    Some(Ready { at: r.at.max(now + 1), req: r.req })
                }
                _ => None,
            };
            let mut io = Io {
                fifos: &mut sh.fifos,
                chans: &self.chans,
            };
            let outcome = self
                .machine
                .step(&mut sh.image, &mut io)
                .map_err(|trap| SimError::Trap { stage: index, trap })?;
            self.stats.instructions += 1;
            progressed = true;
            match (&inst.kind, outcome) {
                (LKind::Push { chan, value }, _) => {
                    let v = match value {
                        LOp::Imm(v) => *v,
                        LOp::Slot(s) => self.machine.slot(*s).unwrap_or_default(),
                    };
                    let f = &mut sh.fifos[self.chans[*chan]];
                    f.entries.push_back((v, pushed.unwrap()));
                    f.pushes += 1;
                    f.max_occupancy = f.max_occupancy.max(f.entries.len());
                }
                (LKind::Pop { .. }, _) => {
                    self.ready[inst.dst.unwrap()] = popped.unwrap();
                }
                (LKind::Mov(src), _) => {
                    self.ready[inst.dst.unwrap()] = op_ready(self, src);
                }
                (LKind::Load { space, addr }, Outcome::Accessed(acc)) => {
                    let _ = addr;
                    let r = self.load_ready(index, *space, acc.addr, sh, now);
                    self.ready[inst.dst.unwrap()] = r;
                }
                (LKind::Store { space, .. }, Outcome::Accessed(acc)) => {
                    self.store(index, *space, acc.addr, sh, now);
                }
                (_, Outcome::Jumped { from, to }) => {
                    // Phi operands flow like wires.
                    let prog = self.machine.program();
                    let updates: Vec<(usize, Ready)> = prog.blocks[to]
                        .phis
                        .iter()
                        .filter_map(|phi| {
                            phi.incoming
                                .iter()
                                .find(|(p, _)| *p == from)
                                .map(|(_, op)| (phi.dst, op_ready(self, op)))
                        })
                        .collect();
                    for (d, r) in updates {
                        self.ready[d] = r;
                    }
                    if self.headers[to] {
                        self.stats.iterations += 1;
                    }
                    let cost = self.block_cost(to);
                    if cost > 0 {
                        self.busy_until = now + cost;
                        return Ok(CycleState::Busy);
                    }
                }
                (_, Outcome::Returned(_)) => {
                    self.done = true;
                    self.stats.finished_at = now;
                    return Ok(CycleState::Busy);
                }
                _ => {
                    if let Some(d) = inst.dst {
                        self.ready[d] = Ready { at: now, req: None };
                    }
                }
            }
            if self.stats.instructions > sh.cfg.fuel {
                return Err(SimError::Trap {
                    stage: index,
                    trap: crate::ir::Trap::FuelExhausted(sh.cfg.fuel),
                });
            }
        }
    }

    /// Whether the next instruction can run this cycle. Memory requests
    /// that must be issued before a load/store proceeds are issued here.
    fn gate(
        &mut self,
        index: usize,
        inst: &crate::ir::LInst,
        sh: &mut Shared<'_>,
        now: u64,
    ) -> Result<Gate, SimError> {
        let wait_on = |st: &Self, sh: &mut Shared<'_>, ops: &[&LOp]| -> Option<StallReason> {
            for op in ops {
                let r = op_ready(st, op);
                if !sh.ready(r, now) {
                    return Some(StallReason::Mem);
                }
            }
            None
        };
        let stall = match &inst.kind {
            LKind::Bin(_, a, b) | LKind::Cmp(_, a, b) => wait_on(self, sh, &[a, b]),
            LKind::Select(c, t, f) => wait_on(self, sh, &[c, t, f]),
            LKind::Br { cond, .. } => wait_on(self, sh, &[cond]),
            LKind::Ret(Some(v)) => wait_on(self, sh, &[v]),
            LKind::Mov(_) | LKind::Jmp(_) | LKind::Ret(None) => None,
            LKind::Push { chan, .. } => {
                let f = &sh.fifos[self.chans[*chan]];
                (f.entries.len() >= f.capacity).then_some(StallReason::FifoFull)
            }
            LKind::Pop { chan } => {
                match sh.fifos[self.chans[*chan]].entries.front().map(|e| e.1) {
                    Some(r) if sh.ready(r, now) => None,
                    _ => Some(StallReason::FifoEmpty),
                }
            }
            LKind::Load { space, addr } => match wait_on(self, sh, &[addr]) {
                Some(r) => Some(r),
                None => {
                    let a = self
                        .machine
                        .address(*space, *addr)
                        .map_err(|trap| SimError::Trap { stage: index, trap })?;
                    (!self.can_load(index, *space, a, sh, now)).then_some(StallReason::Mem)
                }
            },
            LKind::Store { space, addr, value } => match wait_on(self, sh, &[addr, value]) {
                Some(r) => Some(r),
                None => {
                    let a = self
                        .machine
                        .address(*space, *addr)
                        .map_err(|trap| SimError::Trap { stage: index, trap })?;
                    (!self.can_store(index, *space, a, sh, now)).then_some(StallReason::Mem)
                }
            },
        };
        Ok(match stall {
            Some(r) => Gate::Stall(r),
            None => Gate::Go,
        })
    }

    fn streaming(&self, sh: &Shared<'_>, space: usize) -> bool {
        sh.bursts && sh.policies[space] == SpacePolicy::UncachedBurst
    }

    /// Makes sure a load of `addr` has (or can get) a request; issues the
    /// covering burst for streaming ports.
    fn can_load(&mut self, index: usize, space: usize, addr: u32, sh: &mut Shared<'_>, now: u64) -> bool {
        if !self.streaming(sh, space) {
            return sh.mem_model.can_issue() || {
                sh.mem_model.stats.rejected += 1;
                false
            };
        }
        let port = self.port(index, sh, space);
        let burst_max = sh.cfg.mem.burst_max;
        let extent = sh.extents[space];
        let s = self.streams.entry(space).or_default();
        while s.bursts.front().is_some_and(|&(st, len, _)| st + len <= addr || st > addr) {
            // Out of order or consumed: drop. A backwards jump restarts.
            if s.bursts.front().unwrap().0 > addr {
                s.bursts.clear();
                break;
            }
            s.bursts.pop_front();
        }
        if s.bursts.is_empty() {
            let len = burst_max.min(extent - addr);
            match sh
                .mem_model
                .issue(port, space, addr, len, AccessKind::Read, false, now)
            {
                Some(r) => {
                    s.bursts.push_back((addr, len, Ready { at: 0, req: Some(r.id) }));
                    s.next = addr + len;
                }
                None => return false,
            }
        }
        // Read ahead.
        while (s.bursts.len() as u32) <= sh.cfg.mem.stream_prefetch
            && s.next < extent
            && sh.mem_model.can_issue()
        {
            let len = burst_max.min(extent - s.next);
            let r = sh
                .mem_model
                .issue(port, space, s.next, len, AccessKind::Read, false, now)
                .unwrap();
            s.bursts.push_back((s.next, len, Ready { at: 0, req: Some(r.id) }));
            s.next += len;
        }
        true
    }

    fn load_ready(&mut self, index: usize, space: usize, addr: u32, sh: &mut Shared<'_>, now: u64) -> Ready {
        if self.streaming(sh, space) {
            let s = &self.streams[&space];
            return s.bursts.front().map(|b| b.2).unwrap_or_default();
        }
        let port = self.port(index, sh, space);
        let cached = sh.policies[space] == SpacePolicy::Cached;
        let r = sh
            .mem_model
            .issue(port, space, addr, 1, AccessKind::Read, cached, now)
            .expect("gate checked capacity");
        Ready { at: 0, req: Some(r.id) }
    }

    fn can_store(&mut self, index: usize, space: usize, addr: u32, sh: &mut Shared<'_>, now: u64) -> bool {
        if !self.streaming(sh, space) {
            return sh.mem_model.can_issue() || {
                sh.mem_model.stats.rejected += 1;
                false
            };
        }
        let Some(w) = self.writes.get(&space).copied() else {
            return true;
        };
        if w.start + w.len == addr && w.len < sh.cfg.mem.burst_max {
            return true;
        }
        let port = self.port(index, sh, space);
        if sh
            .mem_model
            .issue(port, space, w.start, w.len, AccessKind::Write, false, now)
            .is_none()
        {
            return false;
        }
        self.writes.remove(&space);
        true
    }

    fn store(&mut self, index: usize, space: usize, addr: u32, sh: &mut Shared<'_>, now: u64) {
        if self.streaming(sh, space) {
            let w = self.writes.entry(space).or_insert(WriteBuf { start: addr, len: 0 });
            w.len += 1;
            return;
        }
        let port = self.port(index, sh, space);
        let cached = sh.policies[space] == SpacePolicy::Cached;
        sh.mem_model
            .issue(port, space, addr, 1, AccessKind::Write, cached, now)
            .expect("gate checked capacity");
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run(
    engine: &str,
    kernel: &str,
    units: &[Unit],
    channels: &[Channel],
    cfg: &SimConfig,
    mem: &MemoryImage,
    args: &[Value],
    bursts: bool,
    drain: u64,
) -> Result<SimReport, SimError> {
    let spaces = &units[0].program.spaces;
    let by_name: HashMap<&str, usize> = channels
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.as_str(), i))
        .collect();
    let lowered: Vec<Lowered> = units.iter().map(|u| Lowered::new(&u.program)).collect();
    let mut stages = Vec::new();
    for (i, (u, l)) in units.iter().zip(&lowered).enumerate() {
        let cfg_graph = Cfg::from_program(&u.program);
        let loops = cfg_graph.loops();
        let n = u.program.blocks.len();
        let chans = l
            .chan_names
            .iter()
            .map(|c| {
                by_name
                    .get(c.as_str())
                    .copied()
                    .ok_or_else(|| SimError::UnknownChannel(c.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        stages.push(Stage {
            machine: Machine::new(l, args, mem).map_err(|trap| SimError::Trap { stage: i, trap })?,
            ready: vec![Ready::default(); l.slot_names.len()],
            busy_until: 0,
            done: false,
            headers: (0..n).map(|b| loops.is_header(b)).collect(),
            in_loop: (0..n).map(|b| loops.in_any_loop(b)).collect(),
            ii: u.ii as u64,
            chans,
            streams: BTreeMap::new(),
            writes: BTreeMap::new(),
            stats: StageStats {
                index: i,
                ii: u.ii,
                ..StageStats::default()
            },
        });
    }
    let mut sh = Shared {
        mem_model: MemoryModel::new(&cfg.mem, spaces),
        image: mem.clone(),
        fifos: channels
            .iter()
            .map(|c| Fifo {
                entries: VecDeque::new(),
                capacity: c.depth.max(1),
                pushes: 0,
                pops: 0,
                max_occupancy: 0,
                histogram: vec![0; c.depth.max(1) + 1],
            })
            .collect(),
        policies: spaces.iter().map(|s| cfg.mem.policy_for(s)).collect(),
        extents: spaces.iter().map(|s| s.extent).collect(),
        cfg,
        bursts,
        space_count: spaces.len(),
        delivered: HashMap::new(),
        last_delivery: 0,
    };
    let max_depth = channels.iter().map(|c| c.depth).max().unwrap_or(0) as u64;
    let patience = channels.len() as u64 * max_depth + 64;
    let mut now = 0u64;
    let mut trace = Vec::new();
    let mut quiet = 0u64;
    loop {
        sh.deliver(now);
        sh.mem_model.sample_occupancy();
        let mut any_busy = false;
        let mut blocked = Vec::new();
        for (i, st) in stages.iter_mut().enumerate() {
            let state = st.cycle(i, &mut sh, now)?;
            match state {
                CycleState::Busy => {
                    st.stats.busy += 1;
                    any_busy = true;
                }
                CycleState::Stall(r) => {
                    blocked.push((i, r));
                    match r {
                        StallReason::Mem => st.stats.stall_mem += 1,
                        StallReason::FifoFull => st.stats.stall_fifo_full += 1,
                        StallReason::FifoEmpty => st.stats.stall_fifo_empty += 1,
                    }
                }
                CycleState::Idle => st.stats.idle += 1,
            }
            if cfg.trace && trace.len() < cfg.trace_rows {
                trace.push(TraceRow {
                    cycle: now,
                    stage: i,
                    state: state.name(),
                });
            }
        }
        for f in &mut sh.fifos {
            f.histogram[f.entries.len().min(f.capacity)] += 1;
        }
        let all_done = stages.iter().all(|s| s.done);
        if all_done && sh.mem_model.in_flight() == 0 {
            now += 1;
            break;
        }
        if !any_busy && sh.mem_model.in_flight() == 0 {
            quiet += 1;
            if quiet > patience {
                return Err(SimError::Deadlock {
                    cycle: now,
                    blocked,
                });
            }
        } else {
            quiet = 0;
        }
        now += 1;
    }
    let finish = stages.iter().map(|s| s.stats.finished_at).max().unwrap_or(0);
    let total = now.max(finish + 1 + drain).max(sh.last_delivery + 1);
    for st in &mut stages {
        let accounted = st.stats.busy + st.stats.stall_mem + st.stats.stall_fifo_full + st.stats.stall_fifo_empty + st.stats.idle;
        st.stats.idle += total - accounted;
    }
    let ret = units
        .iter()
        .zip(&stages)
        .find(|(u, _)| u.returns_value)
        .and_then(|(_, s)| s.machine.finished().flatten());
    let fifos = channels
        .iter()
        .zip(&sh.fifos)
        .map(|(c, f)| FifoStats {
            name: c.name.clone(),
            depth: f.capacity,
            pushes: f.pushes,
            pops: f.pops,
            max_occupancy: f.max_occupancy,
            occupancy: f.histogram.clone(),
        })
        .collect();
    Ok(SimReport {
        engine: engine.to_string(),
        kernel: kernel.to_string(),
        total_cycles: total,
        stages: stages.into_iter().map(|s| s.stats).collect(),
        fifos,
        memory: sh.mem_model.stats.clone(),
        hit_ratio: sh.mem_model.stats.hit_ratio(),
        digest: sh.image.digest(),
        return_value: ret.map(|v| v.to_string()),
        ret,
        trace,
        image: sh.image,
    })
}
