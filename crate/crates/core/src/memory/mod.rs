//! Shared memory subsystem: optional set-associative cache, a limit on
//! outstanding requests, burst requests and a fixed-latency backing store.

mod cache;
mod coalesce;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ir::{AccessKind, Annotation, MemSpace};

pub use cache::{Cache, Lookup};
pub use coalesce::{coalesce, Burst};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpacePolicy {
    Cached,
    UncachedBurst,
}

impl SpacePolicy {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "cached" => Some(SpacePolicy::Cached),
            "uncached-burst" | "uncached" => Some(SpacePolicy::UncachedBurst),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemConfig {
    pub hit_latency: u32,
    pub miss_latency: u32,
    pub line_size: u32,
    pub cache_capacity: u32,
    pub associativity: u32,
    pub max_outstanding: usize,
    pub burst_max: u32,
    pub cache_enabled: bool,
    /// Bursts a streaming read port requests ahead of its consumer.
    pub stream_prefetch: u32,
    /// Overrides of the annotation-derived policy, by space name.
    pub policy: BTreeMap<String, SpacePolicy>,
}

impl Default for MemConfig {
    fn default() -> Self {
        MemConfig {
            hit_latency: 2,
            miss_latency: 80,
            line_size: 64,
            cache_capacity: 64 * 1024,
            associativity: 2,
            max_outstanding: 8,
            burst_max: 16,
            cache_enabled: true,
            stream_prefetch: 4,
            policy: BTreeMap::new(),
        }
    }
}

impl MemConfig {
    /// Named port presets. `acp` is the cached coherent port (the default);
    /// `hp` bypasses the cache and pays a somewhat lower miss latency.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "acp" => Some(MemConfig::default()),
            "hp" => Some(MemConfig {
                cache_enabled: false,
                miss_latency: 60,
                ..MemConfig::default()
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.line_size == 0 || self.associativity == 0 {
            return Err("line_size and associativity must be positive".into());
        }
        let set_bytes = self.line_size as u64 * self.associativity as u64;
        if self.cache_capacity == 0 || self.cache_capacity as u64 % set_bytes != 0 {
            return Err(format!(
                "cache_capacity {} is not a multiple of line_size x associativity ({set_bytes})",
                self.cache_capacity
            ));
        }
        if self.burst_max == 0 {
            return Err("burst_max must be at least 1".into());
        }
        if self.max_outstanding == 0 {
            return Err("max_outstanding must be at least 1".into());
        }
        Ok(())
    }

    /// Stream spaces use uncached bursts, all others go through the cache;
    /// explicit entries win.
    pub fn policy_for(&self, space: &MemSpace) -> SpacePolicy {
        if let Some(&p) = self.policy.get(&space.name) {
            return p;
        }
        if space.has(Annotation::Stream) {
            SpacePolicy::UncachedBurst
        } else {
            SpacePolicy::Cached
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemRequest {
    pub id: u64,
    pub port: usize,
    pub space: usize,
    pub addr: u32,
    pub len: u32,
    pub kind: AccessKind,
    pub issue: u64,
    pub completion: u64,
    pub cached: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MemStats {
    pub requests: u64,
    pub reads: u64,
    pub writes: u64,
    pub beats: u64,
    pub hits: u64,
    pub misses: u64,
    pub rejected: u64,
    /// Cycles observed with each in-flight count, index = count.
    pub occupancy: Vec<u64>,
}

impl MemStats {
    pub fn hit_ratio(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

/// The memory subsystem's timing state. Functional data lives elsewhere.
#[derive(Debug, Clone)]
pub struct MemoryModel {
    cfg: MemConfig,
    cache: Cache,
    /// Byte base address and element width of each space.
    layout: Vec<(u64, u64)>,
    in_flight: Vec<MemRequest>,
    /// Last cycle each port had a completion delivered.
    last_delivery: BTreeMap<usize, u64>,
    next_id: u64,
    pub stats: MemStats,
}

impl MemoryModel {
    pub fn new(cfg: &MemConfig, spaces: &[MemSpace]) -> Self {
        let mut layout = Vec::new();
        let mut base = 0u64;
        for s in spaces {
            layout.push((base, s.element_width as u64));
            let bytes = s.extent as u64 * s.element_width as u64;
            base = (base + bytes).div_ceil(4096).max(1) * 4096;
        }
        MemoryModel {
            cache: Cache::new(
                cfg.cache_capacity as u64,
                cfg.line_size as u64,
                cfg.associativity as usize,
            ),
            cfg: cfg.clone(),
            layout,
            in_flight: Vec::new(),
            last_delivery: BTreeMap::new(),
            next_id: 0,
            stats: MemStats {
                occupancy: vec![0; cfg.max_outstanding + 1],
                ..MemStats::default()
            },
        }
    }

    pub fn config(&self) -> &MemConfig {
        &self.cfg
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn can_issue(&self) -> bool {
        self.in_flight.len() < self.cfg.max_outstanding
    }

    pub fn byte_address(&self, space: usize, addr: u32) -> u64 {
        let (base, width) = self.layout[space];
        base + addr as u64 * width
    }

    /// Issues a burst; `None` when the outstanding limit is reached.
    #[allow(clippy::too_many_arguments)]
    pub fn issue(
        &mut self,
        port: usize,
        space: usize,
        addr: u32,
        len: u32,
        kind: AccessKind,
        cached: bool,
        now: u64,
    ) -> Option<MemRequest> {
        if !self.can_issue() {
            self.stats.rejected += 1;
            return None;
        }
        let len = len.max(1);
        let cached = cached && self.cfg.cache_enabled;
        let ready = if cached {
            let first = self.cache.line_of(self.byte_address(space, addr));
            let last = self.cache.line_of(self.byte_address(space, addr + len - 1));
            let miss_done = now + self.cfg.miss_latency as u64;
            let mut ready = now;
            for line in first..=last {
                let r = match self.cache.access(line, miss_done) {
                    Lookup::Hit(fill) => {
                        self.stats.hits += 1;
                        (now + self.cfg.hit_latency as u64).max(fill)
                    }
                    Lookup::Miss => {
                        self.stats.misses += 1;
                        miss_done
                    }
                };
                ready = ready.max(r);
            }
            ready
        } else {
            now + self.cfg.miss_latency as u64
        };
        let req = MemRequest {
            id: self.next_id,
            port,
            space,
            addr,
            len,
            kind,
            issue: now,
            completion: ready + len as u64 - 1,
            cached,
        };
        self.next_id += 1;
        self.stats.requests += 1;
        self.stats.beats += len as u64;
        match kind {
            AccessKind::Read => self.stats.reads += 1,
            AccessKind::Write => self.stats.writes += 1,
        }
        self.in_flight.push(req);
        Some(req)
    }

    /// Records the current in-flight count; call once per cycle.
    pub fn sample_occupancy(&mut self) {
        let occ = self.in_flight.len().min(self.stats.occupancy.len() - 1);
        self.stats.occupancy[occ] += 1;
    }

    /// Delivers requests complete by `now`, at most one per port per cycle,
    /// ordered by (completion, id). May be called several times per cycle.
    pub fn tick(&mut self, now: u64) -> Vec<MemRequest> {
        let mut ready: Vec<MemRequest> = self
            .in_flight
            .iter()
            .filter(|r| r.completion <= now)
            .copied()
            .collect();
        ready.sort_by_key(|r| (r.completion, r.id));
        let mut out = Vec::new();
        for r in ready {
            if self.last_delivery.get(&r.port) == Some(&now) {
                continue;
            }
            self.last_delivery.insert(r.port, now);
            out.push(r);
        }
        self.in_flight
            .retain(|r| !out.iter().any(|d| d.id == r.id));
        out
    }

    /// Earliest cycle at which some in-flight request can complete.
    pub fn next_completion(&self) -> Option<u64> {
        self.in_flight.iter().map(|r| r.completion).min()
    }
}
