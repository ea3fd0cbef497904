//! Flat `key = value` run configuration. Later settings win; CLI flags are
//! applied after the config file.

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::bench::{KernelKind, KernelSpec, Scale};
use crate::ir::{Opcode, Value};
use crate::memory::{MemConfig, SpacePolicy};
use crate::partition::{DEFAULT_FIFO_DEPTH, DEFAULT_MAX_DUP_NODES};
use crate::sim::SimConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("{0}")]
    Invalid(String),
}

const KEYS: &[&str] = &[
    "kernel",
    "ir_file",
    "args",
    "scale",
    "seed",
    "engines",
    "fifo_depth",
    "max_dup_nodes",
    "trace",
    "trace_rows",
    "dump_cdfg",
    "fuel",
    "gantt.from",
    "gantt.to",
    "out",
    "mem.preset",
    "mem.hit_latency",
    "mem.miss_latency",
    "mem.line_size",
    "mem.cache_capacity",
    "mem.associativity",
    "mem.max_outstanding",
    "mem.burst_max",
    "mem.cache_enabled",
    "mem.stream_prefetch",
];

/// Size overrides; each applies to one kernel only.
const SIZE_KEYS: &[&str] = &[
    "spmv.dim",
    "spmv.density",
    "knapsack.capacity",
    "knapsack.items",
    "floyd_warshall.nodes",
    "dfs.nodes",
    "dfs.degree",
];

fn key_known(key: &str) -> bool {
    if KEYS.contains(&key) || SIZE_KEYS.contains(&key) {
        return true;
    }
    if let Some(space) = key.strip_prefix("policy.") {
        return !space.is_empty();
    }
    if let Some(rest) = key.strip_prefix("latency.") {
        let op = rest.strip_suffix(".pipelined").unwrap_or(rest);
        return Opcode::from_name(op).is_some_and(|op| !op.is_control());
    }
    false
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses a config file: one `key = value` per line, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            };
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !key_known(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// `key=value`, as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: 0, text: pair.to_string() })?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        Resolver { cfg: self }.resolve()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Kernel(KernelSpec),
    IrFile { path: PathBuf, args: Vec<Value> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Engines {
    pub monolithic: bool,
    pub pipeline: bool,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub input: Input,
    pub engines: Engines,
    pub fifo_depth: usize,
    pub max_dup_nodes: usize,
    pub sim: SimConfig,
    pub dump_cdfg: bool,
    pub gantt: (u64, u64),
    pub out: PathBuf,
}

struct Resolver<'a> {
    cfg: &'a RunConfig,
}

impl Resolver<'_> {
    fn bad(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            key: key.to_string(),
            value: self.cfg.get(key).unwrap_or("").to_string(),
            reason: reason.into(),
        }
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T, lo: T, hi: T) -> Result<T, ConfigError>
    where
        T: PartialOrd + std::fmt::Display + Copy,
    {
        let Some(v) = self.cfg.get(key) else { return Ok(default) };
        let x: T = v.parse().map_err(|_| self.bad(key, "not a number"))?;
        if x < lo || x > hi {
            return Err(self.bad(key, format!("must be in {lo}..={hi}")));
        }
        Ok(x)
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.cfg.get(key) {
            None => Ok(default),
            Some("true" | "on" | "yes" | "1") => Ok(true),
            Some("false" | "off" | "no" | "0") => Ok(false),
            Some(_) => Err(self.bad(key, "expected true or false")),
        }
    }

    fn input(&self) -> Result<Input, ConfigError> {
        match (self.cfg.get("kernel"), self.cfg.get("ir_file")) {
            (Some(_), Some(_)) => Err(ConfigError::Invalid("`kernel` and `ir_file` are mutually exclusive".into())),
            (None, None) => Err(ConfigError::Invalid("one of `kernel` or `ir_file` is required".into())),
            (None, Some(path)) => {
                let args = match self.cfg.get("args") {
                    None | Some("") => Vec::new(),
                    Some(list) => list
                        .split(',')
                        .map(|a| parse_value(a.trim()).ok_or_else(|| self.bad("args", "expected integers or floats")))
                        .collect::<Result<_, _>>()?,
                };
                Ok(Input::IrFile { path: PathBuf::from(path), args })
            }
            (Some(name), None) => {
                let kind = KernelKind::from_name(name)
                    .ok_or_else(|| self.bad("kernel", "expected spmv, knapsack, floyd_warshall or dfs"))?;
                let scale_name = self.cfg.get("scale").unwrap_or("desk");
                let mut scale =
                    Scale::named(kind, scale_name).ok_or_else(|| self.bad("scale", "expected desk or full"))?;
                let big = u32::MAX;
                match &mut scale {
                    Scale::Spmv { dim, density } => {
                        *dim = self.num("spmv.dim", *dim, 1, 1 << 14)?;
                        *density = self.num("spmv.density", *density, f64::MIN_POSITIVE, 1.0)?;
                    }
                    Scale::Knapsack { capacity, items } => {
                        *capacity = self.num("knapsack.capacity", *capacity, 1, big)?;
                        *items = self.num("knapsack.items", *items, 1, big)?;
                    }
                    Scale::FloydWarshall { nodes } => {
                        *nodes = self.num("floyd_warshall.nodes", *nodes, 2, 1024)?;
                    }
                    Scale::Dfs { nodes, degree } => {
                        *nodes = self.num("dfs.nodes", *nodes, 2, big)?;
                        *degree = self.num("dfs.degree", *degree, 1, big)?;
                    }
                }
                let prefix = format!("{}.", kind.name());
                if let Some(k) = self.cfg.entries.keys().find(|k| {
                    SIZE_KEYS.contains(&k.as_str()) && !k.starts_with(&prefix)
                }) {
                    return Err(ConfigError::Invalid(format!("`{k}` does not apply to kernel {kind}")));
                }
                let seed = self.num("seed", 0u64, 0, u64::MAX)?;
                Ok(Input::Kernel(KernelSpec::new(scale, seed)))
            }
        }
    }

    fn mem(&self) -> Result<MemConfig, ConfigError> {
        let base = match self.cfg.get("mem.preset") {
            None => MemConfig::default(),
            Some(p) => MemConfig::preset(p).ok_or_else(|| self.bad("mem.preset", "expected acp or hp"))?,
        };
        let m = MemConfig {
            hit_latency: self.num("mem.hit_latency", base.hit_latency, 0, 100_000)?,
            miss_latency: self.num("mem.miss_latency", base.miss_latency, 0, 100_000)?,
            line_size: self.num("mem.line_size", base.line_size, 4, 4096)?,
            cache_capacity: self.num("mem.cache_capacity", base.cache_capacity, 64, 1 << 30)?,
            associativity: self.num("mem.associativity", base.associativity, 1, 64)?,
            max_outstanding: self.num("mem.max_outstanding", base.max_outstanding, 1, 4096)?,
            burst_max: self.num("mem.burst_max", base.burst_max, 1, 4096)?,
            cache_enabled: self.flag("mem.cache_enabled", base.cache_enabled)?,
            stream_prefetch: self.num("mem.stream_prefetch", base.stream_prefetch, 0, 256)?,
            policy: self
                .cfg
                .entries
                .iter()
                .filter_map(|(k, v)| Some((k.strip_prefix("policy.")?, k, v)))
                .map(|(space, k, v)| {
                    let p = SpacePolicy::from_name(v).ok_or_else(|| self.bad(k, "expected cached or uncached-burst"))?;
                    Ok((space.to_string(), p))
                })
                .collect::<Result<_, ConfigError>>()?,
        };
        m.validate().map_err(ConfigError::Invalid)?;
        Ok(m)
    }

    fn resolve(&self) -> Result<Resolved, ConfigError> {
        let input = self.input()?;
        let engines = match self.cfg.get("engines").unwrap_or("both") {
            "both" | "monolithic,pipeline" | "pipeline,monolithic" => Engines { monolithic: true, pipeline: true },
            "monolithic" => Engines { monolithic: true, pipeline: false },
            "pipeline" => Engines { monolithic: false, pipeline: true },
            _ => return Err(self.bad("engines", "expected both, monolithic or pipeline")),
        };
        let mut sim = SimConfig { mem: self.mem()?, ..SimConfig::default() };
        for op in Opcode::ALL.into_iter().filter(|op| !op.is_control()) {
            let key = format!("latency.{}", op.name());
            let pkey = format!("{key}.pipelined");
            let cur = sim.latency.get(op).expect("default table is complete");
            let cycles = self.num(&key, cur.cycles, 1, 10_000)?;
            let pipelined = self.flag(&pkey, cur.pipelined)?;
            sim.latency.set(op, cycles, pipelined).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        sim.trace = self.flag("trace", false)?;
        sim.trace_rows = self.num("trace_rows", sim.trace_rows, 1, 100_000_000)?;
        sim.fuel = self.num("fuel", sim.fuel, 1, u64::MAX)?;
        let from = self.num("gantt.from", 0u64, 0, u64::MAX)?;
        let to = self.num("gantt.to", from + 120, 0, u64::MAX)?;
        if to < from {
            return Err(self.bad("gantt.to", "must not be below gantt.from"));
        }
        Ok(Resolved {
            input,
            engines,
            fifo_depth: self.num("fifo_depth", DEFAULT_FIFO_DEPTH, 1, 1 << 16)?,
            max_dup_nodes: self.num("max_dup_nodes", DEFAULT_MAX_DUP_NODES, 0, 1 << 16)?,
            sim,
            dump_cdfg: self.flag("dump_cdfg", false)?,
            gantt: (from, to),
            out: PathBuf::from(self.cfg.get("out").unwrap_or("out")),
        })
    }
}

fn parse_value(s: &str) -> Option<Value> {
    if let Ok(i) = s.parse::<i32>() {
        return Some(Value::Int(i));
    }
    s.parse::<f32>().ok().map(Value::Float)
}

impl Resolved {
    /// Every resolved setting except the output directory, in key order.
    /// Reports embed this so each artifact records how it was produced.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        match &self.input {
            Input::Kernel(spec) => {
                put("kernel", spec.kind().name().to_string());
                put("seed", spec.seed.to_string());
                match spec.scale {
                    Scale::Spmv { dim, density } => {
                        put("spmv.dim", dim.to_string());
                        put("spmv.density", density.to_string());
                    }
                    Scale::Knapsack { capacity, items } => {
                        put("knapsack.capacity", capacity.to_string());
                        put("knapsack.items", items.to_string());
                    }
                    Scale::FloydWarshall { nodes } => put("floyd_warshall.nodes", nodes.to_string()),
                    Scale::Dfs { nodes, degree } => {
                        put("dfs.nodes", nodes.to_string());
                        put("dfs.degree", degree.to_string());
                    }
                }
            }
            Input::IrFile { path, args } => {
                put("ir_file", path.display().to_string());
                put("args", args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","));
            }
        }
        let engines = match (self.engines.monolithic, self.engines.pipeline) {
            (true, true) => "both",
            (true, false) => "monolithic",
            _ => "pipeline",
        };
        put("engines", engines.to_string());
        put("fifo_depth", self.fifo_depth.to_string());
        put("max_dup_nodes", self.max_dup_nodes.to_string());
        put("trace", self.sim.trace.to_string());
        put("trace_rows", self.sim.trace_rows.to_string());
        put("fuel", self.sim.fuel.to_string());
        put("dump_cdfg", self.dump_cdfg.to_string());
        put("gantt.from", self.gantt.0.to_string());
        put("gantt.to", self.gantt.1.to_string());
        let mem = &self.sim.mem;
        put("mem.hit_latency", mem.hit_latency.to_string());
        put("mem.miss_latency", mem.miss_latency.to_string());
        put("mem.line_size", mem.line_size.to_string());
        put("mem.cache_capacity", mem.cache_capacity.to_string());
        put("mem.associativity", mem.associativity.to_string());
        put("mem.max_outstanding", mem.max_outstanding.to_string());
        put("mem.burst_max", mem.burst_max.to_string());
        put("mem.cache_enabled", mem.cache_enabled.to_string());
        put("mem.stream_prefetch", mem.stream_prefetch.to_string());
        for (space, p) in &mem.policy {
            let name = match p {
                SpacePolicy::Cached => "cached",
                SpacePolicy::UncachedBurst => "uncached-burst",
            };
            put(&format!("policy.{space}"), name.to_string());
        }
        for (op, e) in self.sim.latency.iter() {
            put(&format!("latency.{}", op.name()), e.cycles.to_string());
            put(&format!("latency.{}.pipelined", op.name()), e.pipelined.to_string());
        }
        m
    }
}
