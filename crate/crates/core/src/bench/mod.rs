//! The four benchmark kernels as IR programs, with seeded inputs and host
//! oracles computed directly in Rust.

mod kernels;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ir::{parse_ir, values_close, MemoryImage, Program, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Spmv,
    Knapsack,
    FloydWarshall,
    Dfs,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Spmv,
        KernelKind::Knapsack,
        KernelKind::FloydWarshall,
        KernelKind::Dfs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Spmv => "spmv",
            KernelKind::Knapsack => "knapsack",
            KernelKind::FloydWarshall => "floyd_warshall",
            KernelKind::Dfs => "dfs",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "fw" => Some(KernelKind::FloydWarshall),
            _ => KernelKind::ALL.into_iter().find(|k| k.name() == s),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Size parameters, per kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scale {
    Spmv { dim: u32, density: f64 },
    Knapsack { capacity: u32, items: u32 },
    FloydWarshall { nodes: u32 },
    Dfs { nodes: u32, degree: u32 },
}

impl Scale {
    pub fn kind(&self) -> KernelKind {
        match self {
            Scale::Spmv { .. } => KernelKind::Spmv,
            Scale::Knapsack { .. } => KernelKind::Knapsack,
            Scale::FloydWarshall { .. } => KernelKind::FloydWarshall,
            Scale::Dfs { .. } => KernelKind::Dfs,
        }
    }

    /// Sizes small enough that every simulation finishes in seconds.
    pub fn desk(kind: KernelKind) -> Self {
        match kind {
            KernelKind::Spmv => Scale::Spmv { dim: 256, density: 0.25 },
            KernelKind::Knapsack => Scale::Knapsack { capacity: 256, items: 32 },
            KernelKind::FloydWarshall => Scale::FloydWarshall { nodes: 64 },
            KernelKind::Dfs => Scale::Dfs { nodes: 500, degree: 20 },
        }
    }

    pub fn full(kind: KernelKind) -> Self {
        match kind {
            KernelKind::Spmv => Scale::Spmv { dim: 4096, density: 0.25 },
            KernelKind::Knapsack => Scale::Knapsack { capacity: 3200, items: 200 },
            KernelKind::FloydWarshall => Scale::FloydWarshall { nodes: 256 },
            KernelKind::Dfs => Scale::Dfs { nodes: 8192, degree: 20 },
        }
    }

    /// Named preset ("desk" or "full").
    pub fn named(kind: KernelKind, name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Scale::desk(kind)),
            "full" => Some(Scale::full(kind)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSpec {
    pub scale: Scale,
    pub seed: u64,
}

impl KernelSpec {
    pub fn new(scale: Scale, seed: u64) -> Self {
        KernelSpec { scale, seed }
    }

    pub fn desk(kind: KernelKind, seed: u64) -> Self {
        KernelSpec::new(Scale::desk(kind), seed)
    }

    pub fn kind(&self) -> KernelKind {
        self.scale.kind()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BenchError {
    #[error("invalid parameter for {kernel}: {detail}")]
    InvalidParameter { kernel: KernelKind, detail: String },
}

/// Expected results computed on the host: the return value and the final
/// contents of the output spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub ret: Option<Value>,
    pub outputs: Vec<(String, Vec<Value>)>,
}

impl Oracle {
    /// Checks a final image and return value; floats compare with `rel_tol`.
    pub fn check(&self, mem: &MemoryImage, ret: Option<Value>, rel_tol: f32) -> Result<(), String> {
        match (self.ret, ret) {
            (None, None) => {}
            (Some(a), Some(b)) if values_close(a, b, rel_tol) => {}
            (a, b) => return Err(format!("return value: expected {a:?}, got {b:?}")),
        }
        for (name, want) in &self.outputs {
            let got = mem.space(name).ok_or_else(|| format!("missing space `{name}`"))?;
            if got.len() != want.len() {
                return Err(format!("space `{name}`: length {} vs {}", got.len(), want.len()));
            }
            if let Some(i) = (0..want.len()).find(|&i| !values_close(want[i], got[i], rel_tol)) {
                return Err(format!("{name}[{i}]: expected {:?}, got {:?}", want[i], got[i]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub spec: KernelSpec,
    pub program: Program,
    pub memory: MemoryImage,
    pub args: Vec<Value>,
    pub oracle: Oracle,
}

pub fn generate(spec: &KernelSpec) -> Result<Generated, BenchError> {
    let kind = spec.kind();
    let bad = |detail: &str| BenchError::InvalidParameter { kernel: kind, detail: detail.to_string() };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (text, fill, args, oracle) = match spec.scale {
        Scale::Spmv { dim, density } => {
            if dim == 0 || dim > 1 << 14 {
                return Err(bad("dim must be in 1..=16384"));
            }
            if !(density > 0.0 && density <= 1.0) {
                return Err(bad("density must be in (0, 1]"));
            }
            spmv(dim, density, &mut rng)
        }
        Scale::Knapsack { capacity, items } => {
            if capacity == 0 || items == 0 || (capacity as u64 + 1) * (items as u64 + 1) > 1 << 24 {
                return Err(bad("capacity and items must be positive and the table at most 2^24 cells"));
            }
            knapsack(capacity, items, &mut rng)
        }
        Scale::FloydWarshall { nodes } => {
            if nodes < 2 || nodes > 1024 {
                return Err(bad("nodes must be in 2..=1024"));
            }
            floyd_warshall(nodes, &mut rng)
        }
        Scale::Dfs { nodes, degree } => {
            if nodes < 2 || degree == 0 || nodes as u64 * degree as u64 > 1 << 22 {
                return Err(bad("nodes >= 2, degree >= 1, nodes*degree at most 2^22"));
            }
            dfs(nodes, degree, &mut rng)
        }
    };
    let program = parse_ir(&text).unwrap_or_else(|d| panic!("kernel text does not parse: {d:?}"));
    let mut memory = MemoryImage::zeroed(&program.spaces);
    for (name, values) in fill {
        memory.fill(&name, values);
    }
    Ok(Generated { spec: *spec, program, memory, args, oracle })
}

type Parts = (String, Vec<(String, Vec<Value>)>, Vec<Value>, Oracle);

fn ints(v: &[i32]) -> Vec<Value> {
    v.iter().map(|&x| Value::Int(x)).collect()
}

fn floats(v: &[f32]) -> Vec<Value> {
    v.iter().map(|&x| Value::Float(x)).collect()
}

fn spmv(dim: u32, density: f64, rng: &mut ChaCha8Rng) -> Parts {
    let n = dim as usize;
    let mut row_ptr = vec![0i32];
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    for _ in 0..n {
        for c in 0..n {
            if rng.gen_bool(density) {
                col_idx.push(c as i32);
                vals.push(rng.gen::<f32>());
            }
        }
        row_ptr.push(col_idx.len() as i32);
    }
    let x: Vec<f32> = (0..n).map(|_| rng.gen::<f32>()).collect();
    // Same summation order as the kernel, so results are bit-identical.
    let y: Vec<f32> = (0..n)
        .map(|r| {
            let (lo, hi) = (row_ptr[r] as usize, row_ptr[r + 1] as usize);
            (lo..hi).fold(0.0f32, |s, j| s + vals[j] * x[col_idx[j] as usize])
        })
        .collect();
    let nnz = col_idx.len().max(1) as u32;
    let text = kernels::spmv(dim, nnz);
    let fill = vec![
        ("row_ptr".to_string(), ints(&row_ptr)),
        ("col_idx".to_string(), ints(&col_idx)),
        ("vals".to_string(), floats(&vals)),
        ("x".to_string(), floats(&x)),
    ];
    let oracle = Oracle { ret: None, outputs: vec![("y".to_string(), floats(&y))] };
    (text, fill, vec![Value::Int(dim as i32)], oracle)
}

fn knapsack(capacity: u32, items: u32, rng: &mut ChaCha8Rng) -> Parts {
    let (w, n) = (capacity as usize, items as usize);
    let wt: Vec<i32> = (0..n).map(|_| rng.gen_range(1..=(w as i32 / 4).max(1))).collect();
    let val: Vec<i32> = (0..n).map(|_| rng.gen_range(1..=100)).collect();
    let width = w + 1;
    let mut dp = vec![0i32; (n + 1) * width];
    for i in 0..n {
        for c in 0..=w {
            let a = dp[i * width + c];
            let best = if c as i32 >= wt[i] {
                a.max(dp[i * width + c - wt[i] as usize] + val[i])
            } else {
                a
            };
            dp[(i + 1) * width + c] = best;
        }
    }
    let text = kernels::knapsack(capacity, items);
    let fill = vec![("wt".to_string(), ints(&wt)), ("val".to_string(), ints(&val))];
    let oracle = Oracle {
        ret: Some(Value::Int(dp[n * width + w])),
        outputs: vec![("dp".to_string(), ints(&dp))],
    };
    (text, fill, vec![Value::Int(items as i32), Value::Int(capacity as i32)], oracle)
}

/// Weights are small positive integers; about a third of the pairs have no
/// edge (a large finite sentinel that cannot overflow when added twice).
pub const FW_INFINITY: i32 = 1 << 28;

fn floyd_warshall(nodes: u32, rng: &mut ChaCha8Rng) -> Parts {
    let n = nodes as usize;
    let mut d = vec![0i32; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = if i == j {
                0
            } else if rng.gen_bool(0.35) {
                FW_INFINITY
            } else {
                rng.gen_range(1..=20)
            };
        }
    }
    let init = d.clone();
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            for j in 0..n {
                let s = dik + d[k * n + j];
                if s < d[i * n + j] {
                    d[i * n + j] = s;
                }
            }
        }
    }
    let text = kernels::floyd_warshall(nodes);
    let oracle = Oracle { ret: None, outputs: vec![("dist".to_string(), ints(&d))] };
    (text, vec![("dist".to_string(), ints(&init))], vec![Value::Int(nodes as i32)], oracle)
}

fn dfs(nodes: u32, degree: u32, rng: &mut ChaCha8Rng) -> Parts {
    let (n, k) = (nodes as usize, degree as usize);
    let adj: Vec<i32> = (0..n * k).map(|_| rng.gen_range(0..nodes as i32)).collect();
    let mut visited = vec![0i32; n];
    let mut stack = vec![0i32; n];
    visited[0] = 1;
    let (mut sp, mut count) = (1usize, 1i32);
    while sp > 0 {
        sp -= 1;
        let v = stack[sp] as usize;
        for e in 0..k {
            let u = adj[v * k + e] as usize;
            if visited[u] == 0 {
                visited[u] = 1;
                stack[sp] = u as i32;
                sp += 1;
                count += 1;
            }
        }
    }
    let text = kernels::dfs(nodes, degree);
    let oracle = Oracle {
        ret: Some(Value::Int(count)),
        outputs: vec![("visited".to_string(), ints(&visited)), ("stack".to_string(), ints(&stack))],
    };
    (text, vec![("adj".to_string(), ints(&adj))], vec![Value::Int(degree as i32)], oracle)
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub kind: KernelKind,
    pub description: &'static str,
    pub annotations: &'static str,
    /// The kernel deliberately carries a dependence cycle through memory.
    pub memory_cycle: bool,
    /// Correctness relies on the `no_loop_carried` annotation.
    pub needs_no_loop_carried: bool,
}

pub fn kernel_catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            kind: KernelKind::Spmv,
            description: "CSR sparse matrix times dense vector; x is gathered through col_idx",
            annotations: "row_ptr, col_idx, vals: readonly stream; x: readonly (random gather); y: stream",
            memory_cycle: false,
            needs_no_loop_carried: false,
        },
        CatalogEntry {
            kind: KernelKind::Knapsack,
            description: "0/1 knapsack dynamic programming over a (items+1) x (capacity+1) table",
            annotations: "wt, val: readonly stream; dp: no_loop_carried, since row i only reads row i-1, \
                          which was written at least capacity+1 iterations earlier",
            memory_cycle: false,
            needs_no_loop_carried: true,
        },
        CatalogEntry {
            kind: KernelKind::FloydWarshall,
            description: "all-pairs shortest paths, triple loop over k, i, j",
            annotations: "dist: no_loop_carried, since within one k row k and column k are fixed and \
                          each cell is reused at least n iterations later",
            memory_cycle: false,
            needs_no_loop_carried: true,
        },
        CatalogEntry {
            kind: KernelKind::Dfs,
            description: "iterative depth-first search with an explicit stack; returns the visited count",
            annotations: "adj: readonly; visited, stack: unannotated, the stack push/pop forms a \
                          dependence cycle through memory",
            memory_cycle: true,
            needs_no_loop_carried: false,
        },
    ]
}

#[cfg(test)]
mod tests;
