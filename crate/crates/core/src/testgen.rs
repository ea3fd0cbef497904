//! Seeded random kernels for property tests: loop nests with diamonds,
//! accumulators and memory traffic over a few small spaces.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{parse_ir, MemoryImage, Program, Value};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ty {
    Int,
    Float,
}

const EXTENT: u32 = 16;

struct SpaceDecl {
    name: &'static str,
    ty: Ty,
    /// Loads only.
    readonly: bool,
    /// Accessed only at the counter of one top-level loop.
    private: bool,
}

const SPACES: [SpaceDecl; 4] = [
    SpaceDecl { name: "ri", ty: Ty::Int, readonly: true, private: false },
    SpaceDecl { name: "mi", ty: Ty::Int, readonly: false, private: false },
    SpaceDecl { name: "mf", ty: Ty::Float, readonly: false, private: false },
    SpaceDecl { name: "pi", ty: Ty::Int, readonly: false, private: true },
];

struct Gen {
    rng: ChaCha8Rng,
    out: String,
    next: usize,
    block: String,
    blocks: usize,
    /// Values available at the current point.
    pool: Vec<(String, Ty)>,
}

impl Gen {
    fn fresh(&mut self, prefix: &str) -> String {
        self.next += 1;
        format!("{prefix}{}", self.next)
    }

    fn fresh_block(&mut self, prefix: &str) -> String {
        self.blocks += 1;
        format!("{prefix}{}", self.blocks)
    }

    fn line(&mut self, s: &str) {
        let _ = writeln!(self.out, "  {s}");
    }

    fn start_block(&mut self, label: &str) {
        let _ = writeln!(self.out, "block {label}:");
        self.block = label.to_string();
    }

    fn pick(&mut self, ty: Ty) -> String {
        let cands: Vec<&(String, Ty)> = self.pool.iter().filter(|(_, t)| *t == ty).collect();
        match cands.choose(&mut self.rng) {
            Some((n, _)) if self.rng.gen_bool(0.85) => format!("%{n}"),
            _ => match ty {
                Ty::Int => self.rng.gen_range(-4..9).to_string(),
                Ty::Float => format!("{:?}", self.rng.gen_range(-4..9) as f32 * 0.5),
            },
        }
    }

    fn define(&mut self, name: &str, ty: Ty, rhs: String) {
        self.line(&format!("%{name} = {rhs}"));
        self.pool.push((name.to_string(), ty));
    }

    fn masked_addr(&mut self, counter: Option<&str>) -> String {
        let base = match counter {
            Some(c) => format!("%{c}"),
            None => self.pick(Ty::Int),
        };
        let a = self.fresh("a");
        self.define(&a, Ty::Int, format!("iand {base}, {}", EXTENT - 1));
        format!("%{a}")
    }

    /// One random straight-line operation.
    fn op(&mut self, counter: Option<&str>, private_ok: bool) {
        let roll = self.rng.gen_range(0..100);
        match roll {
            0..=29 => {
                let ops = ["iadd", "isub", "imul", "iand", "ior", "ixor", "shl", "shr"];
                let op = *ops.choose(&mut self.rng).unwrap();
                let (a, b) = (self.pick(Ty::Int), self.pick(Ty::Int));
                let r = self.fresh("v");
                self.define(&r, Ty::Int, format!("{op} {a}, {b}"));
            }
            30..=39 => {
                let kinds = ["eq", "ne", "slt", "sle", "sgt", "sge"];
                let k = *kinds.choose(&mut self.rng).unwrap();
                let (a, b) = (self.pick(Ty::Int), self.pick(Ty::Int));
                let c = self.fresh("p");
                self.define(&c, Ty::Int, format!("icmp {k} {a}, {b}"));
                let ty = if self.rng.gen_bool(0.5) { Ty::Int } else { Ty::Float };
                let (x, y) = (self.pick(ty), self.pick(ty));
                let r = self.fresh("v");
                self.define(&r, ty, format!("select %{c}, {x}, {y}"));
            }
            40..=54 => {
                let op = ["fadd", "fmul", "fdiv"][self.rng.gen_range(0..3)];
                let a = self.pick(Ty::Float);
                let b = if op == "fdiv" {
                    format!("{:?}", [0.5f32, 2.0, -4.0][self.rng.gen_range(0..3)])
                } else {
                    self.pick(Ty::Float)
                };
                let r = self.fresh("f");
                self.define(&r, Ty::Float, format!("{op} {a}, {b}"));
            }
            55..=79 => {
                let sp = &SPACES[self.rng.gen_range(0..SPACES.len())];
                if sp.private && !private_ok {
                    return;
                }
                let addr = self.masked_addr(if sp.private { counter } else { None });
                let r = self.fresh(if sp.ty == Ty::Int { "l" } else { "lf" });
                self.define(&r, sp.ty, format!("load {}[{addr}]", sp.name));
            }
            _ => {
                let writable: Vec<&SpaceDecl> = SPACES.iter().filter(|s| !s.readonly).collect();
                let sp = writable[self.rng.gen_range(0..writable.len())];
                if sp.private && !private_ok {
                    return;
                }
                let addr = self.masked_addr(if sp.private { counter } else { None });
                let v = self.pick(sp.ty);
                self.line(&format!("store {}[{addr}], {v}", sp.name));
            }
        }
    }

    fn ops(&mut self, n: usize, counter: Option<&str>, private_ok: bool) {
        for _ in 0..n {
            self.op(counter, private_ok);
        }
    }

    /// `br` into a then-block, merging its new values at a join block.
    fn diamond(&mut self, counter: Option<&str>, private_ok: bool) {
        let cond = self.pick(Ty::Int);
        let then_l = self.fresh_block("then");
        let join_l = self.fresh_block("join");
        let from = self.block.clone();
        let c = self.fresh("p");
        self.define(&c, Ty::Int, format!("icmp sgt {cond}, 0"));
        self.line(&format!("br %{c}, {then_l}, {join_l}"));
        let saved = self.pool.len();
        self.start_block(&then_l);
        let n = self.rng.gen_range(1..4);
        self.ops(n, counter, private_ok);
        let then_vals: Vec<(String, Ty)> = self.pool.drain(saved..).collect();
        self.line(&format!("jmp {join_l}"));
        self.start_block(&join_l);
        let merged: Vec<(String, Ty, String)> = then_vals
            .into_iter()
            .rev()
            .take(2)
            .map(|(v, ty)| {
                let other = self.pick(ty);
                (v, ty, other)
            })
            .collect();
        for (v, ty, other) in merged {
            let m = self.fresh("m");
            self.define(&m, ty, format!("phi [{then_l}: %{v}, {from}: {other}]"));
        }
    }

    /// A counted loop; `depth` 0 may contain one nested loop.
    fn counted_loop(&mut self, depth: usize, allow_nest: bool) {
        let header = self.fresh_block("loop");
        let latch_name = format!("{header}.latch");
        let entry = self.block.clone();
        let trip = self.rng.gen_range(2..if depth == 0 { 9 } else { 5 });
        self.line(&format!("jmp {header}"));
        self.start_block(&header);
        let i = self.fresh("i");
        let i_next = self.fresh("i");
        // Accumulators: (phi, type, init).
        let accs: Vec<(String, String, Ty, String)> = (0..self.rng.gen_range(0..3))
            .map(|_| {
                let ty = if self.rng.gen_bool(0.5) { Ty::Int } else { Ty::Float };
                let init = self.pick(ty);
                (self.fresh("s"), self.fresh("s"), ty, init)
            })
            .collect();
        self.line(&format!("%{i} = phi [{entry}: 0, {latch_name}: %{i_next}]"));
        for (s, s_next, _, init) in &accs {
            let line = format!("%{s} = phi [{entry}: {init}, {latch_name}: %{s_next}]");
            self.line(&line);
        }
        self.pool.push((i.clone(), Ty::Int));
        for (s, _, ty, _) in &accs {
            self.pool.push((s.clone(), *ty));
        }
        let private_ok = depth == 0 && !allow_nest;
        let n = self.rng.gen_range(1..5);
        self.ops(n, Some(&i), private_ok);
        if self.rng.gen_bool(0.4) {
            self.diamond(Some(&i), private_ok);
        }
        if allow_nest && depth == 0 && self.rng.gen_bool(0.6) {
            self.counted_loop(1, false);
        }
        let n = self.rng.gen_range(0..3);
        self.ops(n, Some(&i), private_ok);
        self.line(&format!("jmp {latch_name}"));
        self.start_block(&latch_name);
        for (s, s_next, ty, _) in &accs {
            let op = if *ty == Ty::Int { "iadd" } else { "fadd" };
            let v = self.pick(*ty);
            self.line(&format!("%{s_next} = {op} %{s}, {v}"));
        }
        for (_, s_next, ty, _) in &accs {
            self.pool.push((s_next.clone(), *ty));
        }
        self.line(&format!("%{i_next} = iadd %{i}, 1"));
        let c = self.fresh("c");
        self.line(&format!("%{c} = icmp slt %{i_next}, {trip}"));
        let exit = self.fresh_block("after");
        self.line(&format!("br %{c}, {header}, {exit}"));
        // Every block on the loop spine dominates the exit, so the pool
        // stays as is.
        self.start_block(&exit);
    }
}

/// A valid, terminating kernel plus initial memory and arguments.
pub fn random_program(seed: u64) -> (Program, MemoryImage, Vec<Value>) {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        out: String::new(),
        next: 0,
        block: String::new(),
        blocks: 0,
        pool: vec![("n".into(), Ty::Int), ("x".into(), Ty::Float)],
    };
    let _ = writeln!(g.out, "func rand{seed}(%n, %x) {{");
    for sp in &SPACES {
        let mut ann = String::new();
        if sp.readonly {
            ann.push_str(" readonly");
        }
        if sp.private {
            ann.push_str(" no_loop_carried");
        }
        let _ = writeln!(g.out, "  space {} elem=4 extent={EXTENT}{ann}", sp.name);
    }
    g.start_block("entry");
    let n = g.rng.gen_range(0..3);
    g.ops(n, None, false);
    let loops = g.rng.gen_range(1..3);
    let nest_first = g.rng.gen_bool(0.5);
    for l in 0..loops {
        g.counted_loop(0, l == 0 && nest_first);
        let n = g.rng.gen_range(0..2);
        g.ops(n, None, false);
    }
    let r = g.pick(Ty::Int);
    g.line(&format!("ret {r}"));
    g.out.push_str("}\n");
    let program = match parse_ir(&g.out) {
        Ok(p) => p,
        Err(d) => panic!("generator produced invalid IR ({d:?}):\n{}", g.out),
    };
    let mut mem = MemoryImage::zeroed(&program.spaces);
    for sp in &SPACES {
        let vals: Vec<Value> = (0..EXTENT)
            .map(|_| match sp.ty {
                Ty::Int => Value::Int(g.rng.gen_range(-20..20)),
                Ty::Float => Value::Float(g.rng.gen_range(-8..8) as f32 * 0.25),
            })
            .collect();
        mem.fill(sp.name, vals);
    }
    let args = vec![Value::Int(g.rng.gen_range(-5..10)), Value::Float(1.5)];
    (program, mem, args)
}
