//! Reference sequential semantics, plus the single-step machine the
//! simulators drive.

use std::collections::HashMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{BinOp, CmpKind, InstKind, MemSpace, Operand, Program, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Trap {
    #[error("out-of-bounds access to `{space}` at address {addr} (extent {extent})")]
    OutOfBounds {
        space: String,
        addr: i64,
        extent: u32,
    },
    #[error("fuel exhausted after {0} steps")]
    FuelExhausted(u64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("type mismatch in `{op}`: {detail}")]
    TypeMismatch { op: &'static str, detail: String },
    #[error("read of undefined value `%{0}`")]
    Undefined(String),
    #[error("memory image does not match the program's spaces: {0}")]
    MemoryLayout(String),
    #[error("expected {expected} arguments, got {got}")]
    ArgCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Access {
    /// Index of the space in the program's declaration order.
    pub space: usize,
    pub addr: u32,
    pub kind: AccessKind,
}

pub type AccessTrace = Vec<Access>;

/// Per-space flat arrays of element values, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryImage {
    names: Vec<String>,
    data: Vec<Vec<Value>>,
}

impl MemoryImage {
    pub fn zeroed(spaces: &[MemSpace]) -> Self {
        Self {
            names: spaces.iter().map(|s| s.name.clone()).collect(),
            data: spaces
                .iter()
                .map(|s| vec![Value::Int(0); s.extent as usize])
                .collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn space(&self, name: &str) -> Option<&[Value]> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&self.data[i])
    }

    pub fn space_mut(&mut self, name: &str) -> Option<&mut Vec<Value>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.data[i])
    }

    pub fn by_index(&self, i: usize) -> &[Value] {
        &self.data[i]
    }

    /// Overwrites the prefix of a space with `values`.
    pub fn fill(&mut self, name: &str, values: impl IntoIterator<Item = Value>) {
        let space = self
            .space_mut(name)
            .unwrap_or_else(|| panic!("no space named `{name}`"));
        for (slot, v) in space.iter_mut().zip(values) {
            *slot = v;
        }
    }

    /// SHA-256 over names and raw element bits.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, values) in self.names.iter().zip(&self.data) {
            h.update(name.as_bytes());
            h.update([0u8]);
            for v in values {
                match v {
                    Value::Int(x) => {
                        h.update([0u8]);
                        h.update(x.to_le_bytes());
                    }
                    Value::Float(x) => {
                        h.update([1u8]);
                        h.update(x.to_bits().to_le_bytes());
                    }
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Element-wise comparison: integers exactly, floats with a relative
    /// tolerance. Returns the first mismatch.
    pub fn compare(&self, other: &MemoryImage, rel_tol: f32) -> Result<(), String> {
        if self.names != other.names {
            return Err("space lists differ".into());
        }
        for (name, (a, b)) in self.names.iter().zip(self.data.iter().zip(&other.data)) {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                if !values_close(*x, *y, rel_tol) {
                    return Err(format!("`{name}`[{i}]: {x} vs {y}"));
                }
            }
        }
        Ok(())
    }
}

pub fn values_close(a: Value, b: Value, rel_tol: f32) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Float(x), Value::Float(y)) => {
            if x.to_bits() == y.to_bits() || x == y {
                return true;
            }
            let scale = x.abs().max(y.abs()).max(f32::MIN_POSITIVE);
            (x - y).abs() <= rel_tol * scale
        }
        _ => false,
    }
}

/// Operand after name resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LOp {
    Slot(usize),
    Imm(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LKind {
    Bin(BinOp, LOp, LOp),
    Cmp(CmpKind, LOp, LOp),
    Select(LOp, LOp, LOp),
    Mov(LOp),
    Load { space: usize, addr: LOp },
    Store { space: usize, addr: LOp, value: LOp },
    Push { chan: usize, value: LOp },
    Pop { chan: usize },
    Br { cond: LOp, then_to: usize, else_to: usize },
    Jmp(usize),
    Ret(Option<LOp>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LInst {
    pub dst: Option<usize>,
    pub kind: LKind,
}

impl LInst {
    /// Operands the instruction consumes.
    pub fn reads(&self) -> impl Iterator<Item = usize> + '_ {
        let ops: [Option<&LOp>; 3] = match &self.kind {
            LKind::Bin(_, a, b) | LKind::Cmp(_, a, b) => [Some(a), Some(b), None],
            LKind::Select(a, b, c) => [Some(a), Some(b), Some(c)],
            LKind::Mov(a) => [Some(a), None, None],
            LKind::Load { addr, .. } => [Some(addr), None, None],
            LKind::Store { addr, value, .. } => [Some(addr), Some(value), None],
            LKind::Push { value, .. } => [Some(value), None, None],
            LKind::Br { cond, .. } => [Some(cond), None, None],
            LKind::Ret(v) => [v.as_ref(), None, None],
            LKind::Pop { .. } | LKind::Jmp(_) => [None, None, None],
        };
        ops.into_iter().flatten().filter_map(|op| match op {
            LOp::Slot(s) => Some(*s),
            LOp::Imm(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LPhi {
    pub dst: usize,
    /// (predecessor block, value)
    pub incoming: Vec<(usize, LOp)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LBlock {
    pub phis: Vec<LPhi>,
    pub insts: Vec<LInst>,
}

/// A program with names resolved to dense indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Lowered {
    pub slot_names: Vec<String>,
    pub arg_slots: Vec<usize>,
    pub blocks: Vec<LBlock>,
    pub space_names: Vec<String>,
    pub space_extents: Vec<u32>,
    pub chan_names: Vec<String>,
}

impl Lowered {
    pub fn new(p: &Program) -> Self {
        let mut slots = SlotMap::default();
        let arg_slots = p.args.iter().map(|a| slots.slot(a)).collect();
        for b in &p.blocks {
            for inst in &b.insts {
                if let Some(r) = &inst.result {
                    slots.slot(r);
                }
            }
        }
        let block_ix = |label: &str| p.block_index(label).unwrap_or(usize::MAX);
        let space_ix = |name: &str| p.space_index(name).unwrap_or(usize::MAX);
        let chan_ix = |name: &str| {
            p.channels
                .iter()
                .position(|c| c == name)
                .unwrap_or(usize::MAX)
        };
        let mut blocks = Vec::with_capacity(p.blocks.len());
        for b in &p.blocks {
            let mut lb = LBlock {
                phis: Vec::new(),
                insts: Vec::new(),
            };
            for inst in &b.insts {
                let dst = inst.result.as_deref().map(|r| slots.slot(r));
                let kind = match &inst.kind {
                    InstKind::Phi(incoming) => {
                        let incoming = incoming
                            .iter()
                            .map(|(l, v)| (block_ix(l), slots.resolve(v)))
                            .collect();
                        lb.phis.push(LPhi {
                            dst: dst.unwrap(),
                            incoming,
                        });
                        continue;
                    }
                    InstKind::Binary { op, lhs, rhs } => LKind::Bin(
                        *op,
                        slots.resolve(lhs),
                        slots.resolve(rhs),
                    ),
                    InstKind::Icmp { kind, lhs, rhs } => LKind::Cmp(
                        *kind,
                        slots.resolve(lhs),
                        slots.resolve(rhs),
                    ),
                    InstKind::Select {
                        cond,
                        on_true,
                        on_false,
                    } => LKind::Select(
                        slots.resolve(cond),
                        slots.resolve(on_true),
                        slots.resolve(on_false),
                    ),
                    InstKind::Const(v) => LKind::Mov(LOp::Imm(*v)),
                    InstKind::Mov(v) => LKind::Mov(slots.resolve(v)),
                    InstKind::Load { space, addr } => LKind::Load {
                        space: space_ix(space),
                        addr: slots.resolve(addr),
                    },
                    InstKind::Store { space, addr, value } => LKind::Store {
                        space: space_ix(space),
                        addr: slots.resolve(addr),
                        value: slots.resolve(value),
                    },
                    InstKind::Push { chan, value } => LKind::Push {
                        chan: chan_ix(chan),
                        value: slots.resolve(value),
                    },
                    InstKind::Pop { chan } => LKind::Pop {
                        chan: chan_ix(chan),
                    },
                    InstKind::Br {
                        cond,
                        then_to,
                        else_to,
                    } => LKind::Br {
                        cond: slots.resolve(cond),
                        then_to: block_ix(then_to),
                        else_to: block_ix(else_to),
                    },
                    InstKind::Jmp(t) => LKind::Jmp(block_ix(t)),
                    InstKind::Ret(v) => LKind::Ret(v.as_ref().map(|v| slots.resolve(v))),
                };
                lb.insts.push(LInst { dst, kind });
            }
            blocks.push(lb);
        }
        Self {
            slot_names: slots.names,
            arg_slots,
            blocks,
            space_names: p.spaces.iter().map(|s| s.name.clone()).collect(),
            space_extents: p.spaces.iter().map(|s| s.extent).collect(),
            chan_names: p.channels.clone(),
        }
    }
}

#[derive(Default)]
struct SlotMap {
    index: HashMap<String, usize>,
    names: Vec<String>,
}

impl SlotMap {
    fn slot(&mut self, name: &str) -> usize {
        if let Some(&s) = self.index.get(name) {
            return s;
        }
        self.index.insert(name.to_owned(), self.names.len());
        self.names.push(name.to_owned());
        self.names.len() - 1
    }

    /// Operands naming undefined values still get a slot so lowering is
    /// total; reading one traps.
    fn resolve(&mut self, op: &Operand) -> LOp {
        match op {
            Operand::Var(n) => LOp::Slot(self.slot(n)),
            Operand::Lit(v) => LOp::Imm(*v),
        }
    }
}

/// FIFO endpoints seen by a running stage program.
pub trait ChannelIo {
    /// `None` when the channel is empty: the machine does not advance.
    fn pop(&mut self, chan: usize) -> Option<Value>;
    /// `false` when the channel is full: the machine does not advance.
    fn push(&mut self, chan: usize, value: Value) -> bool;
}

/// Channel endpoints for programs without push/pop.
pub struct NoChannels;

impl ChannelIo for NoChannels {
    fn pop(&mut self, _chan: usize) -> Option<Value> {
        None
    }

    fn push(&mut self, _chan: usize, _value: Value) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Continue,
    Accessed(Access),
    Jumped { from: usize, to: usize },
    /// A push or pop could not proceed; nothing changed.
    Blocked,
    Returned(Option<Value>),
}

/// Executes one instruction at a time.
#[derive(Debug, Clone)]
pub struct Machine<'a> {
    prog: &'a Lowered,
    env: Vec<Option<Value>>,
    block: usize,
    pc: usize,
    steps: u64,
    result: Option<Option<Value>>,
}

impl<'a> Machine<'a> {
    pub fn new(prog: &'a Lowered, args: &[Value], mem: &MemoryImage) -> Result<Self, Trap> {
        if args.len() != prog.arg_slots.len() {
            return Err(Trap::ArgCount {
                expected: prog.arg_slots.len(),
                got: args.len(),
            });
        }
        if mem.names != prog.space_names {
            return Err(Trap::MemoryLayout(format!(
                "image has {:?}, program declares {:?}",
                mem.names, prog.space_names
            )));
        }
        for (name, (data, extent)) in prog
            .space_names
            .iter()
            .zip(mem.data.iter().zip(&prog.space_extents))
        {
            if data.len() != *extent as usize {
                return Err(Trap::MemoryLayout(format!(
                    "`{name}` holds {} elements, extent is {extent}",
                    data.len()
                )));
            }
        }
        let mut env = vec![None; prog.slot_names.len()];
        for (&slot, &v) in prog.arg_slots.iter().zip(args) {
            env[slot] = Some(v);
        }
        Ok(Self {
            prog,
            env,
            block: 0,
            pc: 0,
            steps: 0,
            result: None,
        })
    }

    pub fn program(&self) -> &'a Lowered {
        self.prog
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn finished(&self) -> Option<Option<Value>> {
        self.result
    }

    /// The instruction the next [`Machine::step`] executes.
    pub fn next_inst(&self) -> Option<&'a LInst> {
        if self.result.is_some() {
            return None;
        }
        self.prog.blocks[self.block].insts.get(self.pc)
    }

    pub fn slot(&self, slot: usize) -> Option<Value> {
        self.env[slot]
    }

    fn read(&self, op: LOp) -> Result<Value, Trap> {
        match op {
            LOp::Imm(v) => Ok(v),
            LOp::Slot(s) => self.env[s].ok_or_else(|| Trap::Undefined(self.prog.slot_names[s].clone())),
        }
    }

    /// Address operand checked against the space extent.
    pub fn address(&self, space: usize, addr: LOp) -> Result<u32, Trap> {
        let v = self.read(addr)?;
        let a = v.as_int().ok_or_else(|| Trap::TypeMismatch {
            op: "address",
            detail: format!("address {v} is not an integer"),
        })?;
        let extent = self.prog.space_extents[space];
        if a < 0 || a as u32 >= extent {
            return Err(Trap::OutOfBounds {
                space: self.prog.space_names[space].clone(),
                addr: a as i64,
                extent,
            });
        }
        Ok(a as u32)
    }

    fn enter(&mut self, from: usize, to: usize) -> Result<(), Trap> {
        let phis = &self.prog.blocks[to].phis;
        if !phis.is_empty() {
            let mut vals = Vec::with_capacity(phis.len());
            for phi in phis {
                let op = phi
                    .incoming
                    .iter()
                    .find(|(b, _)| *b == from)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| {
                        Trap::Undefined(format!("{} (no incoming edge)", self.prog.slot_names[phi.dst]))
                    })?;
                vals.push(self.read(op)?);
            }
            for (phi, v) in phis.iter().zip(vals) {
                self.env[phi.dst] = Some(v);
            }
        }
        self.block = to;
        self.pc = 0;
        Ok(())
    }

    pub fn step(&mut self, mem: &mut MemoryImage, io: &mut dyn ChannelIo) -> Result<Outcome, Trap> {
        let Some(inst) = self.next_inst() else {
            return Ok(Outcome::Returned(self.result.flatten()));
        };
        let mut outcome = Outcome::Continue;
        let value = match &inst.kind {
            LKind::Bin(op, a, b) => Some(binary(*op, self.read(*a)?, self.read(*b)?)?),
            LKind::Cmp(kind, a, b) => {
                let (x, y) = (self.read(*a)?, self.read(*b)?);
                match (x, y) {
                    (Value::Int(x), Value::Int(y)) => Some(Value::Int(kind.eval(x, y) as i32)),
                    _ => {
                        return Err(Trap::TypeMismatch {
                            op: "icmp",
                            detail: format!("{x}, {y}"),
                        })
                    }
                }
            }
            LKind::Select(c, t, f) => {
                let c = truthy(self.read(*c)?, "select")?;
                Some(if c { self.read(*t)? } else { self.read(*f)? })
            }
            LKind::Mov(v) => Some(self.read(*v)?),
            LKind::Load { space, addr } => {
                let a = self.address(*space, *addr)?;
                outcome = Outcome::Accessed(Access {
                    space: *space,
                    addr: a,
                    kind: AccessKind::Read,
                });
                Some(mem.data[*space][a as usize])
            }
            LKind::Store { space, addr, value } => {
                let a = self.address(*space, *addr)?;
                let v = self.read(*value)?;
                mem.data[*space][a as usize] = v;
                outcome = Outcome::Accessed(Access {
                    space: *space,
                    addr: a,
                    kind: AccessKind::Write,
                });
                None
            }
            LKind::Push { chan, value } => {
                let v = self.read(*value)?;
                if !io.push(*chan, v) {
                    return Ok(Outcome::Blocked);
                }
                None
            }
            LKind::Pop { chan } => match io.pop(*chan) {
                Some(v) => Some(v),
                None => return Ok(Outcome::Blocked),
            },
            LKind::Br {
                cond,
                then_to,
                else_to,
            } => {
                let to = if truthy(self.read(*cond)?, "br")? {
                    *then_to
                } else {
                    *else_to
                };
                let from = self.block;
                self.steps += 1;
                self.enter(from, to)?;
                return Ok(Outcome::Jumped { from, to });
            }
            LKind::Jmp(to) => {
                let from = self.block;
                self.steps += 1;
                self.enter(from, *to)?;
                return Ok(Outcome::Jumped { from, to: *to });
            }
            LKind::Ret(v) => {
                let v = match v {
                    Some(op) => Some(self.read(*op)?),
                    None => None,
                };
                self.steps += 1;
                self.result = Some(v);
                return Ok(Outcome::Returned(v));
            }
        };
        if let (Some(dst), Some(v)) = (inst.dst, value) {
            self.env[dst] = Some(v);
        }
        self.pc += 1;
        self.steps += 1;
        Ok(outcome)
    }
}

fn truthy(v: Value, op: &'static str) -> Result<bool, Trap> {
    v.as_int().map(|x| x != 0).ok_or_else(|| Trap::TypeMismatch {
        op,
        detail: format!("condition {v} is not an integer"),
    })
}

fn binary(op: BinOp, a: Value, b: Value) -> Result<Value, Trap> {
    let name = op.opcode().name();
    match op {
        BinOp::Fadd | BinOp::Fmul | BinOp::Fdiv => {
            let (Value::Float(x), Value::Float(y)) = (a, b) else {
                return Err(Trap::TypeMismatch {
                    op: name,
                    detail: format!("{a}, {b} are not both floats"),
                });
            };
            Ok(Value::Float(match op {
                BinOp::Fadd => x + y,
                BinOp::Fmul => x * y,
                _ => {
                    if y == 0.0 {
                        return Err(Trap::DivisionByZero);
                    }
                    x / y
                }
            }))
        }
        _ => {
            let (Value::Int(x), Value::Int(y)) = (a, b) else {
                return Err(Trap::TypeMismatch {
                    op: name,
                    detail: format!("{a}, {b} are not both integers"),
                });
            };
            Ok(Value::Int(match op {
                BinOp::Iadd => x.wrapping_add(y),
                BinOp::Isub => x.wrapping_sub(y),
                BinOp::Imul => x.wrapping_mul(y),
                BinOp::Iand => x & y,
                BinOp::Ior => x | y,
                BinOp::Ixor => x ^ y,
                BinOp::Shl => x.wrapping_shl(y as u32 & 31),
                BinOp::Shr => x.wrapping_shr(y as u32 & 31),
                _ => unreachable!(),
            }))
        }
    }
}

/// Runs `p` sequentially. Traps on out-of-bounds accesses, division by
/// zero and fuel exhaustion.
pub fn interpret(
    p: &Program,
    mem: MemoryImage,
    args: &[Value],
    fuel: u64,
) -> Result<(MemoryImage, Option<Value>, AccessTrace), Trap> {
    let lowered = Lowered::new(p);
    let mut mem = mem;
    let mut machine = Machine::new(&lowered, args, &mem)?;
    let mut trace = Vec::new();
    loop {
        if machine.steps() >= fuel {
            return Err(Trap::FuelExhausted(machine.steps()));
        }
        match machine.step(&mut mem, &mut NoChannels)? {
            Outcome::Accessed(a) => trace.push(a),
            Outcome::Returned(v) => return Ok((mem, v, trace)),
            Outcome::Blocked => {
                return Err(Trap::TypeMismatch {
                    op: "push/pop",
                    detail: "channel operation outside a pipeline".into(),
                })
            }
            Outcome::Continue | Outcome::Jumped { .. } => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_ir;

    fn run(text: &str, args: &[Value]) -> Result<(MemoryImage, Option<Value>, AccessTrace), Trap> {
        let p = parse_ir(text).unwrap();
        let mem = MemoryImage::zeroed(&p.spaces);
        interpret(&p, mem, args, 10_000)
    }

    #[test]
    fn store_then_load() {
        let (_, ret, trace) = run(
            "func f() {\n space A elem=4 extent=4\nblock entry:\n store A[0], 7\n %v = load A[0]\n ret %v\n}",
            &[],
        )
        .unwrap();
        assert_eq!(ret, Some(Value::Int(7)));
        assert_eq!(
            trace,
            vec![
                Access {
                    space: 0,
                    addr: 0,
                    kind: AccessKind::Write
                },
                Access {
                    space: 0,
                    addr: 0,
                    kind: AccessKind::Read
                },
            ]
        );
    }

    #[test]
    fn infinite_loop_exhausts_fuel() {
        let p = parse_ir("func f() {\nblock entry:\n jmp entry\n}").unwrap();
        let err = interpret(&p, MemoryImage::zeroed(&[]), &[], 10).unwrap_err();
        assert_eq!(err, Trap::FuelExhausted(10));
    }

    #[test]
    fn out_of_bounds_traps_with_address() {
        let err = run(
            "func f() {\n space A elem=4 extent=4\nblock entry:\n %v = load A[4]\n ret %v\n}",
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, Trap::OutOfBounds { addr: 4, .. }));
    }

    #[test]
    fn float_division_by_zero_traps() {
        let err = run(
            "func f() {\nblock entry:\n %v = fdiv 1.0, 0.0\n ret %v\n}",
            &[],
        )
        .unwrap_err();
        assert_eq!(err, Trap::DivisionByZero);
    }

    #[test]
    fn integer_arithmetic_wraps() {
        let (_, ret, _) = run(
            "func f(%x) {\nblock entry:\n %a = iadd %x, 1\n ret %a\n}",
            &[Value::Int(i32::MAX)],
        )
        .unwrap();
        assert_eq!(ret, Some(Value::Int(i32::MIN)));
    }

    #[test]
    fn loop_sums_with_parallel_phis() {
        // Swap through phis exercises parallel assignment on block entry.
        let text = "func f(%n) {\n\
            block entry:\n jmp loop\n\
            block loop:\n %i = phi [entry: 0, loop: %i1]\n %a = phi [entry: 1, loop: %b]\n %b = phi [entry: 2, loop: %a]\n\
             %i1 = iadd %i, 1\n %c = icmp slt %i1, %n\n br %c, loop, exit\n\
            block exit:\n ret %a\n}";
        let (_, ret, _) = run(text, &[Value::Int(3)]).unwrap();
        // i=0: a=1,b=2 ; i=1: a=2,b=1 ; i=2: a=1,b=2
        assert_eq!(ret, Some(Value::Int(1)));
    }
}
