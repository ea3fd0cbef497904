//! Kernel IR: a flat SSA instruction set with explicit basic blocks and
//! disjoint memory spaces.

mod interp;
mod latency;
mod parse;
mod print;
mod validate;

use std::collections::BTreeSet;
use std::fmt;

pub use interp::{
    interpret, values_close, Access, AccessKind, AccessTrace, ChannelIo, LInst, LKind, LOp, Lowered, Machine,
    MemoryImage, Outcome, Trap,
};
pub use latency::{opcode_latency, LatencyEntry, LatencyError, LatencyTable};
pub use parse::{parse_ir, parse_stage_ir, Diagnostic};
pub use print::print_ir;
pub use validate::{validate, validate_stage, Violation};

/// A scalar runtime value. Integers wrap at 32 bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i32),
    Float(f32),
}

impl Value {
    pub fn as_int(self) -> Option<i32> {
        match self {
            Value::Int(v) => Some(v),
            Value::Float(_) => None,
        }
    }

    pub fn as_float(self) -> Option<f32> {
        match self {
            Value::Float(v) => Some(v),
            Value::Int(_) => None,
        }
    }

    /// Bit-level identity, so that `NaN` payloads and signed zeros compare
    /// the way a memory digest sees them.
    pub fn bits_eq(self, other: Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Default for Value {
    fn default() -> Self {
        Value::Int(0)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            // Debug formatting of floats always carries a '.' or an exponent
            // and round-trips exactly.
            Value::Float(v) => write!(f, "{v:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Var(String),
    Lit(Value),
}

impl Operand {
    pub fn var(&self) -> Option<&str> {
        match self {
            Operand::Var(name) => Some(name),
            Operand::Lit(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(name) => write!(f, "%{name}"),
            Operand::Lit(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpKind {
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
}

impl CmpKind {
    pub const ALL: [CmpKind; 6] = [
        CmpKind::Eq,
        CmpKind::Ne,
        CmpKind::Slt,
        CmpKind::Sle,
        CmpKind::Sgt,
        CmpKind::Sge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CmpKind::Eq => "eq",
            CmpKind::Ne => "ne",
            CmpKind::Slt => "slt",
            CmpKind::Sle => "sle",
            CmpKind::Sgt => "sgt",
            CmpKind::Sge => "sge",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        CmpKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn eval(self, a: i32, b: i32) -> bool {
        match self {
            CmpKind::Eq => a == b,
            CmpKind::Ne => a != b,
            CmpKind::Slt => a < b,
            CmpKind::Sle => a <= b,
            CmpKind::Sgt => a > b,
            CmpKind::Sge => a >= b,
        }
    }
}

/// Opcode identity, independent of operands. This is the key of the
/// latency table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Iadd,
    Isub,
    Imul,
    Iand,
    Ior,
    Ixor,
    Shl,
    Shr,
    Fadd,
    Fmul,
    Fdiv,
    Icmp,
    Select,
    Const,
    Mov,
    Phi,
    Load,
    Store,
    Push,
    Pop,
    Br,
    Jmp,
    Ret,
}

impl Opcode {
    pub const ALL: [Opcode; 23] = [
        Opcode::Iadd,
        Opcode::Isub,
        Opcode::Imul,
        Opcode::Iand,
        Opcode::Ior,
        Opcode::Ixor,
        Opcode::Shl,
        Opcode::Shr,
        Opcode::Fadd,
        Opcode::Fmul,
        Opcode::Fdiv,
        Opcode::Icmp,
        Opcode::Select,
        Opcode::Const,
        Opcode::Mov,
        Opcode::Phi,
        Opcode::Load,
        Opcode::Store,
        Opcode::Push,
        Opcode::Pop,
        Opcode::Br,
        Opcode::Jmp,
        Opcode::Ret,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Opcode::Iadd => "iadd",
            Opcode::Isub => "isub",
            Opcode::Imul => "imul",
            Opcode::Iand => "iand",
            Opcode::Ior => "ior",
            Opcode::Ixor => "ixor",
            Opcode::Shl => "shl",
            Opcode::Shr => "shr",
            Opcode::Fadd => "fadd",
            Opcode::Fmul => "fmul",
            Opcode::Fdiv => "fdiv",
            Opcode::Icmp => "icmp",
            Opcode::Select => "select",
            Opcode::Const => "const",
            Opcode::Mov => "mov",
            Opcode::Phi => "phi",
            Opcode::Load => "load",
            Opcode::Store => "store",
            Opcode::Push => "push",
            Opcode::Pop => "pop",
            Opcode::Br => "br",
            Opcode::Jmp => "jmp",
            Opcode::Ret => "ret",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Opcode::ALL.into_iter().find(|op| op.name() == s)
    }

    pub fn is_control(self) -> bool {
        matches!(self, Opcode::Br | Opcode::Jmp | Opcode::Ret)
    }

    pub fn is_memory(self) -> bool {
        matches!(self, Opcode::Load | Opcode::Store)
    }
}

/// Two-operand arithmetic and logic opcodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Iadd,
    Isub,
    Imul,
    Iand,
    Ior,
    Ixor,
    Shl,
    Shr,
    Fadd,
    Fmul,
    Fdiv,
}

impl BinOp {
    pub fn opcode(self) -> Opcode {
        match self {
            BinOp::Iadd => Opcode::Iadd,
            BinOp::Isub => Opcode::Isub,
            BinOp::Imul => Opcode::Imul,
            BinOp::Iand => Opcode::Iand,
            BinOp::Ior => Opcode::Ior,
            BinOp::Ixor => Opcode::Ixor,
            BinOp::Shl => Opcode::Shl,
            BinOp::Shr => Opcode::Shr,
            BinOp::Fadd => Opcode::Fadd,
            BinOp::Fmul => Opcode::Fmul,
            BinOp::Fdiv => Opcode::Fdiv,
        }
    }

    pub fn from_opcode(op: Opcode) -> Option<Self> {
        Some(match op {
            Opcode::Iadd => BinOp::Iadd,
            Opcode::Isub => BinOp::Isub,
            Opcode::Imul => BinOp::Imul,
            Opcode::Iand => BinOp::Iand,
            Opcode::Ior => BinOp::Ior,
            Opcode::Ixor => BinOp::Ixor,
            Opcode::Shl => BinOp::Shl,
            Opcode::Shr => BinOp::Shr,
            Opcode::Fadd => BinOp::Fadd,
            Opcode::Fmul => BinOp::Fmul,
            Opcode::Fdiv => BinOp::Fdiv,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstKind {
    Binary { op: BinOp, lhs: Operand, rhs: Operand },
    Icmp { kind: CmpKind, lhs: Operand, rhs: Operand },
    Select { cond: Operand, on_true: Operand, on_false: Operand },
    Const(Value),
    /// Plain copy; produced by phi elimination in stage programs.
    Mov(Operand),
    Phi(Vec<(String, Operand)>),
    Load { space: String, addr: Operand },
    Store { space: String, addr: Operand, value: Operand },
    Push { chan: String, value: Operand },
    Pop { chan: String },
    Br { cond: Operand, then_to: String, else_to: String },
    Jmp(String),
    Ret(Option<Operand>),
}

impl InstKind {
    pub fn opcode(&self) -> Opcode {
        match self {
            InstKind::Binary { op, .. } => op.opcode(),
            InstKind::Icmp { .. } => Opcode::Icmp,
            InstKind::Select { .. } => Opcode::Select,
            InstKind::Const(_) => Opcode::Const,
            InstKind::Mov(_) => Opcode::Mov,
            InstKind::Phi(_) => Opcode::Phi,
            InstKind::Load { .. } => Opcode::Load,
            InstKind::Store { .. } => Opcode::Store,
            InstKind::Push { .. } => Opcode::Push,
            InstKind::Pop { .. } => Opcode::Pop,
            InstKind::Br { .. } => Opcode::Br,
            InstKind::Jmp(_) => Opcode::Jmp,
            InstKind::Ret(_) => Opcode::Ret,
        }
    }

    /// Operands read by this instruction, in textual order. Phi operands are
    /// included; callers that care about the incoming edge use
    /// [`InstKind::Phi`] directly.
    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            InstKind::Binary { lhs, rhs, .. } | InstKind::Icmp { lhs, rhs, .. } => vec![lhs, rhs],
            InstKind::Select {
                cond,
                on_true,
                on_false,
            } => vec![cond, on_true, on_false],
            InstKind::Const(_) | InstKind::Pop { .. } | InstKind::Jmp(_) | InstKind::Ret(None) => {
                vec![]
            }
            InstKind::Mov(v) | InstKind::Ret(Some(v)) => vec![v],
            InstKind::Phi(incoming) => incoming.iter().map(|(_, v)| v).collect(),
            InstKind::Load { addr, .. } => vec![addr],
            InstKind::Store { addr, value, .. } => vec![addr, value],
            InstKind::Push { value, .. } => vec![value],
            InstKind::Br { cond, .. } => vec![cond],
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            InstKind::Binary { lhs, rhs, .. } | InstKind::Icmp { lhs, rhs, .. } => vec![lhs, rhs],
            InstKind::Select {
                cond,
                on_true,
                on_false,
            } => vec![cond, on_true, on_false],
            InstKind::Const(_) | InstKind::Pop { .. } | InstKind::Jmp(_) | InstKind::Ret(None) => {
                vec![]
            }
            InstKind::Mov(v) | InstKind::Ret(Some(v)) => vec![v],
            InstKind::Phi(incoming) => incoming.iter_mut().map(|(_, v)| v).collect(),
            InstKind::Load { addr, .. } => vec![addr],
            InstKind::Store { addr, value, .. } => vec![addr, value],
            InstKind::Push { value, .. } => vec![value],
            InstKind::Br { cond, .. } => vec![cond],
        }
    }

    pub fn is_terminator(&self) -> bool {
        self.opcode().is_control()
    }

    pub fn successors(&self) -> Vec<&str> {
        match self {
            InstKind::Br {
                then_to, else_to, ..
            } => vec![then_to.as_str(), else_to.as_str()],
            InstKind::Jmp(target) => vec![target.as_str()],
            _ => vec![],
        }
    }

    pub fn space(&self) -> Option<&str> {
        match self {
            InstKind::Load { space, .. } | InstKind::Store { space, .. } => Some(space),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub result: Option<String>,
    pub kind: InstKind,
}

impl Instruction {
    pub fn new(result: Option<&str>, kind: InstKind) -> Self {
        Self {
            result: result.map(str::to_owned),
            kind,
        }
    }

    pub fn opcode(&self) -> Opcode {
        self.kind.opcode()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub label: String,
    /// Body instructions followed by exactly one terminator.
    pub insts: Vec<Instruction>,
}

impl Block {
    pub fn terminator(&self) -> Option<&Instruction> {
        self.insts.last().filter(|inst| inst.kind.is_terminator())
    }

    pub fn successors(&self) -> Vec<&str> {
        self.terminator()
            .map(|t| t.kind.successors())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Annotation {
    Readonly,
    NoLoopCarried,
    Stream,
    Random,
}

impl Annotation {
    pub fn name(self) -> &'static str {
        match self {
            Annotation::Readonly => "readonly",
            Annotation::NoLoopCarried => "no_loop_carried",
            Annotation::Stream => "stream",
            Annotation::Random => "random",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "readonly" => Some(Annotation::Readonly),
            "no_loop_carried" => Some(Annotation::NoLoopCarried),
            "stream" => Some(Annotation::Stream),
            "random" => Some(Annotation::Random),
            _ => None,
        }
    }
}

/// A declared, disjoint region of memory.
#[derive(Debug, Clone, PartialEq)]
pub struct MemSpace {
    pub name: String,
    /// Bytes per element.
    pub element_width: u32,
    /// Number of elements.
    pub extent: u32,
    pub annotations: BTreeSet<Annotation>,
}

impl MemSpace {
    pub fn new(name: &str, element_width: u32, extent: u32) -> Self {
        Self {
            name: name.to_owned(),
            element_width,
            extent,
            annotations: BTreeSet::new(),
        }
    }

    pub fn with(mut self, annotation: Annotation) -> Self {
        self.annotations.insert(annotation);
        self
    }

    pub fn has(&self, annotation: Annotation) -> bool {
        self.annotations.contains(&annotation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub name: String,
    pub args: Vec<String>,
    pub spaces: Vec<MemSpace>,
    /// FIFO endpoints; only stage programs declare channels.
    pub channels: Vec<String>,
    /// The first block is the entry block.
    pub blocks: Vec<Block>,
}

impl Program {
    pub fn entry(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    pub fn space(&self, name: &str) -> Option<&MemSpace> {
        self.spaces.iter().find(|s| s.name == name)
    }

    pub fn space_index(&self, name: &str) -> Option<usize> {
        self.spaces.iter().position(|s| s.name == name)
    }

    /// Predecessor block indices per block, in block order, deduplicated.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.blocks.len()];
        for (i, block) in self.blocks.iter().enumerate() {
            for succ in block.successors() {
                if let Some(j) = self.block_index(succ) {
                    if !preds[j].contains(&i) {
                        preds[j].push(i);
                    }
                }
            }
        }
        for p in &mut preds {
            p.sort_unstable();
        }
        preds
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.insts.len()).sum()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_ir(self))
    }
}
