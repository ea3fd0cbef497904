use std::fmt::Write;

use super::{InstKind, Instruction, Program};

/// Canonical textual form. `parse_ir(print_ir(p)) == p` for every valid
/// program.
pub fn print_ir(p: &Program) -> String {
    let mut out = String::new();
    let args: Vec<String> = p.args.iter().map(|a| format!("%{a}")).collect();
    let _ = writeln!(out, "func {}({}) {{", p.name, args.join(", "));
    for s in &p.spaces {
        let _ = write!(
            out,
            "  space {} elem={} extent={}",
            s.name, s.element_width, s.extent
        );
        for a in &s.annotations {
            let _ = write!(out, " {}", a.name());
        }
        out.push('\n');
    }
    for c in &p.channels {
        let _ = writeln!(out, "  chan {c}");
    }
    for b in &p.blocks {
        let _ = writeln!(out, "block {}:", b.label);
        for inst in &b.insts {
            let _ = writeln!(out, "  {}", print_instruction(inst));
        }
    }
    out.push_str("}\n");
    out
}

pub(crate) fn print_instruction(inst: &Instruction) -> String {
    let mut s = String::new();
    if let Some(r) = &inst.result {
        let _ = write!(s, "%{r} = ");
    }
    let name = inst.opcode().name();
    match &inst.kind {
        InstKind::Binary { lhs, rhs, .. } => {
            let _ = write!(s, "{name} {lhs}, {rhs}");
        }
        InstKind::Icmp { kind, lhs, rhs } => {
            let _ = write!(s, "icmp {} {lhs}, {rhs}", kind.name());
        }
        InstKind::Select {
            cond,
            on_true,
            on_false,
        } => {
            let _ = write!(s, "select {cond}, {on_true}, {on_false}");
        }
        InstKind::Const(v) => {
            let _ = write!(s, "const {v}");
        }
        InstKind::Mov(v) => {
            let _ = write!(s, "mov {v}");
        }
        InstKind::Phi(incoming) => {
            let parts: Vec<String> = incoming.iter().map(|(l, v)| format!("{l}: {v}")).collect();
            let _ = write!(s, "phi [{}]", parts.join(", "));
        }
        InstKind::Load { space, addr } => {
            let _ = write!(s, "load {space}[{addr}]");
        }
        InstKind::Store { space, addr, value } => {
            let _ = write!(s, "store {space}[{addr}], {value}");
        }
        InstKind::Push { chan, value } => {
            let _ = write!(s, "push {chan}, {value}");
        }
        InstKind::Pop { chan } => {
            let _ = write!(s, "pop {chan}");
        }
        InstKind::Br {
            cond,
            then_to,
            else_to,
        } => {
            let _ = write!(s, "br {cond}, {then_to}, {else_to}");
        }
        InstKind::Jmp(t) => {
            let _ = write!(s, "jmp {t}");
        }
        InstKind::Ret(None) => s.push_str("ret"),
        InstKind::Ret(Some(v)) => {
            let _ = write!(s, "ret {v}");
        }
    }
    s
}
