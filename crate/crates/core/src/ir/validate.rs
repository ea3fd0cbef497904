use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{Annotation, InstKind, Opcode, Program};
use crate::cfg::Cfg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    /// User input: strict SSA, no channels.
    Kernel,
    /// Partitioner output: channels, `mov` reassignment, no phi.
    Stage,
}

/// One broken rule, located at an instruction when it is about one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// (block index, instruction index)
    pub location: Option<(usize, usize)>,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

pub fn validate(p: &Program) -> Vec<Violation> {
    validate_with(p, Mode::Kernel)
}

pub fn validate_stage(p: &Program) -> Vec<Violation> {
    validate_with(p, Mode::Stage)
}

pub(crate) fn validate_with(p: &Program, mode: Mode) -> Vec<Violation> {
    let mut v = Checker {
        p,
        mode,
        out: Vec::new(),
    };
    v.run();
    v.out
}

struct Checker<'a> {
    p: &'a Program,
    mode: Mode,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn push(&mut self, location: Option<(usize, usize)>, rule: &'static str, detail: String) {
        self.out.push(Violation {
            location,
            rule,
            detail,
        });
    }

    fn at(&self, b: usize, i: usize) -> String {
        format!("block `{}` instruction {}", self.p.blocks[b].label, i)
    }

    fn run(&mut self) {
        let p = self.p;
        if p.blocks.is_empty() {
            self.push(None, "no entry block", "program has no blocks".into());
            return;
        }
        self.check_declarations();
        let structural_ok = self.check_structure();
        if !structural_ok {
            return;
        }
        let cfg = Cfg::from_program(p);
        if !cfg.is_reducible() {
            self.push(
                None,
                "irreducible control flow",
                "loops must have a single entry header".into(),
            );
            return;
        }
        self.check_phis(&cfg);
        match self.mode {
            Mode::Kernel => self.check_ssa(&cfg),
            Mode::Stage => self.check_definite_assignment(&cfg),
        }
    }

    fn check_declarations(&mut self) {
        let p = self.p;
        let mut names = HashSet::new();
        for s in &p.spaces {
            if !names.insert(s.name.as_str()) {
                self.push(None, "duplicate space", format!("space `{}` declared twice", s.name));
            }
            if s.extent == 0 || s.element_width == 0 {
                self.push(
                    None,
                    "empty space",
                    format!("space `{}` needs positive extent and element width", s.name),
                );
            }
        }
        let mut chans = HashSet::new();
        for c in &p.channels {
            if !chans.insert(c.as_str()) {
                self.push(None, "duplicate channel", format!("channel `{c}` declared twice"));
            }
        }
        if self.mode == Mode::Kernel && !p.channels.is_empty() {
            self.push(
                None,
                "channel in kernel",
                "push/pop appear only in stage programs".into(),
            );
        }
        let mut args = HashSet::new();
        for a in &p.args {
            if !args.insert(a.as_str()) {
                self.push(None, "SSA redefinition", format!("argument `%{a}` repeated"));
            }
        }
    }

    fn check_structure(&mut self) -> bool {
        let p = self.p;
        let mut ok = true;
        let mut labels = HashSet::new();
        for (b, block) in p.blocks.iter().enumerate() {
            if !labels.insert(block.label.as_str()) {
                self.push(None, "duplicate label", format!("block `{}` declared twice", block.label));
                ok = false;
            }
            match block.insts.last() {
                Some(t) if t.kind.is_terminator() => {}
                _ => {
                    self.push(
                        block.insts.len().checked_sub(1).map(|i| (b, i)),
                        "missing terminator",
                        format!("block `{}` must end with br, jmp or ret", block.label),
                    );
                    ok = false;
                }
            }
            let mut seen_non_phi = false;
            for (i, inst) in block.insts.iter().enumerate() {
                let op = inst.opcode();
                if op.is_control() && i + 1 != block.insts.len() {
                    self.push(
                        Some((b, i)),
                        "terminator not last",
                        format!("{}: `{}` must end its block", self.at(b, i), op.name()),
                    );
                    ok = false;
                }
                if op == Opcode::Phi {
                    if seen_non_phi {
                        self.push(
                            Some((b, i)),
                            "phi not at block start",
                            format!("{}: phi after a non-phi instruction", self.at(b, i)),
                        );
                    }
                    if self.mode == Mode::Stage {
                        self.push(
                            Some((b, i)),
                            "phi in stage program",
                            format!("{}: stage programs are phi-free", self.at(b, i)),
                        );
                    }
                } else {
                    seen_non_phi = true;
                }
                if self.mode == Mode::Kernel && matches!(op, Opcode::Push | Opcode::Pop | Opcode::Mov) {
                    self.push(
                        Some((b, i)),
                        "channel in kernel",
                        format!("{}: `{}` appears only in stage programs", self.at(b, i), op.name()),
                    );
                }
                for target in inst.kind.successors() {
                    if p.block_index(target).is_none() {
                        self.push(
                            Some((b, i)),
                            "undeclared label",
                            format!("{}: undeclared label `{target}`", self.at(b, i)),
                        );
                        ok = false;
                    }
                }
                if let Some(space) = inst.kind.space() {
                    match p.space(space) {
                        None => self.push(
                            Some((b, i)),
                            "undeclared space",
                            format!("{}: undeclared space `{space}`", self.at(b, i)),
                        ),
                        Some(s) if op == Opcode::Store && s.has(Annotation::Readonly) => self.push(
                            Some((b, i)),
                            "store to readonly space",
                            format!("{}: store to readonly space `{space}`", self.at(b, i)),
                        ),
                        _ => {}
                    }
                }
                if let InstKind::Push { chan, .. } | InstKind::Pop { chan } = &inst.kind {
                    if !p.channels.contains(chan) {
                        self.push(
                            Some((b, i)),
                            "undeclared channel",
                            format!("{}: undeclared channel `{chan}`", self.at(b, i)),
                        );
                    }
                }
            }
        }
        ok
    }

    fn check_phis(&mut self, cfg: &Cfg) {
        let p = self.p;
        for (b, block) in p.blocks.iter().enumerate() {
            for (i, inst) in block.insts.iter().enumerate() {
                let InstKind::Phi(incoming) = &inst.kind else {
                    continue;
                };
                let preds = &cfg.preds[b];
                let mut seen = HashSet::new();
                for (label, _) in incoming {
                    let Some(pi) = p.block_index(label) else {
                        self.push(
                            Some((b, i)),
                            "phi incoming block not a predecessor",
                            format!("{}: phi incoming block not a predecessor: `{label}` is undeclared", self.at(b, i)),
                        );
                        continue;
                    };
                    if !preds.contains(&pi) {
                        self.push(
                            Some((b, i)),
                            "phi incoming block not a predecessor",
                            format!("{}: phi incoming block not a predecessor: `{label}`", self.at(b, i)),
                        );
                    }
                    if !seen.insert(pi) {
                        self.push(
                            Some((b, i)),
                            "phi duplicate incoming",
                            format!("{}: `{label}` listed twice", self.at(b, i)),
                        );
                    }
                }
                for &pred in preds {
                    if !seen.contains(&pred) {
                        self.push(
                            Some((b, i)),
                            "phi missing incoming",
                            format!(
                                "{}: no incoming value for predecessor `{}`",
                                self.at(b, i),
                                p.blocks[pred].label
                            ),
                        );
                    }
                }
            }
        }
    }

    fn check_ssa(&mut self, cfg: &Cfg) {
        let p = self.p;
        // name -> (block, index); arguments live before the entry block.
        let mut defs: HashMap<&str, Option<(usize, usize)>> = HashMap::new();
        for a in &p.args {
            defs.insert(a.as_str(), None);
        }
        for (b, block) in p.blocks.iter().enumerate() {
            for (i, inst) in block.insts.iter().enumerate() {
                if let Some(r) = &inst.result {
                    if defs.insert(r.as_str(), Some((b, i))).is_some() {
                        self.push(
                            Some((b, i)),
                            "SSA redefinition",
                            format!("{}: `%{r}` defined more than once", self.at(b, i)),
                        );
                    }
                }
            }
        }
        let idom = cfg.dominators();
        let reach = cfg.reachable();
        let dominated = |def: Option<(usize, usize)>, b: usize, i: usize| -> bool {
            match def {
                None => true,
                Some((db, di)) => {
                    if db == b {
                        di < i
                    } else {
                        Cfg::dominates(&idom, db, b)
                    }
                }
            }
        };
        for (b, block) in p.blocks.iter().enumerate() {
            if !reach[b] {
                continue;
            }
            for (i, inst) in block.insts.iter().enumerate() {
                if let InstKind::Phi(incoming) = &inst.kind {
                    for (label, v) in incoming {
                        let (Some(name), Some(pb)) = (v.var(), p.block_index(label)) else {
                            continue;
                        };
                        match defs.get(name) {
                            None => self.push(
                                Some((b, i)),
                                "SSA dominance",
                                format!("{}: undefined value `%{name}`", self.at(b, i)),
                            ),
                            Some(&def) => {
                                let end = p.blocks[pb].insts.len();
                                if reach[pb] && !dominated(def, pb, end) {
                                    self.push(
                                        Some((b, i)),
                                        "SSA dominance",
                                        format!(
                                            "{}: `%{name}` does not dominate the end of `{label}`",
                                            self.at(b, i)
                                        ),
                                    );
                                }
                            }
                        }
                    }
                    continue;
                }
                for operand in inst.kind.operands() {
                    let Some(name) = operand.var() else { continue };
                    match defs.get(name) {
                        None => self.push(
                            Some((b, i)),
                            "SSA dominance",
                            format!("{}: undefined value `%{name}`", self.at(b, i)),
                        ),
                        Some(&def) if !dominated(def, b, i) => self.push(
                            Some((b, i)),
                            "SSA dominance",
                            format!("{}: use of `%{name}` before its definition", self.at(b, i)),
                        ),
                        _ => {}
                    }
                }
            }
        }
    }

    /// Stage programs reassign phi-eliminated names with `mov`; every use
    /// must be reached by an assignment on all paths.
    fn check_definite_assignment(&mut self, cfg: &Cfg) {
        let p = self.p;
        let mut def_kinds: HashMap<&str, (usize, bool)> = HashMap::new();
        for a in &p.args {
            def_kinds.insert(a.as_str(), (1, false));
        }
        for (b, block) in p.blocks.iter().enumerate() {
            for (i, inst) in block.insts.iter().enumerate() {
                if let Some(r) = &inst.result {
                    let is_mov = inst.opcode() == Opcode::Mov;
                    let e = def_kinds.entry(r.as_str()).or_insert((0, true));
                    e.0 += 1;
                    e.1 &= is_mov;
                    if e.0 > 1 && !e.1 {
                        self.push(
                            Some((b, i)),
                            "SSA redefinition",
                            format!("{}: `%{r}` redefined by a non-mov instruction", self.at(b, i)),
                        );
                    }
                }
            }
        }
        let names: Vec<&str> = {
            let mut v: Vec<&str> = def_kinds.keys().copied().collect();
            v.sort_unstable();
            v
        };
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let n = p.blocks.len();
        let full = vec![true; names.len()];
        let mut ins: Vec<Vec<bool>> = vec![full.clone(); n];
        let mut entry_in = vec![false; names.len()];
        for a in &p.args {
            entry_in[index[a.as_str()]] = true;
        }
        let order = cfg.reverse_postorder();
        let gen = |b: usize, mut set: Vec<bool>| -> Vec<bool> {
            for inst in &p.blocks[b].insts {
                if let Some(r) = &inst.result {
                    set[index[r.as_str()]] = true;
                }
            }
            set
        };
        let mut changed = true;
        while changed {
            changed = false;
            for &b in &order {
                let new_in = if b == 0 {
                    entry_in.clone()
                } else {
                    let mut acc = full.clone();
                    for &pr in &cfg.preds[b] {
                        let out = gen(pr, ins[pr].clone());
                        for (a, o) in acc.iter_mut().zip(out) {
                            *a &= o;
                        }
                    }
                    acc
                };
                if new_in != ins[b] {
                    ins[b] = new_in;
                    changed = true;
                }
            }
        }
        for &b in &order {
            let mut live = ins[b].clone();
            for (i, inst) in p.blocks[b].insts.iter().enumerate() {
                for operand in inst.kind.operands() {
                    let Some(name) = operand.var() else { continue };
                    match index.get(name) {
                        None => self.push(
                            Some((b, i)),
                            "SSA dominance",
                            format!("{}: undefined value `%{name}`", self.at(b, i)),
                        ),
                        Some(&k) if !live[k] => self.push(
                            Some((b, i)),
                            "SSA dominance",
                            format!("{}: `%{name}` not assigned on every path", self.at(b, i)),
                        ),
                        _ => {}
                    }
                }
                if let Some(r) = &inst.result {
                    live[index[r.as_str()]] = true;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse_ir;
    use super::*;
    use crate::ir::{Block, InstKind, Instruction, MemSpace, Operand, Value};

    fn prog(blocks: Vec<Block>, spaces: Vec<MemSpace>) -> Program {
        Program {
            name: "t".into(),
            args: vec!["n".into()],
            spaces,
            channels: vec![],
            blocks,
        }
    }

    fn var(s: &str) -> Operand {
        Operand::Var(s.into())
    }

    #[test]
    fn store_to_readonly_space() {
        let p = prog(
            vec![Block {
                label: "entry".into(),
                insts: vec![
                    Instruction::new(
                        None,
                        InstKind::Store {
                            space: "A".into(),
                            addr: Operand::Lit(Value::Int(0)),
                            value: var("n"),
                        },
                    ),
                    Instruction::new(None, InstKind::Ret(None)),
                ],
            }],
            vec![MemSpace::new("A", 4, 4).with(Annotation::Readonly)],
        );
        let v = validate(&p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "store to readonly space");
        assert_eq!(v[0].location, Some((0, 0)));
    }

    #[test]
    fn use_before_definition() {
        let p = prog(
            vec![Block {
                label: "entry".into(),
                insts: vec![
                    Instruction::new(
                        Some("a"),
                        InstKind::Binary {
                            op: crate::ir::BinOp::Iadd,
                            lhs: var("b"),
                            rhs: var("n"),
                        },
                    ),
                    Instruction::new(Some("b"), InstKind::Const(Value::Int(1))),
                    Instruction::new(None, InstKind::Ret(Some(var("a")))),
                ],
            }],
            vec![],
        );
        let v = validate(&p);
        assert!(v.iter().any(|x| x.rule == "SSA dominance"), "{v:?}");
    }

    #[test]
    fn use_not_dominated_across_blocks() {
        let text = "func f(%c) {\n\
            block entry:\n  br %c, a, b\n\
            block a:\n  %x = const 1\n  jmp join\n\
            block b:\n  jmp join\n\
            block join:\n  ret %x\n}";
        let diags = parse_ir(text).unwrap_err();
        assert!(diags[0].message.starts_with("SSA dominance"));
        assert_eq!(diags[0].line, 10);
    }

    #[test]
    fn irreducible_rejected() {
        let text = "func f(%c) {\n\
            block entry:\n  br %c, a, b\n\
            block a:\n  jmp b\n\
            block b:\n  jmp a\n}";
        let diags = parse_ir(text).unwrap_err();
        assert!(diags[0].message.contains("irreducible"));
    }

    #[test]
    fn stage_mode_allows_mov_reassignment_on_all_paths() {
        let text = "func f(%c) {\n\
            block entry:\n  br %c, a, b\n\
            block a:\n  %x = mov 1\n  jmp join\n\
            block b:\n  %x = mov 2\n  jmp join\n\
            block join:\n  ret %x\n}";
        assert!(super::super::parse::parse_stage_ir(text).is_ok());
        let partial = text.replace("%x = mov 2", "%y = mov 2");
        let diags = super::super::parse::parse_stage_ir(&partial).unwrap_err();
        assert!(diags[0].message.contains("not assigned on every path"));
    }
}
