use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::{
    validate::{validate_with, Mode},
    Annotation, BinOp, Block, CmpKind, InstKind, Instruction, MemSpace, Opcode, Operand, Program,
    Value,
};

/// A parse or validation problem tied to a source line (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parses and validates a user kernel. Channel declarations and push/pop
/// are rejected: they only appear in partitioner output.
pub fn parse_ir(text: &str) -> Result<Program, Vec<Diagnostic>> {
    parse_mode(text, Mode::Kernel)
}

/// Parses and validates a stage program emitted by the partitioner.
pub fn parse_stage_ir(text: &str) -> Result<Program, Vec<Diagnostic>> {
    parse_mode(text, Mode::Stage)
}

fn parse_mode(text: &str, mode: Mode) -> Result<Program, Vec<Diagnostic>> {
    let (program, lines) = Parser::new(text, mode).run()?;
    let violations = validate_with(&program, mode);
    if violations.is_empty() {
        return Ok(program);
    }
    Err(violations
        .into_iter()
        .map(|v| {
            let line = v
                .location
                .and_then(|(b, i)| lines.get(&(b, i)).copied())
                .unwrap_or(lines.get(&(usize::MAX, 0)).copied().unwrap_or(1));
            Diagnostic {
                line,
                message: v.to_string(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Num(Value),
    Punct(char),
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn tokenize(line: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == ';' {
            break;
        } else if "=,[]:(){}".contains(c) {
            toks.push(Tok::Punct(c));
            i += 1;
        } else if c == '%' {
            let start = i + 1;
            i = start;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            if i == start {
                return Err("expected a value name after `%`".into());
            }
            toks.push(Tok::Var(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() || c == '-' || c == '+' {
            let start = i;
            i += 1;
            while i < chars.len()
                && (is_ident_char(chars[i])
                    || ((chars[i] == '-' || chars[i] == '+')
                        && matches!(chars[i - 1], 'e' | 'E')))
            {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            toks.push(Tok::Num(parse_number(&text)?));
        } else if is_ident_char(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            match word.as_str() {
                "inf" | "NaN" => toks.push(Tok::Num(parse_number(&word)?)),
                _ => toks.push(Tok::Ident(word)),
            }
        } else {
            return Err(format!("unexpected character `{c}`"));
        }
    }
    Ok(toks)
}

fn parse_number(text: &str) -> Result<Value, String> {
    let is_float = text.contains(['.', 'e', 'E']) || text.ends_with("inf") || text == "NaN";
    if is_float {
        text.parse::<f32>()
            .map(Value::Float)
            .map_err(|_| format!("malformed float literal `{text}`"))
    } else {
        text.parse::<i32>()
            .map(Value::Int)
            .map_err(|_| format!("malformed integer literal `{text}`"))
    }
}

struct Cursor<'a> {
    toks: &'a [Tok],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos)
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_punct(&mut self, c: char) -> Result<(), String> {
        match self.next() {
            Some(Tok::Punct(p)) if *p == c => Ok(()),
            Some(other) => Err(format!("expected `{c}`, found {}", describe(other))),
            None => Err(format!("expected `{c}` at end of line")),
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(p)) if *p == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, String> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s.clone()),
            Some(other) => Err(format!("expected {what}, found {}", describe(other))),
            None => Err(format!("expected {what} at end of line")),
        }
    }

    fn var(&mut self) -> Result<String, String> {
        match self.next() {
            Some(Tok::Var(s)) => Ok(s.clone()),
            Some(other) => Err(format!("expected a `%` value, found {}", describe(other))),
            None => Err("expected a `%` value at end of line".into()),
        }
    }

    fn operand(&mut self) -> Result<Operand, String> {
        match self.next() {
            Some(Tok::Var(s)) => Ok(Operand::Var(s.clone())),
            Some(Tok::Num(v)) => Ok(Operand::Lit(*v)),
            Some(other) => Err(format!("expected an operand, found {}", describe(other))),
            None => Err("expected an operand at end of line".into()),
        }
    }

    fn end(&self) -> Result<(), String> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(format!("unexpected trailing {}", describe(t))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Var(s) => format!("`%{s}`"),
        Tok::Num(v) => format!("`{v}`"),
        Tok::Punct(c) => format!("`{c}`"),
    }
}

struct Parser<'a> {
    text: &'a str,
    mode: Mode,
    diags: Vec<Diagnostic>,
    /// (block index, instruction index) -> source line; (usize::MAX, 0) is
    /// the header line.
    lines: HashMap<(usize, usize), usize>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, mode: Mode) -> Self {
        Self {
            text,
            mode,
            diags: Vec::new(),
            lines: HashMap::new(),
        }
    }

    fn err(&mut self, line: usize, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            line,
            message: message.into(),
        });
    }

    fn run(mut self) -> Result<(Program, HashMap<(usize, usize), usize>), Vec<Diagnostic>> {
        let mut program = Program {
            name: String::new(),
            args: Vec::new(),
            spaces: Vec::new(),
            channels: Vec::new(),
            blocks: Vec::new(),
        };
        let mut seen_header = false;
        let mut closed = false;
        let mut last_line = 0;

        for (idx, raw) in self.text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let toks = match tokenize(raw) {
                Ok(t) => t,
                Err(e) => {
                    self.err(line, format!("syntax error: {e}"));
                    continue;
                }
            };
            if toks.is_empty() {
                continue;
            }
            if closed {
                self.err(line, "syntax error: text after closing `}`");
                continue;
            }
            let mut cur = Cursor {
                toks: &toks,
                pos: 0,
            };
            let result = match cur.peek() {
                Some(Tok::Ident(w)) if w == "func" => {
                    if seen_header {
                        Err("duplicate `func` header".to_string())
                    } else {
                        seen_header = true;
                        self.lines.insert((usize::MAX, 0), line);
                        parse_header(&mut cur, &mut program)
                    }
                }
                _ if !seen_header => Err("expected `func NAME(...) {` header".to_string()),
                Some(Tok::Punct('}')) => {
                    closed = true;
                    cur.next();
                    cur.end()
                }
                Some(Tok::Ident(w)) if w == "space" => {
                    cur.next();
                    parse_space(&mut cur).map(|s| program.spaces.push(s))
                }
                Some(Tok::Ident(w)) if w == "chan" => {
                    cur.next();
                    if self.mode == Mode::Kernel {
                        Err("channel declarations only appear in stage programs".to_string())
                    } else {
                        cur.ident("a channel name").and_then(|name| {
                            cur.end()?;
                            program.channels.push(name);
                            Ok(())
                        })
                    }
                }
                Some(Tok::Ident(w)) if w == "block" => {
                    cur.next();
                    cur.ident("a block label").and_then(|label| {
                        cur.expect_punct(':')?;
                        cur.end()?;
                        program.blocks.push(Block {
                            label,
                            insts: Vec::new(),
                        });
                        Ok(())
                    })
                }
                _ => {
                    if program.blocks.is_empty() {
                        Err("instruction outside of any block".to_string())
                    } else {
                        parse_instruction(&mut cur).and_then(|inst| {
                            if self.mode == Mode::Kernel
                                && matches!(inst.opcode(), Opcode::Push | Opcode::Pop | Opcode::Mov)
                            {
                                return Err(format!(
                                    "`{}` only appears in partitioner-emitted stage programs",
                                    inst.opcode().name()
                                ));
                            }
                            let b = program.blocks.len() - 1;
                            let block = program.blocks.last_mut().unwrap();
                            self.lines.insert((b, block.insts.len()), line);
                            block.insts.push(inst);
                            Ok(())
                        })
                    }
                }
            };
            if let Err(e) = result {
                let msg = if e.starts_with("unknown opcode") || e.contains("only appear") {
                    e
                } else {
                    format!("syntax error: {e}")
                };
                self.err(line, msg);
            }
        }
        if !seen_header {
            self.err(last_line.max(1), "syntax error: missing `func` header");
        } else if !closed {
            self.err(last_line.max(1), "syntax error: missing closing `}`");
        }
        if program.blocks.is_empty() && self.diags.is_empty() {
            self.err(last_line.max(1), "program has no blocks");
        }
        if self.diags.is_empty() {
            Ok((program, self.lines))
        } else {
            Err(self.diags)
        }
    }
}

fn parse_header(cur: &mut Cursor<'_>, program: &mut Program) -> Result<(), String> {
    cur.next();
    program.name = cur.ident("a function name")?;
    cur.expect_punct('(')?;
    if !cur.eat_punct(')') {
        loop {
            program.args.push(cur.var()?);
            if cur.eat_punct(')') {
                break;
            }
            cur.expect_punct(',')?;
        }
    }
    cur.expect_punct('{')?;
    cur.end()
}

fn parse_space(cur: &mut Cursor<'_>) -> Result<MemSpace, String> {
    let name = cur.ident("a space name")?;
    let mut elem = None;
    let mut extent = None;
    let mut annotations = BTreeSet::new();
    while let Some(tok) = cur.next() {
        let Tok::Ident(word) = tok else {
            return Err(format!("unexpected {} in space declaration", describe(tok)));
        };
        if word == "elem" || word == "extent" {
            cur.expect_punct('=')?;
            let v = match cur.next() {
                Some(Tok::Num(Value::Int(v))) if *v > 0 => *v as u32,
                _ => return Err(format!("`{word}` needs a positive integer")),
            };
            if word == "elem" {
                elem = Some(v);
            } else {
                extent = Some(v);
            }
        } else if let Some(a) = Annotation::from_name(word) {
            annotations.insert(a);
        } else {
            return Err(format!("unknown space attribute `{word}`"));
        }
    }
    if annotations.contains(&Annotation::Stream) && annotations.contains(&Annotation::Random) {
        return Err("a space is either `stream` or `random`, not both".into());
    }
    Ok(MemSpace {
        name,
        element_width: elem.ok_or("space is missing `elem=`")?,
        extent: extent.ok_or("space is missing `extent=`")?,
        annotations,
    })
}

fn parse_instruction(cur: &mut Cursor<'_>) -> Result<Instruction, String> {
    let result = if let Some(Tok::Var(name)) = cur.peek() {
        cur.next();
        cur.expect_punct('=')?;
        Some(name.clone())
    } else {
        None
    };
    let word = cur.ident("an opcode")?;
    let op = Opcode::from_name(&word).ok_or_else(|| format!("unknown opcode `{word}`"))?;
    let kind = match op {
        _ if BinOp::from_opcode(op).is_some() => {
            let lhs = cur.operand()?;
            cur.expect_punct(',')?;
            let rhs = cur.operand()?;
            InstKind::Binary {
                op: BinOp::from_opcode(op).unwrap(),
                lhs,
                rhs,
            }
        }
        Opcode::Icmp => {
            let k = cur.ident("a comparison kind")?;
            let kind = CmpKind::from_name(&k).ok_or_else(|| format!("unknown comparison `{k}`"))?;
            let lhs = cur.operand()?;
            cur.expect_punct(',')?;
            let rhs = cur.operand()?;
            InstKind::Icmp { kind, lhs, rhs }
        }
        Opcode::Select => {
            let cond = cur.operand()?;
            cur.expect_punct(',')?;
            let on_true = cur.operand()?;
            cur.expect_punct(',')?;
            let on_false = cur.operand()?;
            InstKind::Select {
                cond,
                on_true,
                on_false,
            }
        }
        Opcode::Const => match cur.next() {
            Some(Tok::Num(v)) => InstKind::Const(*v),
            _ => return Err("`const` needs a literal".into()),
        },
        Opcode::Mov => InstKind::Mov(cur.operand()?),
        Opcode::Phi => {
            cur.expect_punct('[')?;
            let mut incoming = Vec::new();
            if !cur.eat_punct(']') {
                loop {
                    let label = cur.ident("a block label")?;
                    cur.expect_punct(':')?;
                    incoming.push((label, cur.operand()?));
                    if cur.eat_punct(']') {
                        break;
                    }
                    cur.expect_punct(',')?;
                }
            }
            InstKind::Phi(incoming)
        }
        Opcode::Load => {
            let space = cur.ident("a space name")?;
            cur.expect_punct('[')?;
            let addr = cur.operand()?;
            cur.expect_punct(']')?;
            InstKind::Load { space, addr }
        }
        Opcode::Store => {
            let space = cur.ident("a space name")?;
            cur.expect_punct('[')?;
            let addr = cur.operand()?;
            cur.expect_punct(']')?;
            cur.expect_punct(',')?;
            let value = cur.operand()?;
            InstKind::Store { space, addr, value }
        }
        Opcode::Push => {
            let chan = cur.ident("a channel name")?;
            cur.expect_punct(',')?;
            InstKind::Push {
                chan,
                value: cur.operand()?,
            }
        }
        Opcode::Pop => InstKind::Pop {
            chan: cur.ident("a channel name")?,
        },
        Opcode::Br => {
            let cond = cur.operand()?;
            cur.expect_punct(',')?;
            let then_to = cur.ident("a block label")?;
            cur.expect_punct(',')?;
            let else_to = cur.ident("a block label")?;
            InstKind::Br {
                cond,
                then_to,
                else_to,
            }
        }
        Opcode::Jmp => InstKind::Jmp(cur.ident("a block label")?),
        Opcode::Ret => {
            if cur.done() {
                InstKind::Ret(None)
            } else {
                InstKind::Ret(Some(cur.operand()?))
            }
        }
        _ => unreachable!("all opcodes handled"),
    };
    cur.end()?;
    let produces = !matches!(
        op,
        Opcode::Store | Opcode::Push | Opcode::Br | Opcode::Jmp | Opcode::Ret
    );
    match (&result, produces) {
        (None, true) => Err(format!("`{}` must name its result", op.name())),
        (Some(_), false) => Err(format!("`{}` produces no result", op.name())),
        _ => Ok(Instruction { result, kind }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "func f(%x) {\nblock entry:\n  %a = iadd %x, 1\n  ret %a\n}\n";

    #[test]
    fn minimal_kernel() {
        let p = parse_ir(MINIMAL).unwrap();
        assert_eq!(p.blocks.len(), 1);
        assert_eq!(p.blocks[0].insts.len(), 2);
        assert_eq!(p.args, vec!["x".to_string()]);
    }

    #[test]
    fn comments_and_literals() {
        let text = "func g() { ; header\n\
                    space A elem=4 extent=8 readonly stream\n\
                    block entry:\n\
                    %a = const -3 ; a comment\n\
                    %b = const 2.5e-3\n\
                    %c = load A[%a]\n\
                    ret\n\
                    }";
        let p = parse_ir(text).unwrap();
        assert_eq!(
            p.blocks[0].insts[1].kind,
            InstKind::Const(Value::Float(2.5e-3))
        );
        assert!(p.spaces[0].has(Annotation::Stream));
    }

    #[test]
    fn phi_from_non_predecessor() {
        let text = "func f() {\n\
                    block entry:\n  jmp a\n\
                    block a:\n  %x = phi [entry: 0, b: 1]\n  ret %x\n\
                    block b:\n  jmp a\n\
                    }";
        // `b` is a predecessor but unreachable; make a label that is not a
        // predecessor at all.
        let bad = text.replace("b: 1", "zz: 1");
        let diags = parse_ir(&bad).unwrap_err();
        assert!(diags
            .iter()
            .any(|d| d.message.contains("phi incoming block not a predecessor")));
        assert_eq!(diags[0].line, 5);
    }

    #[test]
    fn unknown_opcode_reports_line() {
        let text = "func f() {\nblock entry:\n  %a = frob 1, 2\n  ret\n}";
        let diags = parse_ir(text).unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].line, 3);
        assert!(diags[0].message.contains("unknown opcode `frob`"));
    }

    #[test]
    fn undeclared_space_and_label() {
        let text = "func f() {\nblock entry:\n  %a = load Q[0]\n  jmp nowhere\n}";
        let diags = parse_ir(text).unwrap_err();
        let msgs: Vec<_> = diags.iter().map(|d| d.message.as_str()).collect();
        assert!(msgs.iter().any(|m| m.contains("undeclared space `Q`")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("undeclared label `nowhere`")), "{msgs:?}");
    }

    #[test]
    fn push_pop_rejected_in_user_input() {
        let text = "func f() {\nchan c0\nblock entry:\n  ret\n}";
        assert!(parse_ir(text).is_err());
        assert!(parse_stage_ir(text).is_ok());
    }

    #[test]
    fn syntax_errors_never_partially_succeed() {
        let text = "func f() {\nblock entry:\n  %a = iadd 1\n  ret\n}";
        let diags = parse_ir(text).unwrap_err();
        assert!(diags[0].message.starts_with("syntax error"));
    }
}
