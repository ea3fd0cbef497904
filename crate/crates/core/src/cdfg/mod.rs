//! Instruction-level control/data-flow graph with memory-ordering edges.

mod condense;
mod scc;

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::cfg::{Cfg, LoopForest};
use crate::ir::{Annotation, InstKind, Opcode, Program};

pub use condense::{condense_and_sort, CondenseError, CondensedDag};
pub use scc::{find_sccs, tarjan, SccSet, EXACT_CYCLE_LIMIT};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub block: usize,
    /// Index of the instruction within its block.
    pub index: usize,
    /// Position in whole-program textual order.
    pub position: usize,
    pub opcode: Opcode,
    pub result: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Data,
    Control,
    MemOrd,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Data => "data",
            EdgeKind::Control => "control",
            EdgeKind::MemOrd => "memord",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub loop_carried: bool,
}

/// Dependence graph over a program's instructions.
///
/// Nodes are every non-terminator instruction, every conditional branch,
/// and every `ret` that returns a value.
#[derive(Debug, Clone)]
pub struct Cdfg {
    pub program: Program,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Node of the conditional branch terminating each block, if any.
    pub branch_of_block: Vec<Option<NodeId>>,
    /// Blocks each block is control dependent on.
    pub control_deps: Vec<Vec<usize>>,
    pub cfg: Cfg,
    pub loops: LoopForest,
    succ: Vec<Vec<NodeId>>,
}

impl Cdfg {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn successors(&self, n: NodeId) -> &[NodeId] {
        &self.succ[n]
    }

    pub fn instruction(&self, n: NodeId) -> &crate::ir::Instruction {
        let node = &self.nodes[n];
        &self.program.blocks[node.block].insts[node.index]
    }

    /// Node defining a value name, if an instruction defines it.
    pub fn def_of(&self, name: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.result.as_deref() == Some(name))
    }

    pub fn node_label(&self, n: NodeId) -> String {
        let node = &self.nodes[n];
        match &node.result {
            Some(r) => format!("%{r}"),
            None => format!(
                "{}@{}.{}",
                node.opcode.name(),
                self.program.blocks[node.block].label,
                node.index
            ),
        }
    }

    /// One edge per line: `src -> dst [kind, carried]`.
    pub fn dump(&self) -> String {
        let mut out = format!("digraph {} {{\n", self.program.name);
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [{}, {}]",
                self.node_label(e.src),
                self.node_label(e.dst),
                e.kind.name(),
                if e.loop_carried { "carried" } else { "same" }
            );
        }
        out.push_str("}\n");
        out
    }

    /// The same graph with some edges dropped.
    pub fn without_edges(&self, mut drop: impl FnMut(&Edge) -> bool) -> Cdfg {
        let mut g = self.clone();
        g.edges.retain(|e| !drop(e));
        g.rebuild_adjacency();
        g
    }

    fn rebuild_adjacency(&mut self) {
        let mut succ = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            if !succ[e.src].contains(&e.dst) {
                succ[e.src].push(e.dst);
            }
        }
        for s in &mut succ {
            s.sort_unstable();
        }
        self.succ = succ;
    }
}

/// Builds the dependence graph of a valid program.
pub fn build_cdfg(p: &Program) -> Cdfg {
    let cfg = Cfg::from_program(p);
    let loops = cfg.loops();
    let control_deps = cfg.control_dependence();
    let idom = cfg.dominators();
    let back_edges: BTreeSet<(usize, usize)> = cfg.back_edges().into_iter().collect();

    let mut nodes = Vec::new();
    let mut branch_of_block = vec![None; p.blocks.len()];
    let mut position = 0;
    for (b, block) in p.blocks.iter().enumerate() {
        for (i, inst) in block.insts.iter().enumerate() {
            let is_node = match &inst.kind {
                InstKind::Jmp(_) | InstKind::Ret(None) => false,
                InstKind::Br { then_to, else_to, .. } => {
                    // A branch with identical targets decides nothing.
                    then_to != else_to
                }
                _ => true,
            };
            if is_node {
                if inst.opcode() == Opcode::Br {
                    branch_of_block[b] = Some(nodes.len());
                }
                nodes.push(Node {
                    block: b,
                    index: i,
                    position,
                    opcode: inst.opcode(),
                    result: inst.result.clone(),
                });
            }
            position += 1;
        }
    }

    let mut defs = std::collections::HashMap::new();
    for (n, node) in nodes.iter().enumerate() {
        if let Some(r) = &node.result {
            defs.insert(r.clone(), n);
        }
    }

    let mut edges: BTreeSet<Edge> = BTreeSet::new();
    let inst_of = |n: &Node| &p.blocks[n.block].insts[n.index];

    // Data edges.
    for (n, node) in nodes.iter().enumerate() {
        let inst = inst_of(node);
        if let InstKind::Phi(incoming) = &inst.kind {
            for (label, v) in incoming {
                let Some(&d) = v.var().and_then(|name| defs.get(name)) else {
                    continue;
                };
                let pred = p.block_index(label).unwrap_or(usize::MAX);
                edges.insert(Edge {
                    src: d,
                    dst: n,
                    kind: EdgeKind::Data,
                    loop_carried: back_edges.contains(&(pred, node.block)),
                });
            }
        } else {
            for op in inst.kind.operands() {
                if let Some(&d) = op.var().and_then(|name| defs.get(name)) {
                    edges.insert(Edge {
                        src: d,
                        dst: n,
                        kind: EdgeKind::Data,
                        loop_carried: false,
                    });
                }
            }
        }
    }

    // Control edges: from the branch of every controlling block. A phi also
    // depends on whatever selects its incoming edge.
    let control_edge = |br_block: usize, n: usize, edges: &mut BTreeSet<Edge>| {
        if let Some(br) = branch_of_block[br_block] {
            if br == n {
                return;
            }
            let target_block = nodes[n].block;
            edges.insert(Edge {
                src: br,
                dst: n,
                kind: EdgeKind::Control,
                loop_carried: Cfg::dominates(&idom, target_block, br_block),
            });
        }
    };
    for (n, node) in nodes.iter().enumerate() {
        for &a in &control_deps[node.block] {
            control_edge(a, n, &mut edges);
        }
        if let InstKind::Phi(incoming) = &inst_of(node).kind {
            for (label, _) in incoming {
                let Some(pb) = p.block_index(label) else {
                    continue;
                };
                if cfg.succs[pb].len() > 1 {
                    control_edge(pb, n, &mut edges);
                }
                for &a in &control_deps[pb] {
                    control_edge(a, n, &mut edges);
                }
            }
        }
    }

    // Memory-ordering edges.
    let forward = forward_reachability(&cfg, &back_edges);
    let mem_nodes: Vec<NodeId> = (0..nodes.len())
        .filter(|&n| nodes[n].opcode.is_memory())
        .collect();
    for (ai, &a) in mem_nodes.iter().enumerate() {
        for &b in &mem_nodes[ai + 1..] {
            let (na, nb) = (&nodes[a], &nodes[b]);
            let space = inst_of(na).kind.space().unwrap();
            if inst_of(nb).kind.space() != Some(space) {
                continue;
            }
            if na.opcode == Opcode::Load && nb.opcode == Opcode::Load {
                continue;
            }
            let Some(decl) = p.space(space) else { continue };
            if decl.has(Annotation::Readonly) {
                continue;
            }
            let a_before_b = precedes(na, nb, &forward);
            let b_before_a = precedes(nb, na, &forward);
            if a_before_b {
                edges.insert(Edge {
                    src: a,
                    dst: b,
                    kind: EdgeKind::MemOrd,
                    loop_carried: false,
                });
            }
            if b_before_a {
                edges.insert(Edge {
                    src: b,
                    dst: a,
                    kind: EdgeKind::MemOrd,
                    loop_carried: false,
                });
            }
            if !decl.has(Annotation::NoLoopCarried) && loops.share_loop(na.block, nb.block) {
                for (s, d) in [(a, b), (b, a)] {
                    edges.insert(Edge {
                        src: s,
                        dst: d,
                        kind: EdgeKind::MemOrd,
                        loop_carried: true,
                    });
                }
            }
        }
    }

    let mut g = Cdfg {
        program: p.clone(),
        nodes,
        edges: edges.into_iter().collect(),
        branch_of_block,
        control_deps,
        cfg,
        loops,
        succ: Vec::new(),
    };
    g.rebuild_adjacency();
    g
}

/// `reach[a][b]`: block `b` is reachable from `a` without taking a back
/// edge (and `a != b`).
fn forward_reachability(cfg: &Cfg, back_edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<bool>> {
    let n = cfg.len();
    let mut reach = vec![vec![false; n]; n];
    for (a, row) in reach.iter_mut().enumerate() {
        let mut stack: Vec<usize> = cfg.succs[a]
            .iter()
            .copied()
            .filter(|&s| !back_edges.contains(&(a, s)))
            .collect();
        while let Some(x) = stack.pop() {
            if row[x] {
                continue;
            }
            row[x] = true;
            stack.extend(
                cfg.succs[x]
                    .iter()
                    .copied()
                    .filter(|&s| !back_edges.contains(&(x, s))),
            );
        }
    }
    reach
}

fn precedes(a: &Node, b: &Node, forward: &[Vec<bool>]) -> bool {
    if a.block == b.block {
        a.index < b.index
    } else {
        forward[a.block][b.block]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_ir;

    pub(crate) fn graph(text: &str) -> Cdfg {
        build_cdfg(&parse_ir(text).unwrap())
    }

    #[test]
    fn straight_line_chain() {
        let g = graph("func f(%x) {\nblock entry:\n %a = iadd %x, 1\n %b = imul %a, 2\n ret\n}");
        assert_eq!(g.len(), 2);
        assert_eq!(
            g.edges,
            vec![Edge {
                src: 0,
                dst: 1,
                kind: EdgeKind::Data,
                loop_carried: false
            }]
        );
    }

    #[test]
    fn loop_counter_phi_edge_is_carried() {
        let g = graph(
            "func f() {\nblock entry:\n jmp body\nblock body:\n %i = phi [entry: 0, body: %inc]\n %inc = iadd %i, 1\n jmp body\n}",
        );
        assert_eq!(g.len(), 2);
        assert!(g.edges.contains(&Edge {
            src: 1,
            dst: 0,
            kind: EdgeKind::Data,
            loop_carried: true
        }));
        assert!(g.edges.contains(&Edge {
            src: 0,
            dst: 1,
            kind: EdgeKind::Data,
            loop_carried: false
        }));
    }

    const STACK_LOOP: &str = "func f(%n) {\n space stack elem=4 extent=16\n\
        block entry:\n jmp loop\n\
        block loop:\n %i = phi [entry: 0, loop: %i1]\n %v = load stack[%i]\n %w = iadd %v, 1\n %a = iand %w, 15\n store stack[%a], %i\n\
         %i1 = iadd %i, 1\n %c = icmp slt %i1, %n\n br %c, loop, exit\n\
        block exit:\n ret\n}";

    #[test]
    fn stack_accesses_get_memord_edges_both_ways() {
        let g = graph(STACK_LOOP);
        let ld = g.def_of("v").unwrap();
        let st = (0..g.len()).find(|&n| g.nodes[n].opcode == Opcode::Store).unwrap();
        let has = |s, d, carried| {
            g.edges.contains(&Edge {
                src: s,
                dst: d,
                kind: EdgeKind::MemOrd,
                loop_carried: carried,
            })
        };
        assert!(has(ld, st, false));
        assert!(has(st, ld, true));
        assert!(has(ld, st, true));
    }

    #[test]
    fn no_loop_carried_keeps_only_program_order() {
        let g = graph(&STACK_LOOP.replace("extent=16", "extent=16 no_loop_carried"));
        let mem: Vec<_> = g.edges.iter().filter(|e| e.kind == EdgeKind::MemOrd).collect();
        assert_eq!(mem.len(), 1);
        assert!(!mem[0].loop_carried);
    }

    #[test]
    fn branch_controls_loop_body() {
        let g = graph(STACK_LOOP);
        let br = g.branch_of_block[1].unwrap();
        let phi = g.def_of("i").unwrap();
        assert!(g.edges.contains(&Edge {
            src: br,
            dst: phi,
            kind: EdgeKind::Control,
            loop_carried: true
        }));
        let dump = g.dump();
        assert!(dump.contains("\"%i1\" -> \"%i\" [data, carried]"), "{dump}");
    }
}
