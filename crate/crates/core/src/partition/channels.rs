use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::StagePlan;
use crate::cdfg::{Cdfg, EdgeKind, NodeId, SccSet};
use crate::ir::{Annotation, InstKind, Opcode, Operand};

pub const DEFAULT_FIFO_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Data,
    /// A branch condition, needed only to steer the consumer's control flow.
    Control,
    /// Carries no value; orders a memory access after one in an earlier
    /// stage.
    Order,
    /// Carries no value; exchanged by two stages on every entry into a loop
    /// so that neither runs ahead of the other by a whole loop instance.
    Sync,
}

/// A value (or ordering token) a stage receives from another stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Import {
    pub def: NodeId,
    pub payload: Payload,
}

/// Name bound by the pop of an ordering token.
pub(crate) fn order_token(n: NodeId) -> String {
    format!("ord.{n}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Channel {
    pub id: usize,
    pub name: String,
    /// SSA value carried.
    pub value: String,
    pub producer: usize,
    pub consumer: usize,
    pub payload: Payload,
    pub depth: usize,
    /// Defining node; `NodeId::MAX` for sync channels.
    #[serde(skip)]
    pub def_node: NodeId,
    /// Header block of the loop whose entries a sync channel guards.
    #[serde(skip)]
    pub sync_loop: Option<usize>,
}

/// Loops at whose entries two stages must synchronise, as
/// `(header, upstream, downstream)`.
///
/// A `no_loop_carried` space promises independence across iterations of the
/// innermost loop enclosing both accesses, not across enclosing loops. When
/// two conflicting accesses sit in different stages and that loop is
/// nested, the later stage could otherwise still be finishing one instance
/// of the loop while the earlier stage starts the next.
pub(crate) fn sync_points(g: &Cdfg, plan: &StagePlan) -> Vec<(usize, usize, usize)> {
    let p = &g.program;
    let loops = &g.loops;
    let space_of = |n: NodeId| {
        let node = &g.nodes[n];
        p.blocks[node.block].insts[node.index].kind.space().map(str::to_string)
    };
    let mem: Vec<(NodeId, String)> = (0..g.nodes.len())
        .filter(|&n| g.nodes[n].opcode.is_memory())
        .filter_map(|n| space_of(n).map(|s| (n, s)))
        .filter(|(_, s)| p.space(s).is_some_and(|d| d.has(Annotation::NoLoopCarried)))
        .collect();
    let innermost_shared = |a: usize, b: usize| {
        (0..loops.headers.len())
            .filter(|&l| loops.bodies[l].contains(&a) && loops.bodies[l].contains(&b))
            .min_by_key(|&l| loops.bodies[l].len())
    };
    let nested = |l: usize| {
        (0..loops.headers.len()).any(|o| {
            o != l && loops.bodies[o].len() > loops.bodies[l].len() && loops.bodies[l].is_subset(&loops.bodies[o])
        })
    };
    let mut out = BTreeSet::new();
    for (i, (a, sa)) in mem.iter().enumerate() {
        for (b, sb) in &mem[i + 1..] {
            let (ta, tb) = (plan.stage_of[*a], plan.stage_of[*b]);
            if sa != sb || ta == tb {
                continue;
            }
            if g.nodes[*a].opcode == Opcode::Load && g.nodes[*b].opcode == Opcode::Load {
                continue;
            }
            if let Some(l) = innermost_shared(g.nodes[*a].block, g.nodes[*b].block) {
                if nested(l) {
                    out.insert((loops.headers[l], ta.min(tb), ta.max(tb)));
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Name bound by the pop of a sync token on the edge leaving `pred`.
pub(crate) fn sync_token(c: &Channel, pred: &str) -> String {
    format!("{}.{pred}", c.value)
}

/// What one stage needs from the original program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageView {
    pub stage: usize,
    pub present: BTreeSet<NodeId>,
    /// Blocks whose conditional branch this stage keeps.
    pub kept_branches: BTreeSet<usize>,
    /// Blocks that must execute in this stage.
    pub work: BTreeSet<usize>,
    /// Values and tokens received from other stages.
    pub imports: BTreeMap<String, Import>,
}

pub(crate) struct Context<'a> {
    pub g: &'a Cdfg,
    pub s: &'a SccSet,
    pub defs: HashMap<&'a str, NodeId>,
    pub ipdom: Vec<Option<usize>>,
    pub exits: Vec<usize>,
}

impl<'a> Context<'a> {
    pub fn new(g: &'a Cdfg, s: &'a SccSet) -> Self {
        let mut defs = HashMap::new();
        for (n, node) in g.nodes.iter().enumerate() {
            if let Some(r) = &node.result {
                defs.insert(r.as_str(), n);
            }
        }
        let exits = g
            .program
            .blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| matches!(b.terminator().map(|t| &t.kind), Some(InstKind::Ret(_))))
            .map(|(i, _)| i)
            .collect();
        Context {
            g,
            s,
            defs,
            ipdom: g.cfg.post_dominators(),
            exits,
        }
    }

    fn branch_cond(&self, block: usize) -> Option<&'a Operand> {
        match &self.g.program.blocks[block].terminator()?.kind {
            InstKind::Br { cond, .. } => Some(cond),
            _ => None,
        }
    }

    pub fn view(&self, plan: &StagePlan, stage: usize) -> StageView {
        let g = self.g;
        let present = plan.present(self.s, stage);
        let mut work: BTreeSet<usize> = self.exits.iter().copied().collect();
        let mut kept = BTreeSet::new();
        let mut uses: Vec<(&'a Operand, bool)> = Vec::new();

        // Branches with no post-dominator to fall through to are always kept.
        let reach = g.cfg.reachable();
        for (b, br) in g.branch_of_block.iter().enumerate() {
            if br.is_some() && self.ipdom[b].is_none() && reach[b] {
                kept.insert(b);
            }
        }
        for &n in &present {
            let node = &g.nodes[n];
            work.insert(node.block);
            match &g.instruction(n).kind {
                InstKind::Phi(incoming) => {
                    for (label, v) in incoming {
                        let pb = g.program.block_index(label).unwrap();
                        work.insert(pb);
                        if g.branch_of_block[pb].is_some() {
                            kept.insert(pb);
                        }
                        uses.push((v, true));
                    }
                }
                InstKind::Br { .. } => {
                    kept.insert(node.block);
                }
                kind => uses.extend(kind.operands().into_iter().map(|o| (o, true))),
            }
        }
        for &b in &kept {
            work.insert(b);
            if let Some(c) = self.branch_cond(b) {
                uses.push((c, false));
            }
        }

        let mut imports: BTreeMap<String, Import> = BTreeMap::new();
        // Memory accesses ordered after an access held elsewhere.
        let mut order_from: BTreeSet<NodeId> = BTreeSet::new();
        for e in &g.edges {
            if e.kind == EdgeKind::MemOrd
                && !e.loop_carried
                && present.contains(&e.dst)
                && !present.contains(&e.src)
            {
                order_from.insert(e.src);
                work.insert(g.nodes[e.src].block);
            }
        }
        let mut done_work: BTreeSet<usize> = BTreeSet::new();
        loop {
            let mut changed = false;
            for (v, data) in uses.drain(..) {
                let Some(name) = v.var() else { continue };
                let Some(&d) = self.defs.get(name) else { continue };
                if present.contains(&d) {
                    continue;
                }
                let e = imports.entry(name.to_string()).or_insert(Import {
                    def: d,
                    payload: Payload::Control,
                });
                if data {
                    e.payload = Payload::Data;
                }
                if work.insert(g.nodes[d].block) {
                    changed = true;
                }
            }
            let pending: Vec<usize> = work.difference(&done_work).copied().collect();
            for x in pending {
                done_work.insert(x);
                for &a in &g.control_deps[x] {
                    if g.branch_of_block[a].is_some() && kept.insert(a) {
                        changed = true;
                        work.insert(a);
                        if let Some(c) = self.branch_cond(a) {
                            uses.push((c, false));
                        }
                    }
                }
            }
            if !changed && uses.is_empty() && work.len() == done_work.len() {
                break;
            }
        }
        for a in order_from {
            let value_imported = g.nodes[a]
                .result
                .as_ref()
                .is_some_and(|r| imports.contains_key(r));
            if !value_imported {
                imports.insert(
                    order_token(a),
                    Import {
                        def: a,
                        payload: Payload::Order,
                    },
                );
            }
        }
        StageView {
            stage,
            present,
            kept_branches: kept,
            work,
            imports,
        }
    }
}

pub fn stage_views(g: &Cdfg, s: &SccSet, plan: &StagePlan) -> Vec<StageView> {
    let ctx = Context::new(g, s);
    (0..plan.len()).map(|t| ctx.view(plan, t)).collect()
}

/// One channel per (value, consumer stage) pair, numbered by the producing
/// instruction's program position, then consumer.
pub fn insert_channels(plan: &StagePlan, g: &Cdfg, s: &SccSet, depth: usize) -> Vec<Channel> {
    let ctx = Context::new(g, s);
    channels_from_views(&ctx, plan, &stage_views(g, s, plan), depth)
}

pub(crate) fn channels_from_views(
    ctx: &Context<'_>,
    plan: &StagePlan,
    views: &[StageView],
    depth: usize,
) -> Vec<Channel> {
    let mut raw = Vec::new();
    for v in views {
        for (name, imp) in &v.imports {
            let d = imp.def;
            raw.push((ctx.g.nodes[d].position, v.stage, name.clone(), d, imp.payload));
        }
    }
    raw.sort();
    let mut out: Vec<Channel> = raw
        .into_iter()
        .enumerate()
        .map(|(id, (_, consumer, value, d, payload))| Channel {
            id,
            name: format!("c{id}"),
            value,
            producer: plan.stage_of[d],
            consumer,
            payload,
            depth,
            def_node: d,
            sync_loop: None,
        })
        .collect();
    // One token each way per synchronised pair.
    for (header, u, d) in sync_points(ctx.g, plan) {
        for (producer, consumer) in [(u, d), (d, u)] {
            let id = out.len();
            out.push(Channel {
                id,
                name: format!("c{id}"),
                value: format!("sync.{id}"),
                producer,
                consumer,
                payload: Payload::Sync,
                depth,
                def_node: NodeId::MAX,
                sync_loop: Some(header),
            });
        }
    }
    out
}
