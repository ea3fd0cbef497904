//! Cuts the condensed dependence graph into pipeline stages, connects them
//! with FIFO channels and emits one program per stage.

mod channels;
mod dup;
mod emit;
mod manifest;
mod queue;

use std::collections::BTreeSet;

use crate::cdfg::{build_cdfg, condense_and_sort, find_sccs, Cdfg, CondensedDag, NodeId, SccSet};
use crate::ir::{Block, InstKind, Instruction, LatencyTable, Operand, Program};

pub use channels::{
    insert_channels, stage_views, Channel, Import, Payload, StageView, DEFAULT_FIFO_DEPTH,
};
pub use dup::{duplicate_cheap_sccs, DEFAULT_MAX_DUP_NODES};
pub use emit::{emit_stage_programs, EmitError, StageProgram};
pub use manifest::{manifest_json, Manifest};
pub use queue::{run_queued, QueueError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePlan {
    /// Nodes owned by each stage, sorted.
    pub stages: Vec<Vec<NodeId>>,
    pub stage_of: Vec<usize>,
    /// Components of each stage in topological order.
    pub components: Vec<Vec<usize>>,
    /// The memory/long-latency component that closed each stage.
    pub closing: Vec<Option<usize>>,
    /// Replicated components: (component, stage holding the copy).
    pub duplicated: BTreeSet<(usize, usize)>,
}

impl StagePlan {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn stage_of_component(&self, s: &SccSet, c: usize) -> usize {
        self.stage_of[s.members[c][0]]
    }

    /// Owned plus duplicated nodes of a stage.
    pub fn present(&self, s: &SccSet, stage: usize) -> BTreeSet<NodeId> {
        let mut out: BTreeSet<NodeId> = self.stages[stage].iter().copied().collect();
        for &(c, t) in &self.duplicated {
            if t == stage {
                out.extend(s.members[c].iter().copied());
            }
        }
        out
    }
}

/// Walks the components in topological order, closing a stage after each
/// component that touches memory or holds a long-latency operation.
pub fn partition(dag: &CondensedDag, s: &SccSet) -> StagePlan {
    let node_count = s.comp_of.len();
    let mut plan = StagePlan {
        stages: Vec::new(),
        stage_of: vec![usize::MAX; node_count],
        components: Vec::new(),
        closing: Vec::new(),
        duplicated: BTreeSet::new(),
    };
    let mut cur: Vec<usize> = Vec::new();
    let close = |cur: &mut Vec<usize>, closing: Option<usize>, plan: &mut StagePlan| {
        let idx = plan.stages.len();
        let mut nodes: Vec<NodeId> = cur.iter().flat_map(|&c| s.members[c].iter().copied()).collect();
        nodes.sort_unstable();
        for &n in &nodes {
            plan.stage_of[n] = idx;
        }
        plan.stages.push(nodes);
        plan.components.push(std::mem::take(cur));
        plan.closing.push(closing);
    };
    for &c in &dag.order {
        cur.push(c);
        if s.has_mem[c] || s.has_long[c] {
            close(&mut cur, Some(c), &mut plan);
        }
    }
    if !cur.is_empty() {
        close(&mut cur, None, &mut plan);
    }
    plan
}

/// Rewrites a program with several `ret` blocks so that a single block
/// returns; others jump there, merging return values through a phi.
pub fn single_exit(p: &Program) -> Program {
    let rets: Vec<usize> = p
        .blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| matches!(b.terminator().map(|t| &t.kind), Some(InstKind::Ret(_))))
        .map(|(i, _)| i)
        .collect();
    if rets.len() <= 1 {
        return p.clone();
    }
    let taken: BTreeSet<&str> = p.blocks.iter().map(|b| b.label.as_str()).collect();
    let mut label = "exit.merged".to_string();
    while taken.contains(label.as_str()) {
        label.push('_');
    }
    let names = value_names(p);
    let mut result = "ret.merged".to_string();
    while names.contains(&result) {
        result.push('_');
    }
    let mut out = p.clone();
    let mut incoming = Vec::new();
    let mut has_value = false;
    for &b in &rets {
        let block = &mut out.blocks[b];
        let last = block.insts.pop().unwrap();
        if let InstKind::Ret(v) = last.kind {
            has_value |= v.is_some();
            incoming.push((block.label.clone(), v.unwrap_or(Operand::Lit(Default::default()))));
        }
        block.insts.push(Instruction::new(None, InstKind::Jmp(label.clone())));
    }
    let mut insts = Vec::new();
    let ret = if has_value {
        insts.push(Instruction::new(Some(&result), InstKind::Phi(incoming)));
        InstKind::Ret(Some(Operand::Var(result)))
    } else {
        InstKind::Ret(None)
    };
    insts.push(Instruction::new(None, ret));
    out.blocks.push(Block { label, insts });
    out
}

pub(crate) fn value_names(p: &Program) -> BTreeSet<String> {
    let mut names: BTreeSet<String> = p.args.iter().cloned().collect();
    for b in &p.blocks {
        for i in &b.insts {
            if let Some(r) = &i.result {
                names.insert(r.clone());
            }
        }
    }
    names
}

/// Every artifact of partitioning one kernel.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub graph: Cdfg,
    pub sccs: SccSet,
    pub dag: CondensedDag,
    pub plan: StagePlan,
    pub channels: Vec<Channel>,
    pub stages: Vec<StageProgram>,
}

impl Pipeline {
    pub fn build(
        p: &Program,
        table: &LatencyTable,
        max_dup_nodes: usize,
        fifo_depth: usize,
    ) -> Result<Self, EmitError> {
        let graph = build_cdfg(&single_exit(p));
        let sccs = find_sccs(&graph, table);
        let dag = condense_and_sort(&graph, &sccs).expect("condensation is acyclic");
        let plan = partition(&dag, &sccs);
        let plan = duplicate_cheap_sccs(&plan, &graph, &sccs, &dag, max_dup_nodes);
        let channels = insert_channels(&plan, &graph, &sccs, fifo_depth);
        let stages = emit_stage_programs(&plan, &channels, &graph, &sccs)?;
        Ok(Pipeline {
            graph,
            sccs,
            dag,
            plan,
            channels,
            stages,
        })
    }

    pub fn manifest_json(&self) -> String {
        manifest_json(&self.plan, &self.channels, &self.graph, &self.sccs)
    }
}

/// Structural violations of a plan and its channels; empty when sound.
pub fn check_plan(
    plan: &StagePlan,
    channels: &[Channel],
    g: &Cdfg,
    s: &SccSet,
    dag: &CondensedDag,
) -> Vec<String> {
    let mut out = Vec::new();
    for (n, &st) in plan.stage_of.iter().enumerate() {
        if st >= plan.len() || !plan.stages[st].contains(&n) {
            out.push(format!("node {n} not placed"));
        }
    }
    for (c, m) in s.members.iter().enumerate() {
        let st = plan.stage_of[m[0]];
        if m.iter().any(|&n| plan.stage_of[n] != st) {
            out.push(format!("component {c} split across stages"));
        }
    }
    for e in &g.edges {
        if plan.stage_of[e.src] > plan.stage_of[e.dst] {
            out.push(format!("edge {} -> {} goes backwards", e.src, e.dst));
        }
    }
    for ch in channels {
        let backward_ok = ch.payload == Payload::Sync
            && channels.iter().any(|o| {
                o.payload == Payload::Sync && o.sync_loop == ch.sync_loop && o.producer == ch.consumer && o.consumer == ch.producer
            });
        if (ch.producer >= ch.consumer && !backward_ok) || ch.depth == 0 {
            out.push(format!("channel {} is not forward", ch.name));
        }
    }
    let mut pairs = BTreeSet::new();
    for ch in channels {
        if !pairs.insert((ch.value.clone(), ch.consumer)) {
            out.push(format!("duplicate channel for %{} into stage {}", ch.value, ch.consumer));
        }
    }
    let heavy = |c: usize| s.has_mem[c] || s.has_long[c];
    for t in 0..plan.len() {
        let comps = &plan.components[t];
        let count = comps.iter().filter(|&&c| heavy(c)).count();
        let last_ok = comps.last().is_some_and(|&c| heavy(c));
        let is_last = t + 1 == plan.len();
        if !is_last && (count != 1 || !last_ok) {
            out.push(format!("stage {t} does not end with exactly one memory/long component"));
        }
        if is_last && count > 1 {
            out.push(format!("final stage {t} holds {count} memory/long components"));
        }
        for w in comps.windows(2) {
            if dag.rank[w[0]] > dag.rank[w[1]] {
                out.push(format!("stage {t} components out of order"));
            }
        }
    }
    for &(c, t) in &plan.duplicated {
        if heavy(c) {
            out.push(format!("memory/long component {c} duplicated into stage {t}"));
        }
    }
    let heavy_total = (0..s.len()).filter(|&c| heavy(c)).count();
    let trailing = plan.closing.last().is_some_and(|c| c.is_none());
    if plan.len() != heavy_total + trailing as usize {
        out.push(format!(
            "{} stages for {heavy_total} memory/long components",
            plan.len()
        ));
    }
    out
}

#[cfg(test)]
pub(crate) mod tests;
