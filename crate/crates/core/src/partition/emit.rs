use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::channels::{channels_from_views, sync_token, Channel, Context, Payload, StageView};
use super::{value_names, StagePlan};
use crate::cdfg::{Cdfg, NodeId, SccSet};
use crate::ir::{
    validate_stage, Block, InstKind, Instruction, Operand, Program, Value, Violation,
};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("stage {consumer} needs %{value} from later stage {producer}")]
    BackwardChannel {
        value: String,
        producer: usize,
        consumer: usize,
    },
    #[error("stage {stage} needs %{value} but no channel carries it")]
    MissingChannel { value: String, stage: usize },
    #[error("emitted stage {stage} is invalid: {violations:?}")]
    Invalid {
        stage: usize,
        violations: Vec<Violation>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageProgram {
    pub stage: usize,
    pub program: Program,
    /// Components owned or duplicated here.
    pub resident: Vec<usize>,
    pub returns_value: bool,
}

pub fn emit_stage_programs(
    plan: &StagePlan,
    channels: &[Channel],
    g: &Cdfg,
    s: &SccSet,
) -> Result<Vec<StageProgram>, EmitError> {
    let ctx = Context::new(g, s);
    let views: Vec<StageView> = (0..plan.len()).map(|t| ctx.view(plan, t)).collect();
    // The channel list must cover what the views need.
    let expected = channels_from_views(&ctx, plan, &views, 1);
    for c in &expected {
        if c.producer >= c.consumer && c.payload != Payload::Sync {
            return Err(EmitError::BackwardChannel {
                value: c.value.clone(),
                producer: c.producer,
                consumer: c.consumer,
            });
        }
        if !channels
            .iter()
            .any(|x| x.value == c.value && x.consumer == c.consumer)
        {
            return Err(EmitError::MissingChannel {
                value: c.value.clone(),
                stage: c.consumer,
            });
        }
    }
    views
        .iter()
        .map(|v| emit_one(&ctx, plan, v, channels))
        .collect()
}

fn emit_one(
    ctx: &Context<'_>,
    plan: &StagePlan,
    view: &StageView,
    channels: &[Channel],
) -> Result<StageProgram, EmitError> {
    let g = ctx.g;
    let p = &g.program;
    let t = view.stage;
    let mut names = value_names(p);
    let mut labels: BTreeSet<String> = p.blocks.iter().map(|b| b.label.clone()).collect();

    let node_at: BTreeMap<(usize, usize), NodeId> = g
        .nodes
        .iter()
        .enumerate()
        .map(|(n, node)| ((node.block, node.index), n))
        .collect();
    let pushes_of = |n: NodeId| -> Vec<&Channel> {
        if plan.stage_of[n] != t {
            return Vec::new();
        }
        channels.iter().filter(|c| c.def_node == n).collect()
    };
    let push = |c: &Channel| {
        Instruction::new(
            None,
            InstKind::Push {
                chan: c.name.clone(),
                value: if matches!(c.payload, Payload::Order | Payload::Sync) {
                    Operand::Lit(Value::Int(0))
                } else {
                    Operand::Var(c.value.clone())
                },
            },
        )
    };

    // Pops at the top of each defining block, in definition order.
    let mut pops: BTreeMap<usize, Vec<(usize, Instruction)>> = BTreeMap::new();
    for c in channels.iter().filter(|c| c.consumer == t && c.payload != Payload::Sync) {
        let node = &g.nodes[c.def_node];
        pops.entry(node.block).or_default().push((
            node.position,
            Instruction::new(Some(&c.value), InstKind::Pop { chan: c.name.clone() }),
        ));
    }

    let mut blocks: Vec<Block> = Vec::with_capacity(p.blocks.len());
    // Parallel copies per (pred, succ) edge from eliminated phis.
    let mut copies: BTreeMap<(usize, usize), Vec<(String, Operand)>> = BTreeMap::new();
    let mut returns_value = false;
    for (b, block) in p.blocks.iter().enumerate() {
        let mut insts = Vec::new();
        if let Some(list) = pops.get_mut(&b) {
            list.sort_by_key(|(pos, _)| *pos);
            insts.extend(list.drain(..).map(|(_, i)| i));
        }
        let mut body = Vec::new();
        for (k, inst) in block.insts.iter().enumerate() {
            let node = node_at.get(&(b, k)).copied();
            let present = node.is_some_and(|n| view.present.contains(&n));
            match &inst.kind {
                InstKind::Phi(incoming) => {
                    if !present {
                        continue;
                    }
                    let dst = inst.result.clone().unwrap();
                    for (label, v) in incoming {
                        let pb = p.block_index(label).unwrap();
                        copies.entry((pb, b)).or_default().push((dst.clone(), v.clone()));
                    }
                    insts.extend(pushes_of(node.unwrap()).into_iter().map(push));
                }
                InstKind::Br { then_to, else_to, .. } => {
                    let kept = node.is_some() && view.kept_branches.contains(&b);
                    if kept {
                        body.push(inst.clone());
                    } else if then_to == else_to {
                        body.push(Instruction::new(None, InstKind::Jmp(then_to.clone())));
                    } else {
                        let target = ctx.ipdom[b].expect("unkept branch has a post-dominator");
                        body.push(Instruction::new(
                            None,
                            InstKind::Jmp(p.blocks[target].label.clone()),
                        ));
                    }
                }
                InstKind::Jmp(_) => body.push(inst.clone()),
                InstKind::Ret(v) => {
                    if v.is_some() && present {
                        returns_value = true;
                        body.push(inst.clone());
                    } else {
                        body.push(Instruction::new(None, InstKind::Ret(None)));
                    }
                }
                _ => {
                    if present {
                        body.push(inst.clone());
                        body.extend(pushes_of(node.unwrap()).into_iter().map(push));
                    }
                }
            }
        }
        insts.extend(body);
        blocks.push(Block {
            label: block.label.clone(),
            insts,
        });
    }

    // Sync tokens on every edge entering a guarded loop: pushes before pops.
    let mut syncs: BTreeMap<(usize, usize), Vec<Instruction>> = BTreeMap::new();
    let mut mine: Vec<&Channel> = channels
        .iter()
        .filter(|c| c.payload == Payload::Sync && (c.producer == t || c.consumer == t))
        .collect();
    mine.sort_by_key(|c| (c.consumer == t, c.id));
    for c in mine {
        let header = c.sync_loop.expect("sync channel names its loop");
        let body = &g.loops.bodies[g.loops.headers.iter().position(|&h| h == header).unwrap()];
        for (pb, pred) in p.blocks.iter().enumerate() {
            let enters = pred
                .insts
                .last()
                .is_some_and(|i| i.kind.successors().contains(&p.blocks[header].label.as_str()));
            if !enters || body.contains(&pb) {
                continue;
            }
            let inst = if c.producer == t {
                push(c)
            } else {
                Instruction::new(Some(&sync_token(c, &pred.label)), InstKind::Pop { chan: c.name.clone() })
            };
            syncs.entry((pb, header)).or_default().push(inst);
        }
    }
    for key in syncs.keys() {
        copies.entry(*key).or_default();
    }

    // Phi elimination: copies go at the end of the predecessor, or into a
    // fresh block when the edge is critical.
    let mut extra = Vec::new();
    for ((pb, b), list) in copies {
        let mut movs = syncs.remove(&(pb, b)).unwrap_or_default();
        movs.extend(parallel_copy(list, &mut names));
        if movs.is_empty() {
            continue;
        }
        let succ_label = p.blocks[b].label.clone();
        let pred = &mut blocks[pb];
        let term = pred.insts.last_mut().unwrap();
        let distinct: BTreeSet<&str> = term.kind.successors().into_iter().collect();
        if distinct.len() <= 1 {
            let at = pred.insts.len() - 1;
            pred.insts.splice(at..at, movs);
        } else {
            let mut label = format!("{}.{}", p.blocks[pb].label, succ_label);
            while !labels.insert(label.clone()) {
                label.push('_');
            }
            if let InstKind::Br { then_to, else_to, .. } = &mut term.kind {
                for target in [then_to, else_to] {
                    if *target == succ_label {
                        *target = label.clone();
                    }
                }
            }
            let mut insts = movs;
            insts.push(Instruction::new(None, InstKind::Jmp(succ_label)));
            extra.push(Block { label, insts });
        }
    }
    blocks.extend(extra);
    let blocks = prune(blocks);

    let mut stage_channels: Vec<&Channel> = channels
        .iter()
        .filter(|c| c.producer == t || c.consumer == t)
        .collect();
    stage_channels.sort_by_key(|c| c.id);
    let program = Program {
        name: format!("{}.s{}", p.name, t),
        args: p.args.clone(),
        spaces: p.spaces.clone(),
        channels: stage_channels.iter().map(|c| c.name.clone()).collect(),
        blocks,
    };
    let violations = validate_stage(&program);
    if !violations.is_empty() {
        return Err(EmitError::Invalid {
            stage: t,
            violations,
        });
    }
    let mut resident: Vec<usize> = plan.components[t].clone();
    resident.extend(
        plan.duplicated
            .iter()
            .filter(|&&(_, st)| st == t)
            .map(|&(c, _)| c),
    );
    Ok(StageProgram {
        stage: t,
        program,
        resident,
        returns_value,
    })
}

/// Sequential movs implementing simultaneous assignment.
fn parallel_copy(list: Vec<(String, Operand)>, names: &mut BTreeSet<String>) -> Vec<Instruction> {
    let dsts: BTreeSet<&str> = list.iter().map(|(d, _)| d.as_str()).collect();
    let conflict = list
        .iter()
        .any(|(d, v)| v.var().is_some_and(|src| src != d && dsts.contains(src)));
    if !conflict {
        return list
            .into_iter()
            .map(|(d, v)| Instruction::new(Some(&d), InstKind::Mov(v)))
            .collect();
    }
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (d, v) in list {
        let mut tmp = format!("{d}.t");
        while !names.insert(tmp.clone()) {
            tmp.push('_');
        }
        first.push(Instruction::new(Some(&tmp), InstKind::Mov(v)));
        second.push(Instruction::new(Some(&d), InstKind::Mov(Operand::Var(tmp))));
    }
    first.extend(second);
    first
}

/// Drops unreachable blocks and bypasses empty blocks that only jump.
fn prune(mut blocks: Vec<Block>) -> Vec<Block> {
    loop {
        let index: BTreeMap<String, usize> = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.label.clone(), i))
            .collect();
        // Forwarding map for empty jump-only blocks (never the entry).
        let mut forward: BTreeMap<String, String> = BTreeMap::new();
        for b in blocks.iter().skip(1) {
            if let [Instruction {
                kind: InstKind::Jmp(to),
                ..
            }] = b.insts.as_slice()
            {
                if *to != b.label {
                    forward.insert(b.label.clone(), to.clone());
                }
            }
        }
        let resolve = |l: &String| {
            let mut cur = l.clone();
            let mut hops = 0;
            while let Some(next) = forward.get(&cur) {
                cur = next.clone();
                hops += 1;
                if hops > forward.len() {
                    return l.clone();
                }
            }
            cur
        };
        let mut changed = false;
        for b in &mut blocks {
            if let Some(term) = b.insts.last_mut() {
                match &mut term.kind {
                    InstKind::Jmp(to) => {
                        let r = resolve(to);
                        changed |= r != *to;
                        *to = r;
                    }
                    InstKind::Br { then_to, else_to, .. } => {
                        for to in [then_to, else_to] {
                            let r = resolve(to);
                            changed |= r != *to;
                            *to = r;
                        }
                    }
                    _ => {}
                }
            }
        }
        // Reachability from the entry.
        let mut seen = vec![false; blocks.len()];
        let mut stack = vec![0];
        while let Some(x) = stack.pop() {
            if std::mem::replace(&mut seen[x], true) {
                continue;
            }
            if let Some(term) = blocks[x].insts.last() {
                for s in term.kind.successors() {
                    stack.push(index[s]);
                }
            }
        }
        if seen.iter().all(|&s| s) && !changed {
            return blocks;
        }
        let mut i = 0;
        blocks.retain(|_| {
            i += 1;
            seen[i - 1]
        });
    }
}
