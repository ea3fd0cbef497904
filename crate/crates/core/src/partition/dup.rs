use std::collections::BTreeSet;

use super::channels::{channels_from_views, Context};
use super::StagePlan;
use crate::cdfg::{Cdfg, CondensedDag, SccSet};

pub const DEFAULT_MAX_DUP_NODES: usize = 8;

fn cheap(s: &SccSet, c: usize) -> bool {
    !s.has_mem[c] && !s.has_long[c]
}

fn channel_count(ctx: &Context<'_>, plan: &StagePlan) -> usize {
    let views: Vec<_> = (0..plan.len()).map(|t| ctx.view(plan, t)).collect();
    channels_from_views(ctx, plan, &views, 1).len()
}

/// Copies cheap components into later stages that consume them, keeping a
/// copy only when it strictly reduces the number of channels.
pub fn duplicate_cheap_sccs(
    plan: &StagePlan,
    g: &Cdfg,
    s: &SccSet,
    dag: &CondensedDag,
    max_dup_nodes: usize,
) -> StagePlan {
    let mut plan = plan.clone();
    if max_dup_nodes == 0 || plan.len() < 2 {
        return plan;
    }
    let ctx = Context::new(g, s);
    let mut best = channel_count(&ctx, &plan);
    for &c in &dag.order {
        if !cheap(s, c) || s.members[c].len() > max_dup_nodes {
            continue;
        }
        let home = plan.stage_of_component(s, c);
        for t in home + 1..plan.len() {
            if plan.duplicated.contains(&(c, t)) {
                continue;
            }
            let in_t = |plan: &StagePlan, f: usize| {
                plan.stage_of_component(s, f) == t || plan.duplicated.contains(&(f, t))
            };
            // Pull in cheap acyclic feeders while the budget allows.
            let mut group = vec![c];
            let mut size = s.members[c].len();
            let mut frontier = vec![c];
            let mut seen = BTreeSet::from([c]);
            while let Some(x) = frontier.pop() {
                for &f in &dag.preds[x] {
                    if !seen.insert(f) || in_t(&plan, f) || !cheap(s, f) || s.cyclic[f] {
                        continue;
                    }
                    if size + s.members[f].len() <= max_dup_nodes {
                        size += s.members[f].len();
                        group.push(f);
                        frontier.push(f);
                    }
                }
            }
            let mut candidates = vec![group.clone()];
            if group.len() > 1 {
                candidates.push(vec![c]);
            }
            for cand in candidates {
                let mut trial = plan.clone();
                for &f in &cand {
                    trial.duplicated.insert((f, t));
                }
                let count = channel_count(&ctx, &trial);
                if count < best {
                    best = count;
                    plan = trial;
                    break;
                }
            }
        }
    }
    plan
}
