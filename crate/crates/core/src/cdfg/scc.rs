use super::{Cdfg, EdgeKind, NodeId};
use crate::ir::LatencyTable;

/// Components up to this size get an exact longest-simple-cycle latency
/// (over data and memory-ordering edges);
/// larger ones are bounded by the sum of member latencies.
pub const EXACT_CYCLE_LIMIT: usize = 12;

#[derive(Debug, Clone)]
pub struct SccSet {
    /// Component index of each node.
    pub comp_of: Vec<usize>,
    /// Members of each component, sorted by node id.
    pub members: Vec<Vec<NodeId>>,
    pub has_mem: Vec<bool>,
    pub has_long: Vec<bool>,
    /// True when the component contains a dependence cycle.
    pub cyclic: Vec<bool>,
    pub cycle_latency: Vec<u32>,
}

impl SccSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Iterative Tarjan. Returns components in reverse topological order.
pub fn tarjan(n: usize, succ: impl Fn(usize) -> Vec<usize>) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, Vec<usize>, usize)> = vec![(root, succ(root), 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(frame) = call.last_mut() {
            let v = frame.0;
            if frame.2 < frame.1.len() {
                let w = frame.1[frame.2];
                frame.2 += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, succ(w), 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(parent) = call.last() {
                    low[parent.0] = low[parent.0].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

pub fn find_sccs(g: &Cdfg, table: &LatencyTable) -> SccSet {
    let comps = tarjan(g.len(), |v| g.successors(v).to_vec());
    let mut comp_of = vec![0; g.len()];
    for (c, m) in comps.iter().enumerate() {
        for &v in m {
            comp_of[v] = c;
        }
    }
    let lat = |v: NodeId| table.cycles_or_zero(g.nodes[v].opcode);
    // Recurrence latency follows data and memory-ordering edges only; a
    // loop-exit test does not bound the initiation interval.
    let mut dsucc = vec![Vec::new(); g.len()];
    for e in &g.edges {
        if e.kind != EdgeKind::Control && !dsucc[e.src].contains(&e.dst) {
            dsucc[e.src].push(e.dst);
        }
    }
    let mut set = SccSet {
        comp_of,
        members: Vec::with_capacity(comps.len()),
        has_mem: Vec::new(),
        has_long: Vec::new(),
        cyclic: Vec::new(),
        cycle_latency: Vec::new(),
    };
    for (c, m) in comps.into_iter().enumerate() {
        let cyclic = m.len() > 1 || g.successors(m[0]).contains(&m[0]);
        let cycle_latency = if !cyclic {
            0
        } else if m.len() <= EXACT_CYCLE_LIMIT {
            longest_cycle(&dsucc, &set.comp_of, c, &m, &lat)
        } else {
            m.iter().map(|&v| lat(v)).sum()
        };
        set.has_mem.push(m.iter().any(|&v| g.nodes[v].opcode.is_memory()));
        set.has_long
            .push(m.iter().any(|&v| table.is_long(g.nodes[v].opcode)));
        set.cyclic.push(cyclic);
        set.cycle_latency.push(cycle_latency);
        set.members.push(m);
    }
    set
}

/// Maximum over simple cycles of the summed node latency. Each cycle is
/// enumerated once, rooted at its smallest member.
fn longest_cycle(
    succ: &[Vec<NodeId>],
    comp_of: &[usize],
    c: usize,
    members: &[NodeId],
    lat: &impl Fn(NodeId) -> u32,
) -> u32 {
    let mut best = 0;
    for &start in members {
        let mut path = vec![start];
        let mut on_path = vec![false; succ.len()];
        on_path[start] = true;
        let mut iters = vec![0usize];
        let mut sum = lat(start);
        while let Some(&v) = path.last() {
            let i = iters.last_mut().unwrap();
            let next = &succ[v];
            if *i < next.len() {
                let w = next[*i];
                *i += 1;
                if comp_of[w] != c || w < start {
                    continue;
                }
                if w == start {
                    best = best.max(sum);
                } else if !on_path[w] {
                    on_path[w] = true;
                    path.push(w);
                    iters.push(0);
                    sum += lat(w);
                }
            } else {
                on_path[v] = false;
                sum -= lat(v);
                path.pop();
                iters.pop();
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdfg::build_cdfg;
    use crate::ir::{parse_ir, Opcode};

    fn sccs(text: &str) -> (Cdfg, SccSet) {
        let g = build_cdfg(&parse_ir(text).unwrap());
        let s = find_sccs(&g, &LatencyTable::default());
        (g, s)
    }

    #[test]
    fn tarjan_matches_small_graph() {
        let adj = [vec![1], vec![2], vec![0, 3], vec![]];
        let comps = tarjan(4, |v| adj[v].clone());
        assert_eq!(comps, vec![vec![3], vec![0, 1, 2]]);
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let n = 200_000;
        let comps = tarjan(n, |v| if v + 1 < n { vec![v + 1] } else { vec![] });
        assert_eq!(comps.len(), n);
    }

    #[test]
    fn counter_cycle_latency_two() {
        let (g, s) = sccs(
            "func f() {\nblock entry:\n jmp body\nblock body:\n %i = phi [entry: 0, body: %i1]\n %i1 = iadd %i, 1\n jmp body\n}",
        );
        let c = s.comp_of[g.def_of("i").unwrap()];
        assert_eq!(s.members[c].len(), 2);
        assert_eq!(s.cycle_latency[c], 2);
        assert!(!s.has_long[c]);
    }

    #[test]
    fn float_accumulator_cycle_latency_five() {
        let (g, s) = sccs(
            "func f(%t) {\nblock entry:\n jmp body\nblock body:\n %s = phi [entry: 0.0, body: %s2]\n %s2 = fadd %s, %t\n jmp body\n}",
        );
        let c = s.comp_of[g.def_of("s2").unwrap()];
        assert_eq!(s.members[c], vec![g.def_of("s").unwrap(), g.def_of("s2").unwrap()]);
        assert!(s.has_long[c]);
        assert_eq!(s.cycle_latency[c], 5);
    }

    #[test]
    fn stack_accesses_form_one_memory_component() {
        let (g, s) = sccs(
            "func f(%n) {\n space stack elem=4 extent=16\n\
            block entry:\n jmp loop\n\
            block loop:\n %i = phi [entry: 0, loop: %i1]\n %v = load stack[%i]\n store stack[%v], %i\n\
             %i1 = iadd %i, 1\n %c = icmp slt %i1, %n\n br %c, loop, exit\n\
            block exit:\n ret\n}",
        );
        let ld = g.def_of("v").unwrap();
        let st = (0..g.len()).find(|&n| g.nodes[n].opcode == Opcode::Store).unwrap();
        assert_eq!(s.comp_of[ld], s.comp_of[st]);
        assert!(s.has_mem[s.comp_of[ld]]);
    }
}
