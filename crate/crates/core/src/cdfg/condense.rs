use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use thiserror::Error;

use super::{Cdfg, SccSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CondenseError {
    #[error("condensation is cyclic; {0} components could not be ordered")]
    Cyclic(usize),
}

/// Acyclic graph of components, in a deterministic topological order.
#[derive(Debug, Clone)]
pub struct CondensedDag {
    /// Component indices in topological order.
    pub order: Vec<usize>,
    /// Position of each component in `order`.
    pub rank: Vec<usize>,
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    /// Smallest program position among each component's members.
    pub first_position: Vec<usize>,
}

/// Topological order by Kahn's algorithm; among ready components the one
/// holding the earliest instruction goes first.
pub fn condense_and_sort(g: &Cdfg, s: &SccSet) -> Result<CondensedDag, CondenseError> {
    let n = s.len();
    let mut succ_sets = vec![BTreeSet::new(); n];
    for e in &g.edges {
        let (a, b) = (s.comp_of[e.src], s.comp_of[e.dst]);
        if a != b {
            succ_sets[a].insert(b);
        }
    }
    let succs: Vec<Vec<usize>> = succ_sets.into_iter().map(|x| x.into_iter().collect()).collect();
    let mut preds = vec![Vec::new(); n];
    for (a, ss) in succs.iter().enumerate() {
        for &b in ss {
            preds[b].push(a);
        }
    }
    let first_position: Vec<usize> = s
        .members
        .iter()
        .map(|m| m.iter().map(|&v| g.nodes[v].position).min().unwrap_or(usize::MAX))
        .collect();

    let mut indeg: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<(usize, usize)>> = (0..n)
        .filter(|&c| indeg[c] == 0)
        .map(|c| Reverse((first_position[c], c)))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((_, c))) = ready.pop() {
        order.push(c);
        for &d in &succs[c] {
            indeg[d] -= 1;
            if indeg[d] == 0 {
                ready.push(Reverse((first_position[d], d)));
            }
        }
    }
    if order.len() != n {
        return Err(CondenseError::Cyclic(n - order.len()));
    }
    let mut rank = vec![0; n];
    for (i, &c) in order.iter().enumerate() {
        rank[c] = i;
    }
    Ok(CondensedDag {
        order,
        rank,
        succs,
        preds,
        first_position,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdfg::{build_cdfg, find_sccs};
    use crate::ir::{parse_ir, LatencyTable};

    #[test]
    fn independent_chains_follow_program_order() {
        let g = build_cdfg(
            &parse_ir("func f(%x) {\nblock entry:\n %a = iadd %x, 1\n %b = iadd %x, 2\n %c = iadd %a, %b\n ret %c\n}")
                .unwrap(),
        );
        let s = find_sccs(&g, &LatencyTable::default());
        let d = condense_and_sort(&g, &s).unwrap();
        let names: Vec<String> = d
            .order
            .iter()
            .map(|&c| g.node_label(s.members[c][0]))
            .collect();
        assert_eq!(names, vec!["%a", "%b", "%c", "ret@entry.3"]);
        for (a, ss) in d.succs.iter().enumerate() {
            for &b in ss {
                assert!(d.rank[a] < d.rank[b]);
            }
        }
    }
}
