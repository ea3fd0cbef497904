//! Control-flow analyses over basic-block graphs: dominators,
//! post-dominators, control dependence and natural loops.

use std::collections::BTreeSet;

use crate::ir::Program;

#[derive(Debug, Clone)]
pub struct Cfg {
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
}

impl Cfg {
    pub fn from_program(p: &Program) -> Self {
        let succs: Vec<Vec<usize>> = p
            .blocks
            .iter()
            .map(|b| {
                let mut s: Vec<usize> = Vec::new();
                for label in b.successors() {
                    if let Some(i) = p.block_index(label) {
                        if !s.contains(&i) {
                            s.push(i);
                        }
                    }
                }
                s
            })
            .collect();
        Self::from_succs(succs)
    }

    pub fn from_succs(succs: Vec<Vec<usize>>) -> Self {
        let mut preds = vec![Vec::new(); succs.len()];
        for (u, ss) in succs.iter().enumerate() {
            for &v in ss {
                if !preds[v].contains(&u) {
                    preds[v].push(u);
                }
            }
        }
        for p in &mut preds {
            p.sort_unstable();
        }
        Self { succs, preds }
    }

    pub fn len(&self) -> usize {
        self.succs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succs.is_empty()
    }

    /// Reverse post-order of the blocks reachable from the entry (block 0).
    pub fn reverse_postorder(&self) -> Vec<usize> {
        rpo(self.len(), 0, |u| &self.succs[u])
    }

    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        for u in self.reverse_postorder() {
            seen[u] = true;
        }
        seen
    }

    /// Immediate dominators; `None` for the entry and unreachable blocks.
    pub fn dominators(&self) -> Vec<Option<usize>> {
        let order = self.reverse_postorder();
        idoms(self.len(), 0, &order, |u| &self.preds[u])
    }

    /// Immediate post-dominators. Blocks whose immediate post-dominator is
    /// the virtual exit map to `None`.
    pub fn post_dominators(&self) -> Vec<Option<usize>> {
        let n = self.len();
        let exit = n;
        // Reverse graph with a virtual exit wired to every block without
        // successors.
        let mut rsuccs: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        let mut rpreds: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for (u, ss) in self.succs.iter().enumerate() {
            if ss.is_empty() {
                rsuccs[exit].push(u);
                rpreds[u].push(exit);
            }
            for &v in ss {
                rsuccs[v].push(u);
                rpreds[u].push(v);
            }
        }
        let order = rpo(n + 1, exit, |u| &rsuccs[u]);
        let raw = idoms(n + 1, exit, &order, |u| &rpreds[u]);
        raw.into_iter()
            .take(n)
            .map(|d| d.filter(|&x| x != exit))
            .collect()
    }

    /// For every block, the blocks whose terminating branch it is control
    /// dependent on (sorted).
    pub fn control_dependence(&self) -> Vec<Vec<usize>> {
        let ipdom = self.post_dominators();
        let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.len()];
        for a in 0..self.len() {
            if self.succs[a].len() < 2 {
                continue;
            }
            for &b in &self.succs[a] {
                let stop = ipdom[a];
                let mut runner = Some(b);
                while let Some(r) = runner {
                    if Some(r) == stop {
                        break;
                    }
                    deps[r].insert(a);
                    runner = ipdom[r];
                }
            }
        }
        deps.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    pub fn dominates(idom: &[Option<usize>], a: usize, b: usize) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            cur = idom[c];
        }
        false
    }

    /// Edges `u -> h` where `h` dominates `u`.
    pub fn back_edges(&self) -> Vec<(usize, usize)> {
        let idom = self.dominators();
        let reach = self.reachable();
        let mut out = Vec::new();
        for u in 0..self.len() {
            if !reach[u] {
                continue;
            }
            for &h in &self.succs[u] {
                if Self::dominates(&idom, h, u) {
                    out.push((u, h));
                }
            }
        }
        out
    }

    /// A graph is reducible when every retreating edge of a depth-first
    /// traversal is a back edge (its target dominates its source).
    pub fn is_reducible(&self) -> bool {
        let idom = self.dominators();
        let order = self.reverse_postorder();
        let mut pos = vec![usize::MAX; self.len()];
        for (i, &u) in order.iter().enumerate() {
            pos[u] = i;
        }
        for &u in &order {
            for &v in &self.succs[u] {
                if pos[v] <= pos[u] && !Self::dominates(&idom, v, u) {
                    return false;
                }
            }
        }
        true
    }

    pub fn loops(&self) -> LoopForest {
        let mut headers: Vec<usize> = Vec::new();
        let mut bodies: Vec<BTreeSet<usize>> = Vec::new();
        for (latch, header) in self.back_edges() {
            let idx = match headers.iter().position(|&h| h == header) {
                Some(i) => i,
                None => {
                    headers.push(header);
                    bodies.push(BTreeSet::from([header]));
                    headers.len() - 1
                }
            };
            let body = &mut bodies[idx];
            let mut stack = vec![latch];
            while let Some(x) = stack.pop() {
                if body.insert(x) {
                    stack.extend(self.preds[x].iter().copied());
                }
            }
        }
        let n = self.len();
        let mut innermost: Vec<Option<usize>> = vec![None; n];
        for b in 0..n {
            innermost[b] = (0..headers.len())
                .filter(|&l| bodies[l].contains(&b))
                .min_by_key(|&l| (bodies[l].len(), headers[l]));
        }
        LoopForest {
            headers,
            bodies,
            innermost,
        }
    }
}

/// Natural loops keyed by header.
#[derive(Debug, Clone)]
pub struct LoopForest {
    pub headers: Vec<usize>,
    pub bodies: Vec<BTreeSet<usize>>,
    /// Index (into `headers`) of the innermost loop containing each block.
    pub innermost: Vec<Option<usize>>,
}

impl LoopForest {
    pub fn is_header(&self, b: usize) -> bool {
        self.headers.contains(&b)
    }

    pub fn in_any_loop(&self, b: usize) -> bool {
        self.innermost[b].is_some()
    }

    /// True when some loop contains both blocks.
    pub fn share_loop(&self, a: usize, b: usize) -> bool {
        self.bodies.iter().any(|body| body.contains(&a) && body.contains(&b))
    }
}

fn rpo<'a>(n: usize, start: usize, succ: impl Fn(usize) -> &'a Vec<usize>) -> Vec<usize> {
    let mut visited = vec![false; n];
    let mut post = Vec::with_capacity(n);
    let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
    visited[start] = true;
    while let Some((u, i)) = stack.pop() {
        let ss = succ(u);
        if i < ss.len() {
            stack.push((u, i + 1));
            let v = ss[i];
            if !visited[v] {
                visited[v] = true;
                stack.push((v, 0));
            }
        } else {
            post.push(u);
        }
    }
    post.reverse();
    post
}

/// Cooper, Harvey and Kennedy's iterative dominator algorithm.
fn idoms<'a>(
    n: usize,
    start: usize,
    order: &[usize],
    pred: impl Fn(usize) -> &'a Vec<usize>,
) -> Vec<Option<usize>> {
    let mut pos = vec![usize::MAX; n];
    for (i, &u) in order.iter().enumerate() {
        pos[u] = i;
    }
    let mut idom: Vec<Option<usize>> = vec![None; n];
    idom[start] = Some(start);
    let mut changed = true;
    while changed {
        changed = false;
        for &b in order.iter().skip(1) {
            let mut new_idom: Option<usize> = None;
            for &p in pred(b) {
                if idom[p].is_none() || pos[p] == usize::MAX {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => {
                        let (mut f1, mut f2) = (p, cur);
                        while f1 != f2 {
                            while pos[f1] > pos[f2] {
                                f1 = idom[f1].unwrap();
                            }
                            while pos[f2] > pos[f1] {
                                f2 = idom[f2].unwrap();
                            }
                        }
                        f1
                    }
                });
            }
            if new_idom.is_some() && idom[b] != new_idom {
                idom[b] = new_idom;
                changed = true;
            }
        }
    }
    idom[start] = None;
    idom
}

#[cfg(test)]
mod tests {
    use super::*;

    // entry(0) -> header(1) -> body(2) -> header ; header -> exit(3)
    fn simple_loop() -> Cfg {
        Cfg::from_succs(vec![vec![1], vec![2, 3], vec![1], vec![]])
    }

    #[test]
    fn dominators_of_a_loop() {
        let g = simple_loop();
        assert_eq!(g.dominators(), vec![None, Some(0), Some(1), Some(1)]);
        assert_eq!(g.post_dominators(), vec![Some(1), Some(3), Some(1), None]);
    }

    #[test]
    fn loop_header_controls_itself_and_body() {
        let g = simple_loop();
        let cd = g.control_dependence();
        assert_eq!(cd[1], vec![1]);
        assert_eq!(cd[2], vec![1]);
        assert!(cd[0].is_empty() && cd[3].is_empty());
    }

    #[test]
    fn diamond_control_dependence() {
        // 0 -> {1, 2} -> 3
        let g = Cfg::from_succs(vec![vec![1, 2], vec![3], vec![3], vec![]]);
        let cd = g.control_dependence();
        assert_eq!(cd[1], vec![0]);
        assert_eq!(cd[2], vec![0]);
        assert!(cd[3].is_empty());
    }

    #[test]
    fn natural_loops_and_nesting() {
        // 0 -> 1(outer hdr) -> 2(inner hdr) -> 3 -> 2 ; 2 -> 4 -> 1 ; 1 -> 5
        let g = Cfg::from_succs(vec![vec![1], vec![2, 5], vec![3, 4], vec![2], vec![1], vec![]]);
        let loops = g.loops();
        assert_eq!(loops.headers.len(), 2);
        let inner = loops.innermost[3].unwrap();
        assert_eq!(loops.headers[inner], 2);
        let outer = loops.innermost[4].unwrap();
        assert_eq!(loops.headers[outer], 1);
        assert!(loops.share_loop(3, 4));
        assert!(!loops.in_any_loop(5));
        assert!(g.is_reducible());
    }

    #[test]
    fn irreducible_graph_detected() {
        // 0 -> {1, 2}, 1 <-> 2
        let g = Cfg::from_succs(vec![vec![1, 2], vec![2], vec![1]]);
        assert!(!g.is_reducible());
    }
}
