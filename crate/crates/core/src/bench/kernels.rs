//! Kernel sources in the textual IR.

pub fn spmv(dim: u32, nnz: u32) -> String {
    format!(
        "\
; y = A * x, A in CSR form
func spmv(%n) {{
  space row_ptr elem=4 extent={rows} readonly stream
  space col_idx elem=4 extent={nnz} readonly stream
  space vals elem=4 extent={nnz} readonly stream
  space x elem=4 extent={dim} readonly
  space y elem=4 extent={dim} stream
block entry:
  %lo0 = load row_ptr[0]
  jmp row
block row:
  %r = phi [entry: 0, rlatch: %r1]
  %lo = phi [entry: %lo0, rlatch: %hi]
  %r1 = iadd %r, 1
  %hi = load row_ptr[%r1]
  jmp inner
block inner:
  %j = phi [row: %lo, body: %j1]
  %s = phi [row: 0.0, body: %s1]
  %c = icmp slt %j, %hi
  br %c, body, rlatch
block body:
  %col = load col_idx[%j]
  %a = load vals[%j]
  %xv = load x[%col]
  %p = fmul %a, %xv
  %s1 = fadd %s, %p
  %j1 = iadd %j, 1
  jmp inner
block rlatch:
  store y[%r], %s
  %rc = icmp slt %r1, %n
  br %rc, row, exit
block exit:
  ret
}}
",
        rows = dim + 1
    )
}

pub fn knapsack(capacity: u32, items: u32) -> String {
    format!(
        "\
; 0/1 knapsack; dp row i+1 is computed from row i
func knapsack(%n, %cap) {{
  space wt elem=4 extent={items} readonly stream
  space val elem=4 extent={items} readonly stream
  space dp elem=4 extent={cells} no_loop_carried
block entry:
  %width = iadd %cap, 1
  jmp item
block item:
  %i = phi [entry: 0, ilatch: %i1]
  %wi = load wt[%i]
  %vi = load val[%i]
  %prev = imul %i, %width
  %cur = iadd %prev, %width
  jmp cell
block cell:
  %w = phi [item: 0, join: %w1]
  %pa = iadd %prev, %w
  %a = load dp[%pa]
  %fits = icmp sge %w, %wi
  br %fits, take, join
block take:
  %pb = isub %pa, %wi
  %b0 = load dp[%pb]
  %b = iadd %b0, %vi
  %gt = icmp sgt %b, %a
  %m = select %gt, %b, %a
  jmp join
block join:
  %best = phi [cell: %a, take: %m]
  %ca = iadd %cur, %w
  store dp[%ca], %best
  %w1 = iadd %w, 1
  %wc = icmp sle %w1, %cap
  br %wc, cell, ilatch
block ilatch:
  %i1 = iadd %i, 1
  %ic = icmp slt %i1, %n
  br %ic, item, exit
block exit:
  %last = imul %n, %width
  %fi = iadd %last, %cap
  %res = load dp[%fi]
  ret %res
}}
",
        cells = (items + 1) * (capacity + 1)
    )
}

pub fn floyd_warshall(nodes: u32) -> String {
    format!(
        "\
; all-pairs shortest paths, in place
func floyd_warshall(%n) {{
  space dist elem=4 extent={cells} no_loop_carried
block entry:
  jmp kloop
block kloop:
  %k = phi [entry: 0, klatch: %k1]
  %kn = imul %k, %n
  jmp iloop
block iloop:
  %i = phi [kloop: 0, ilatch: %i1]
  %in = imul %i, %n
  %ik = iadd %in, %k
  %dik = load dist[%ik]
  jmp jloop
block jloop:
  %j = phi [iloop: 0, jlatch: %j1]
  %kj = iadd %kn, %j
  %dkj = load dist[%kj]
  %ij = iadd %in, %j
  %dij = load dist[%ij]
  %s = iadd %dik, %dkj
  %lt = icmp slt %s, %dij
  br %lt, update, jlatch
block update:
  store dist[%ij], %s
  jmp jlatch
block jlatch:
  %j1 = iadd %j, 1
  %jc = icmp slt %j1, %n
  br %jc, jloop, ilatch
block ilatch:
  %i1 = iadd %i, 1
  %ic = icmp slt %i1, %n
  br %ic, iloop, klatch
block klatch:
  %k1 = iadd %k, 1
  %kc = icmp slt %k1, %n
  br %kc, kloop, exit
block exit:
  ret
}}
",
        cells = nodes * nodes
    )
}

pub fn dfs(nodes: u32, degree: u32) -> String {
    format!(
        "\
; iterative DFS from node 0 over a fixed-degree adjacency list
func dfs(%deg) {{
  space adj elem=4 extent={edges} readonly
  space visited elem=4 extent={nodes}
  space stack elem=4 extent={nodes}
block entry:
  store visited[0], 1
  store stack[0], 0
  jmp pop
block pop:
  %sp = phi [entry: 1, more: %sp3]
  %cnt = phi [entry: 1, more: %cnt3]
  %top = isub %sp, 1
  %v = load stack[%top]
  %base = imul %v, %deg
  jmp scan
block scan:
  %e = phi [pop: 0, next: %e1]
  %sp2 = phi [pop: %top, next: %sp3]
  %cnt2 = phi [pop: %cnt, next: %cnt3]
  %ai = iadd %base, %e
  %u = load adj[%ai]
  %seen = load visited[%u]
  %new = icmp eq %seen, 0
  br %new, visit, next
block visit:
  store visited[%u], 1
  store stack[%sp2], %u
  %sp4 = iadd %sp2, 1
  %cnt4 = iadd %cnt2, 1
  jmp next
block next:
  %sp3 = phi [scan: %sp2, visit: %sp4]
  %cnt3 = phi [scan: %cnt2, visit: %cnt4]
  %e1 = iadd %e, 1
  %ec = icmp slt %e1, %deg
  br %ec, scan, more
block more:
  %nonempty = icmp sgt %sp3, 0
  br %nonempty, pop, exit
block exit:
  ret %cnt3
}}
",
        edges = nodes * degree
    )
}
