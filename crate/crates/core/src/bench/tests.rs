use super::*;
use crate::ir::{interpret, print_ir, validate, LatencyTable};
use crate::partition::Pipeline;

const FUEL: u64 = 200_000_000;

fn small(kind: KernelKind) -> Scale {
    match kind {
        KernelKind::Spmv => Scale::Spmv { dim: 24, density: 0.3 },
        KernelKind::Knapsack => Scale::Knapsack { capacity: 40, items: 6 },
        KernelKind::FloydWarshall => Scale::FloydWarshall { nodes: 9 },
        KernelKind::Dfs => Scale::Dfs { nodes: 40, degree: 3 },
    }
}

#[test]
fn same_spec_same_bytes() {
    for kind in KernelKind::ALL {
        let spec = KernelSpec::new(small(kind), 7);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(print_ir(&a.program), print_ir(&b.program));
        assert_eq!(a.memory.digest(), b.memory.digest());
        let c = generate(&KernelSpec::new(small(kind), 8)).unwrap();
        assert_ne!(a.memory.digest(), c.memory.digest(), "{kind}");
    }
}

#[test]
fn kernels_are_valid_and_round_trip() {
    for kind in KernelKind::ALL {
        let g = generate(&KernelSpec::desk(kind, 1)).unwrap();
        assert_eq!(validate(&g.program), vec![], "{kind}");
        let text = print_ir(&g.program);
        assert_eq!(print_ir(&parse_ir(&text).unwrap()), text, "{kind}");
    }
}

#[test]
fn spmv_shape() {
    let g = generate(&KernelSpec::desk(KernelKind::Spmv, 0)).unwrap();
    assert_eq!(g.program.spaces.len(), 5);
    let names: Vec<&str> = g.program.spaces.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["row_ptr", "col_idx", "vals", "x", "y"]);
    let loops = crate::cfg::Cfg::from_program(&g.program).loops().headers.len();
    assert_eq!(loops, 2);
    // Density honoured within a few percent.
    let nnz = g.memory.space("vals").unwrap().len() as f64;
    assert!((nnz / (256.0 * 256.0) - 0.25).abs() < 0.02, "{nnz}");
}

#[test]
fn interpreter_matches_oracle_small() {
    for kind in KernelKind::ALL {
        for seed in 0..20 {
            let g = generate(&KernelSpec::new(small(kind), seed)).unwrap();
            let (mem, ret, _) = interpret(&g.program, g.memory.clone(), &g.args, FUEL).unwrap();
            g.oracle.check(&mem, ret, 1e-6).unwrap_or_else(|e| panic!("{kind} seed {seed}: {e}"));
        }
    }
}

#[test]
fn interpreter_matches_oracle_desk() {
    for kind in KernelKind::ALL {
        for seed in 0..3 {
            let g = generate(&KernelSpec::desk(kind, seed)).unwrap();
            let (mem, ret, _) = interpret(&g.program, g.memory.clone(), &g.args, FUEL).unwrap();
            g.oracle.check(&mem, ret, 1e-6).unwrap_or_else(|e| panic!("{kind} seed {seed}: {e}"));
        }
    }
}

#[test]
fn oracle_detects_corruption() {
    let g = generate(&KernelSpec::new(small(KernelKind::Knapsack), 3)).unwrap();
    let (mut mem, ret, _) = interpret(&g.program, g.memory.clone(), &g.args, FUEL).unwrap();
    assert!(g.oracle.check(&mem, ret, 1e-6).is_ok());
    assert!(g.oracle.check(&mem, Some(Value::Int(-1)), 1e-6).is_err());
    mem.space_mut("dp").unwrap()[5] = Value::Int(12345);
    assert!(g.oracle.check(&mem, ret, 1e-6).is_err());
}

#[test]
fn invalid_parameters_rejected() {
    let bad = [
        Scale::Spmv { dim: 0, density: 0.25 },
        Scale::Spmv { dim: 8, density: 0.0 },
        Scale::Spmv { dim: 8, density: 1.5 },
        Scale::Knapsack { capacity: 0, items: 3 },
        Scale::FloydWarshall { nodes: 1 },
        Scale::Dfs { nodes: 10, degree: 0 },
    ];
    for s in bad {
        assert!(matches!(generate(&KernelSpec::new(s, 0)), Err(BenchError::InvalidParameter { .. })), "{s:?}");
    }
}

#[test]
fn catalog() {
    let c = kernel_catalog();
    assert_eq!(c.len(), 4);
    let kinds: Vec<KernelKind> = c.iter().map(|e| e.kind).collect();
    assert_eq!(kinds, KernelKind::ALL);
    let dfs = c.iter().find(|e| e.kind == KernelKind::Dfs).unwrap();
    assert!(dfs.memory_cycle);
    let ks = c.iter().find(|e| e.kind == KernelKind::Knapsack).unwrap();
    assert!(ks.needs_no_loop_carried && ks.annotations.contains("no_loop_carried"));
    for kind in KernelKind::ALL {
        assert_eq!(KernelKind::from_name(kind.name()), Some(kind));
    }
}

fn plan_of(kind: KernelKind) -> (Generated, Pipeline) {
    let g = generate(&KernelSpec::desk(kind, 0)).unwrap();
    let pl = Pipeline::build(&g.program, &LatencyTable::default(), 0, 16).unwrap();
    (g, pl)
}

#[test]
fn partition_shapes() {
    for kind in [KernelKind::Spmv, KernelKind::Knapsack, KernelKind::FloydWarshall] {
        let (_, pl) = plan_of(kind);
        assert!(pl.stages.len() >= 3, "{kind}: {} stages", pl.stages.len());
    }
    let (_, pl) = plan_of(KernelKind::Dfs);
    let g = &pl.graph;
    // The in-loop pop and push share one cyclic component, hence one stage.
    let cyc: Vec<usize> = (0..g.len())
        .filter(|&n| g.instruction(n).kind.space() == Some("stack"))
        .filter(|&n| pl.sccs.cyclic[pl.sccs.comp_of[n]])
        .collect();
    assert_eq!(cyc.len(), 2);
    assert_eq!(pl.sccs.comp_of[cyc[0]], pl.sccs.comp_of[cyc[1]]);
    assert_eq!(pl.plan.stage_of[cyc[0]], pl.plan.stage_of[cyc[1]]);
}

#[test]
fn spmv_inner_loop_stages() {
    let (_, pl) = plan_of(KernelKind::Spmv);
    let g = &pl.graph;
    let stage = |label: &str| {
        let n = (0..g.len()).find(|&n| g.node_label(n) == label).unwrap_or_else(|| panic!("{label}"));
        pl.plan.stage_of[n]
    };
    let (j, col, a, xv, s1) = (stage("%j"), stage("%col"), stage("%a"), stage("%xv"), stage("%s1"));
    assert_eq!(j, col);
    assert!(col < a && a < xv && xv < s1, "{col} {a} {xv} {s1}");
    assert!(stage("store@rlatch.0") >= s1);
}

#[test]
fn nested_no_loop_carried_spaces_get_sync_pairs() {
    use crate::partition::{check_plan, Payload};
    for (kind, headers) in [(KernelKind::Knapsack, &["cell"][..]), (KernelKind::FloydWarshall, &["iloop", "jloop"][..])] {
        let (_, pl) = plan_of(kind);
        let sync: Vec<_> = pl.channels.iter().filter(|c| c.payload == Payload::Sync).collect();
        assert!(!sync.is_empty(), "{kind}");
        assert_eq!(sync.len() % 2, 0);
        for c in &sync {
            assert!(headers.contains(&pl.graph.program.blocks[c.sync_loop.unwrap()].label.as_str()));
            assert!(sync.iter().any(|o| o.producer == c.consumer && o.consumer == c.producer));
        }
        assert!(check_plan(&pl.plan, &pl.channels, &pl.graph, &pl.sccs, &pl.dag).is_empty());
    }
    // SpMV and DFS have no such space.
    for kind in [KernelKind::Spmv, KernelKind::Dfs] {
        let (_, pl) = plan_of(kind);
        assert!(pl.channels.iter().all(|c| c.payload != Payload::Sync));
    }
}

#[test]
fn floyd_warshall_stays_correct_beyond_fifo_depth() {
    // Rows longer than the FIFO depth used to let a later stage lag a whole
    // row behind the stage reading `dist`.
    let spec = KernelSpec::new(Scale::FloydWarshall { nodes: 20 }, 3);
    let gen = generate(&spec).unwrap();
    let (want, _, _) = interpret(&gen.program, gen.memory.clone(), &gen.args, FUEL).unwrap();
    for depth in [1, 2, 16] {
        let pl = Pipeline::build(&gen.program, &LatencyTable::default(), 0, depth).unwrap();
        let (got, _) = crate::partition::run_queued(&pl.stages, &pl.channels, &gen.memory, &gen.args, FUEL).unwrap();
        assert_eq!(got.digest(), want.digest(), "depth {depth}");
    }
}
