//! Emitted stage programs, run with queue semantics, behave like the
//! original kernels.

use dfpipe::bench::{generate, KernelKind, KernelSpec, Scale};
use dfpipe::ir::{interpret, parse_ir, print_ir, LatencyTable};
use dfpipe::partition::{check_plan, run_queued, Pipeline};
use dfpipe::testgen::random_program;

const FUEL: u64 = 500_000_000;

fn small(kind: KernelKind) -> Scale {
    match kind {
        KernelKind::Spmv => Scale::Spmv { dim: 32, density: 0.25 },
        KernelKind::Knapsack => Scale::Knapsack { capacity: 48, items: 8 },
        KernelKind::FloydWarshall => Scale::FloydWarshall { nodes: 12 },
        KernelKind::Dfs => Scale::Dfs { nodes: 60, degree: 4 },
    }
}

#[test]
fn bench_kernels_queued_equal_interpreter() {
    for kind in KernelKind::ALL {
        for seed in 0..3 {
            let g = generate(&KernelSpec::new(small(kind), seed)).unwrap();
            let (want, ret, _) = interpret(&g.program, g.memory.clone(), &g.args, FUEL).unwrap();
            for (dup, depth) in [(0, 16), (8, 16), (8, 4)] {
                let pl = Pipeline::build(&g.program, &LatencyTable::default(), dup, depth).unwrap();
                assert!(check_plan(&pl.plan, &pl.channels, &pl.graph, &pl.sccs, &pl.dag).is_empty());
                let (mem, r) = run_queued(&pl.stages, &pl.channels, &g.memory, &g.args, FUEL)
                    .unwrap_or_else(|e| panic!("{kind} seed {seed} dup {dup}: {e}"));
                assert_eq!(mem.digest(), want.digest(), "{kind} seed {seed} dup {dup} depth {depth}");
                assert_eq!(r.map(|v| v.to_string()), ret.map(|v| v.to_string()));
                g.oracle.check(&mem, r, 1e-6).unwrap();
            }
        }
    }
}

#[test]
fn random_programs_queued_equal_interpreter() {
    for seed in 1000..1050 {
        let (p, mem, args) = random_program(seed);
        let (want, ret, _) = interpret(&p, mem.clone(), &args, FUEL).unwrap();
        let pl = Pipeline::build(&p, &LatencyTable::default(), 8, 16).unwrap();
        let (got, r) = run_queued(&pl.stages, &pl.channels, &mem, &args, FUEL).unwrap();
        assert_eq!(got.digest(), want.digest(), "seed {seed}");
        assert_eq!(r.map(|v| v.to_string()), ret.map(|v| v.to_string()), "seed {seed}");
    }
}

#[test]
fn stage_programs_round_trip() {
    for kind in KernelKind::ALL {
        let g = generate(&KernelSpec::desk(kind, 0)).unwrap();
        let pl = Pipeline::build(&g.program, &LatencyTable::default(), 8, 16).unwrap();
        for st in &pl.stages {
            let text = print_ir(&st.program);
            let back = dfpipe::ir::parse_stage_ir(&text).unwrap();
            assert_eq!(print_ir(&back), text, "{kind} stage {}", st.stage);
        }
        let text = print_ir(&g.program);
        assert_eq!(print_ir(&parse_ir(&text).unwrap()), text);
    }
}
