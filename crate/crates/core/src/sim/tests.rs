use super::*;
use crate::ir::{interpret, parse_ir};
use crate::partition::Pipeline;

fn pipeline(p: &Program, dup: usize, depth: usize) -> Pipeline {
    Pipeline::build(p, &LatencyTable::default(), dup, depth).unwrap()
}

fn run_pipe(p: &Program, cfg: &SimConfig, mem: &MemoryImage, args: &[Value]) -> SimReport {
    let pl = pipeline(p, 8, 16);
    simulate_pipeline(&pl.stages, &pl.channels, &pl.graph, &pl.sccs, cfg, mem, args).unwrap()
}

fn counted(body: &str, spaces: &str) -> Program {
    parse_ir(&format!(
        "func k(%n, %k) {{\n{spaces}\nblock entry:\n jmp loop\nblock loop:\n %i = phi [entry: 0, loop: %i1]\n\
         {body}\n %i1 = iadd %i, 1\n %c = icmp slt %i1, %n\n br %c, loop, exit\nblock exit:\n ret\n}}"
    ))
    .unwrap()
}

fn check_sums(r: &SimReport) {
    for s in &r.stages {
        assert_eq!(s.total(), r.total_cycles, "stage {} of {}", s.index, r.engine);
    }
    for f in &r.fifos {
        assert_eq!(f.pushes, f.pops, "{}", f.name);
    }
}

#[test]
fn ii_examples() {
    let p = counted(" %v = iadd %i, 3", "");
    let g = build_cdfg(&p);
    let s = find_sccs(&g, &LatencyTable::default());
    let v = g.def_of("v").unwrap();
    assert_eq!(compute_ii(&[s.comp_of[v]], &g, &s, &LatencyTable::default()), 1);
    let p = parse_ir(
        "func f(%t) {\nblock entry:\n jmp body\nblock body:\n %s = phi [entry: 0.0, body: %s2]\n %s2 = fadd %s, %t\n jmp body\n}",
    )
    .unwrap();
    let g = build_cdfg(&p);
    let s = find_sccs(&g, &LatencyTable::default());
    let c = s.comp_of[g.def_of("s2").unwrap()];
    assert_eq!(compute_ii(&[c], &g, &s, &LatencyTable::default()), 5);
}

#[test]
fn integer_loop_golden_cycles() {
    // Counter recurrence phi->iadd gives II 2; entry and exit blocks cost
    // one cycle each, plus one drain cycle.
    let p = counted(" %v = iadd %i, 3", "");
    let mem = MemoryImage::zeroed(&p.spaces);
    let r = simulate_monolithic(&p, &SimConfig::default(), &mem, &[Value::Int(100), Value::Int(0)]).unwrap();
    assert_eq!(r.total_cycles, 203);
    check_sums(&r);
}

#[test]
fn always_missing_load_costs_at_least_n_times_latency() {
    let p = counted(
        " %a = imul %i, 16\n %v = load a[%a]\n %w = iadd %v, 1",
        " space a elem=4 extent=1600",
    );
    let mem = MemoryImage::zeroed(&p.spaces);
    let r = simulate_monolithic(&p, &SimConfig::default(), &mem, &[Value::Int(100), Value::Int(0)]).unwrap();
    assert!(r.total_cycles >= 100 * 80, "{}", r.total_cycles);
    assert_eq!(r.memory.misses, 100);
    check_sums(&r);
}

#[test]
fn zero_latency_memory_matches_compute_only_schedule() {
    let with_mem = counted(" %v = load a[%i]\n %w = iadd %v, 1", " space a elem=4 extent=100");
    let without = counted(" %v = iadd %i, 0\n %w = iadd %v, 1", " space a elem=4 extent=100");
    let mut cfg = SimConfig::default();
    cfg.mem.hit_latency = 0;
    cfg.mem.miss_latency = 0;
    let mem = MemoryImage::zeroed(&with_mem.spaces);
    let args = [Value::Int(100), Value::Int(0)];
    let a = simulate_monolithic(&with_mem, &cfg, &mem, &args).unwrap();
    let b = simulate_monolithic(&without, &cfg, &mem, &args).unwrap();
    assert_eq!(a.total_cycles, b.total_cycles);
}

#[test]
fn single_stage_pipeline_tracks_monolithic() {
    let p = counted(" %v = iadd %i, 3\n %w = imul %v, %v", "");
    let mem = MemoryImage::zeroed(&p.spaces);
    let args = [Value::Int(500), Value::Int(0)];
    let cfg = SimConfig::default();
    let m = simulate_monolithic(&p, &cfg, &mem, &args).unwrap();
    let pl = pipeline(&p, 8, 16);
    assert_eq!(pl.stages.len(), 1);
    let q = simulate_pipeline(&pl.stages, &pl.channels, &pl.graph, &pl.sccs, &cfg, &mem, &args).unwrap();
    let ratio = q.total_cycles as f64 / m.total_cycles as f64;
    assert!((ratio - 1.0).abs() <= 0.05, "{} vs {}", q.total_cycles, m.total_cycles);
}

#[test]
fn slow_consumer_bounds_throughput() {
    // Stage 0: counter + load (II 2); stage 1: a 4-op integer recurrence.
    let p = parse_ir(
        "func k(%n) {\n space a elem=4 extent=1000 readonly stream\nblock entry:\n jmp loop\nblock loop:\n\
         %i = phi [entry: 0, loop: %i1]\n %s = phi [entry: 0, loop: %s3]\n %v = load a[%i]\n\
         %s1 = iadd %s, %v\n %s2 = ixor %s1, 3\n %s3 = iadd %s2, 1\n\
         %i1 = iadd %i, 1\n %c = icmp slt %i1, %n\n br %c, loop, exit\nblock exit:\n ret %s3\n}",
    )
    .unwrap();
    let mem = MemoryImage::zeroed(&p.spaces);
    let cfg = SimConfig::default();
    let r = run_pipe(&p, &cfg, &mem, &[Value::Int(1000)]);
    assert_eq!(r.stages.len(), 2);
    assert_eq!(r.stages[1].ii, 4);
    assert!(r.total_cycles >= 4000 && r.total_cycles <= 4000 + 200, "{} {:#?}", r.total_cycles, r.stages);
    check_sums(&r);
}

#[test]
fn slow_consumer_hides_misses() {
    let p = parse_ir(
        "func k(%n) {\n space a elem=4 extent=16000\nblock entry:\n jmp loop\nblock loop:\n\
         %i = phi [entry: 0, loop: %i1]\n %s = phi [entry: 0.0, loop: %s1]\n %a = imul %i, 16\n %v = load a[%a]\n\
         %s1 = fadd %s, %v\n %i1 = iadd %i, 1\n %c = icmp slt %i1, %n\n br %c, loop, exit\nblock exit:\n ret %s1\n}",
    )
    .unwrap();
    let mut mem = MemoryImage::zeroed(&p.spaces);
    mem.fill("a", (0..16000).map(|i| Value::Float(i as f32)));
    let mut cfg = SimConfig::default();
    cfg.mem.max_outstanding = 16;
    let args = [Value::Int(1000)];
    let r = run_pipe(&p, &cfg, &mem, &args);
    assert!(r.total_cycles as f64 <= 1.25 * 5.0 * 1000.0, "{}", r.total_cycles);
    assert!(r.memory.misses >= 1000);
    let m = simulate_monolithic(&p, &cfg, &mem, &args).unwrap();
    assert!(m.total_cycles > 3 * r.total_cycles);
    let (_, want, _) = interpret(&p, mem.clone(), &args, 1_000_000).unwrap();
    assert_eq!(r.return_value, want.map(|v| v.to_string()));
    assert_eq!(m.return_value, r.return_value);
    check_sums(&r);
    check_sums(&m);
}

#[test]
fn miss_latency_is_monotone() {
    let p = counted(
        " %a = imul %i, 7\n %b = iand %a, 1023\n %v = load a[%b]\n store a[%i], %v",
        " space a elem=4 extent=1024",
    );
    let mem = MemoryImage::zeroed(&p.spaces);
    let args = [Value::Int(300), Value::Int(0)];
    let mut prev = (0, 0);
    for lat in [0, 10, 40, 80, 160] {
        let mut cfg = SimConfig::default();
        cfg.mem.miss_latency = lat;
        let m = simulate_monolithic(&p, &cfg, &mem, &args).unwrap().total_cycles;
        let q = run_pipe(&p, &cfg, &mem, &args).total_cycles;
        assert!(m >= prev.0 && q >= prev.1, "lat {lat}: {m} {q} after {prev:?}");
        prev = (m, q);
    }
}

#[test]
fn reports_are_deterministic() {
    let p = counted(" %v = load a[%i]\n store a[%i], %v", " space a elem=4 extent=100");
    let mem = MemoryImage::zeroed(&p.spaces);
    let args = [Value::Int(100), Value::Int(0)];
    let cfg = SimConfig {
        trace: true,
        ..SimConfig::default()
    };
    let a = run_pipe(&p, &cfg, &mem, &args);
    let b = run_pipe(&p, &cfg, &mem, &args);
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(trace_csv(&a.trace), trace_csv(&b.trace));
}

#[test]
fn compare_examples() {
    let p = counted(" %v = iadd %i, 3", "");
    let mem = MemoryImage::zeroed(&p.spaces);
    let r = simulate_monolithic(&p, &SimConfig::default(), &mem, &[Value::Int(10), Value::Int(0)]).unwrap();
    assert_eq!(compare(&r, &r).unwrap().speedup, 1.0);
    let mut fast = r.clone();
    let mut slow = r.clone();
    slow.total_cycles = 10000;
    fast.total_cycles = 2000;
    assert_eq!(compare(&slow, &fast).unwrap().speedup, 5.0);
    fast.digest = "x".into();
    assert!(compare(&slow, &fast).is_err());
}
