use std::fs;
use std::path::Path;

use super::*;
use crate::bench::{KernelKind, Scale};

fn run(args: &[&str]) -> u8 {
    main_with(std::iter::once("dfpipe").chain(args.iter().copied()))
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn unknown_key_rejected_with_name() {
    let e = RunConfig::parse("kernel = spmv\nmem.miss_latncy = 3\n").unwrap_err();
    assert_eq!(e, ConfigError::UnknownKey("mem.miss_latncy".into()));
    assert!(e.to_string().contains("mem.miss_latncy"));
    assert!(RunConfig::parse("just words").is_err());
}

#[test]
fn later_settings_win_and_preset_applies_first() {
    let mut c = RunConfig::parse("kernel = spmv # comment\nmem.miss_latency = 5\nmem.preset = hp\n").unwrap();
    let r = c.resolve().unwrap();
    assert_eq!(r.sim.mem.miss_latency, 5);
    assert!(!r.sim.mem.cache_enabled);
    c.set("mem.miss_latency", "7").unwrap();
    assert_eq!(c.resolve().unwrap().sim.mem.miss_latency, 7);
}

#[test]
fn resolve_defaults_and_overrides() {
    let mut c = RunConfig::new();
    c.set("kernel", "knapsack").unwrap();
    c.set("knapsack.items", "5").unwrap();
    c.set("latency.fmul", "3").unwrap();
    c.set("latency.fdiv.pipelined", "true").unwrap();
    c.set("policy.dp", "uncached-burst").unwrap();
    let r = c.resolve().unwrap();
    match r.input {
        Input::Kernel(spec) => assert_eq!(spec.scale, Scale::Knapsack { capacity: 256, items: 5 }),
        _ => panic!(),
    }
    assert_eq!(r.sim.latency.get(crate::ir::Opcode::Fmul).unwrap().cycles, 3);
    assert!(r.sim.latency.get(crate::ir::Opcode::Fdiv).unwrap().pipelined);
    assert_eq!(r.fifo_depth, crate::partition::DEFAULT_FIFO_DEPTH);
    let echo = r.echo();
    assert_eq!(echo["knapsack.items"], "5");
    assert_eq!(echo["policy.dp"], "uncached-burst");
    assert!(!echo.contains_key("out"));
}

#[test]
fn bad_values_rejected() {
    for (k, v) in [
        ("fifo_depth", "0"),
        ("mem.miss_latency", "abc"),
        ("engines", "all"),
        ("trace", "maybe"),
        ("scale", "huge"),
        ("spmv.dim", "3"),
        ("mem.cache_capacity", "100"),
    ] {
        let mut c = RunConfig::new();
        c.set("kernel", "knapsack").unwrap();
        c.set(k, v).unwrap();
        assert!(c.resolve().is_err(), "{k}={v}");
    }
    assert!(RunConfig::new().resolve().is_err());
    assert!(RunConfig::new().set("latency.br", "2").is_err());
}

#[test]
fn exit_code_two_on_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "kernel = spmv\nbogus_key = 1\n").unwrap();
    assert_eq!(run(&["run", "--config", &s(&cfg), "--out", &s(dir.path())]), 2);
    assert_eq!(run(&["run", "--kernel", "nope"]), 2);
    assert_eq!(run(&["run", "--kernel", "spmv", "--set", "what=1"]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
}

fn small_run(extra: &[&str]) -> (u8, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let mut args = vec!["run", "--kernel", "spmv", "--set", "spmv.dim=16", "--out"];
    let o = s(&out);
    args.push(&o);
    args.extend_from_slice(extra);
    (run(&args), dir)
}

#[test]
fn run_writes_artifacts() {
    let (code, dir) = small_run(&["--trace", "--dump-cdfg"]);
    assert_eq!(code, 0);
    let out = dir.path().join("o");
    for f in [
        "config.txt",
        "input.ir",
        "manifest.json",
        "stages/stage_0.ir",
        "report_monolithic.json",
        "report_pipeline.json",
        "comparison.csv",
        "trace_pipeline.csv",
        "gantt_pipeline.txt",
        "cdfg.txt",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report_pipeline.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["spmv.dim"], "16");
    let cmp = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let m: f64 = serde_json::from_str::<serde_json::Value>(&fs::read_to_string(out.join("report_monolithic.json")).unwrap())
        .unwrap()["report"]["total_cycles"]
        .as_f64()
        .unwrap();
    let p = report["report"]["total_cycles"].as_f64().unwrap();
    assert!(cmp.contains(&format!("speedup (monolithic/pipeline) = {}", m / p)), "{cmp}");
    assert!(cmp.contains("agree = true"));
}

#[test]
fn monolithic_only_skips_pipeline() {
    let (code, dir) = small_run(&["--engines", "monolithic"]);
    assert_eq!(code, 0);
    let out = dir.path().join("o");
    assert!(!out.join("manifest.json").exists());
    assert!(!out.join("report_pipeline.json").exists());
    assert!(!out.join("stages").exists());
    let cmp = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(cmp.contains("pipeline,skipped"));
}

#[test]
fn ir_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let ir = dir.path().join("k.ir");
    fs::write(
        &ir,
        "func k(%n) {\n space a elem=4 extent=8\nblock entry:\n jmp loop\nblock loop:\n\
         %i = phi [entry: 0, loop: %i1]\n %v = load a[%i]\n %w = iadd %v, 1\n store a[%i], %w\n\
         %i1 = iadd %i, 1\n %c = icmp slt %i1, %n\n br %c, loop, exit\nblock exit:\n ret %i1\n}\n",
    )
    .unwrap();
    let out = s(&dir.path().join("o"));
    assert_eq!(run(&["run", "--ir-file", &s(&ir), "--set", "args=8", "--out", &out]), 0);
    // Out-of-bounds trip count traps in the interpreter.
    assert_eq!(run(&["run", "--ir-file", &s(&ir), "--set", "args=9", "--out", &out]), 3);
    fs::write(&ir, "func broken(").unwrap();
    assert_eq!(run(&["run", "--ir-file", &s(&ir), "--out", &out]), 2);
}

#[test]
fn exit_codes() {
    assert_eq!(CliError::Config(String::new()).exit_code(), 2);
    assert_eq!(CliError::Mismatch(String::new()).exit_code(), 3);
    assert_eq!(CliError::Deadlock(String::new()).exit_code(), 4);
}

#[test]
fn gantt_subcommand() {
    let (code, dir) = small_run(&["--trace"]);
    assert_eq!(code, 0);
    let trace = dir.path().join("o/trace_pipeline.csv");
    assert_eq!(run(&["gantt", "--trace", &s(&trace), "--from", "0", "--to", "40"]), 0);
    assert_eq!(run(&["gantt", "--trace", &s(&trace), "--from", "99999999", "--to", "100000000"]), 2);
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("sw"));
    let code = run(&[
        "sweep", "--kernel", "dfs", "--set", "dfs.nodes=30", "--set", "dfs.degree=2", "--out", &out, "--param",
        "mem.miss_latency", "--values", "10,40",
    ]);
    assert_eq!(code, 0);
    let table = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(dir.path().join("sw/mem.miss_latency=40/report_pipeline.json").exists());
    assert_eq!(KernelKind::from_name("fw"), Some(KernelKind::FloydWarshall));
}
