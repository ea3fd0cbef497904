//! End-to-end runs of the `dfpipe` binary.

use std::fs;
use std::process::Command;

use dfpipe::cli::{parse_trace, render_gantt};

fn dfpipe(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dfpipe")).args(args).output().unwrap()
}

#[test]
fn spmv_desk_run_and_gantt() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("spmv");
    let o = dfpipe(&["run", "--kernel", "spmv", "--scale", "desk", "--trace", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("speedup"));
    for f in ["manifest.json", "report_monolithic.json", "report_pipeline.json", "comparison.csv", "gantt_pipeline.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }

    // The stage holding the multiply keeps working while a load stage
    // waits on memory.
    let stages: Vec<String> = (0..)
        .map(|i| out.join(format!("stages/stage_{i}.ir")))
        .take_while(|p| p.exists())
        .map(|p| fs::read_to_string(p).unwrap())
        .collect();
    let mul = stages.iter().position(|s| s.contains("fmul")).unwrap();
    let rows = parse_trace(&fs::read_to_string(out.join("trace_pipeline.csv")).unwrap()).unwrap();
    let at = |c: u64, s: usize| rows.iter().find(|r| r.cycle == c && r.stage == s).map(|r| r.state);
    let cycle = rows
        .iter()
        .filter(|r| r.state == "mem" && stages[r.stage].contains("load"))
        .map(|r| r.cycle)
        .find(|&c| at(c, mul) == Some("busy"))
        .expect("a cycle with a memory stall while the multiply stage is busy");
    let g = render_gantt(&rows, cycle, cycle + 1).unwrap();
    let lines: Vec<&str> = g.lines().collect();
    assert_eq!(lines.len(), stages.len() + 1);
    assert!(lines[mul + 1].ends_with("|#|"), "{g}");
    assert!(lines.iter().any(|l| l.ends_with("|M|")), "{g}");

    // The monolithic engine stalls as a whole.
    let mono = fs::read_to_string(out.join("trace_monolithic.csv")).unwrap();
    let mono = parse_trace(&mono).unwrap();
    let stalled = mono.iter().filter(|r| r.state == "mem").count();
    assert!(stalled * 2 > mono.len(), "{stalled} of {}", mono.len());
}

#[test]
fn bad_key_exits_two_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dfpipe(&["run", "--kernel", "dfs", "--set", "mem.latency=3", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mem.latency"));
}

#[test]
fn catalog_lists_four_kernels() {
    let o = dfpipe(&["catalog"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for k in ["spmv", "knapsack", "floyd_warshall", "dfs"] {
        assert!(text.contains(k), "{text}");
    }
}
