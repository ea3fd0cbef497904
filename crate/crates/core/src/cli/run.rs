use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{Input, Resolved, RunConfig};
use super::gantt::render_gantt;
use super::CliError;
use crate::bench::{generate, Oracle};
use crate::ir::{interpret, parse_ir, print_ir, MemoryImage, Program, Value};
use crate::partition::Pipeline;
use crate::sim::{simulate_monolithic, simulate_pipeline, trace_csv, SimError, SimReport};

/// What one run produced; `None` marks an engine that was not requested.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub kernel: String,
    pub monolithic: Option<SimReport>,
    pub pipeline: Option<SimReport>,
    pub channels: Option<usize>,
    pub stages: Option<usize>,
}

impl RunOutcome {
    /// Monolithic cycles over pipeline cycles, when both ran.
    pub fn speedup(&self) -> Option<f64> {
        let (m, p) = (self.monolithic.as_ref()?, self.pipeline.as_ref()?);
        Some(m.total_cycles as f64 / p.total_cycles.max(1) as f64)
    }
}

struct Loaded {
    program: Program,
    memory: MemoryImage,
    args: Vec<Value>,
    oracle: Option<Oracle>,
}

fn load(input: &Input) -> Result<Loaded, CliError> {
    match input {
        Input::Kernel(spec) => {
            let g = generate(spec).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Loaded { program: g.program, memory: g.memory, args: g.args, oracle: Some(g.oracle) })
        }
        Input::IrFile { path, args } => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let program = parse_ir(&text).map_err(|d| {
                let msgs: Vec<String> = d.iter().map(|d| d.to_string()).collect();
                CliError::Config(format!("{}: {}", path.display(), msgs.join("; ")))
            })?;
            let violations = crate::ir::validate(&program);
            if !violations.is_empty() {
                let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                return Err(CliError::Config(format!("{}: {}", path.display(), msgs.join("; "))));
            }
            let memory = MemoryImage::zeroed(&program.spaces);
            Ok(Loaded { program, memory, args: args.clone(), oracle: None })
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn config_text(echo: &BTreeMap<String, String>) -> String {
    echo.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn report_json(echo: &BTreeMap<String, String>, r: &SimReport) -> String {
    let doc = json!({ "config": echo, "report": r });
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}

fn sim_error(engine: &str, out: &Path, e: SimError) -> CliError {
    match e {
        SimError::Deadlock { .. } => {
            let msg = format!("{engine}: {e}");
            let _ = write(&out.join("deadlock.txt"), &format!("{msg}\n"));
            CliError::Deadlock(msg)
        }
        SimError::Config(m) => CliError::Config(m),
        other => CliError::Mismatch(format!("{engine}: {other}")),
    }
}

/// Runs one configuration and writes its artifacts under `r.out`.
pub fn execute(r: &Resolved) -> Result<RunOutcome, CliError> {
    let out = &r.out;
    let echo = r.echo();
    let l = load(&r.input)?;
    let kernel = l.program.name.clone();
    write(&out.join("config.txt"), &config_text(&echo))?;
    write(&out.join("input.ir"), &print_ir(&l.program))?;

    let (ref_mem, ref_ret, _) = interpret(&l.program, l.memory.clone(), &l.args, r.sim.fuel)
        .map_err(|t| CliError::Mismatch(format!("interpreter: {t}")))?;
    if let Some(oracle) = &l.oracle {
        oracle
            .check(&ref_mem, ref_ret, 1e-6)
            .map_err(|e| CliError::Mismatch(format!("interpreter vs oracle: {e}")))?;
    }
    let ref_digest = ref_mem.digest();

    let mut outcome = RunOutcome { kernel: kernel.clone(), monolithic: None, pipeline: None, channels: None, stages: None };
    let mut pipeline = None;
    if r.engines.pipeline || r.dump_cdfg {
        let pl = Pipeline::build(&l.program, &r.sim.latency, r.max_dup_nodes, r.fifo_depth)
            .map_err(|e| CliError::Mismatch(format!("partition: {e}")))?;
        if r.dump_cdfg {
            write(&out.join("cdfg.txt"), &pl.graph.dump())?;
        }
        pipeline = Some(pl);
    }
    if r.engines.monolithic {
        let rep = simulate_monolithic(&l.program, &r.sim, &l.memory, &l.args)
            .map_err(|e| sim_error("monolithic", out, e))?;
        outcome.monolithic = Some(rep);
    }
    if r.engines.pipeline {
        let pl = pipeline.as_ref().expect("built above");
        write(&out.join("manifest.json"), &(pl.manifest_json() + "\n"))?;
        for st in &pl.stages {
            write(&out.join(format!("stages/stage_{}.ir", st.stage)), &print_ir(&st.program))?;
        }
        let rep = simulate_pipeline(&pl.stages, &pl.channels, &pl.graph, &pl.sccs, &r.sim, &l.memory, &l.args)
            .map_err(|e| sim_error("pipeline", out, e))?;
        outcome.channels = Some(pl.channels.len());
        outcome.stages = Some(pl.stages.len());
        outcome.pipeline = Some(rep);
    }

    let mut mismatch = Vec::new();
    for rep in [&outcome.monolithic, &outcome.pipeline].into_iter().flatten() {
        write(&out.join(format!("report_{}.json", rep.engine)), &report_json(&echo, rep))?;
        if r.sim.trace {
            write(&out.join(format!("trace_{}.csv", rep.engine)), &trace_csv(&rep.trace))?;
            let (from, to) = r.gantt;
            let to = to.min(rep.total_cycles);
            let g = render_gantt(&rep.trace, from.min(to), to).map_err(|e| CliError::Config(e.to_string()))?;
            write(&out.join(format!("gantt_{}.txt", rep.engine)), &g)?;
        }
        if rep.digest != ref_digest {
            mismatch.push(format!("{} memory digest {} differs from interpreter {}", rep.engine, rep.digest, ref_digest));
        }
        if rep.ret.map(|v| v.to_string()) != ref_ret.map(|v| v.to_string()) {
            mismatch.push(format!("{} returned {:?}, interpreter {:?}", rep.engine, rep.ret, ref_ret));
        }
    }
    write(&out.join("comparison.csv"), &comparison_csv(&outcome, &ref_digest, mismatch.is_empty()))?;
    if !mismatch.is_empty() {
        return Err(CliError::Mismatch(mismatch.join("; ")));
    }
    Ok(outcome)
}

fn comparison_csv(o: &RunOutcome, reference: &str, agree: bool) -> String {
    let mut s = String::from("kernel,engine,status,total_cycles,busy,stall_mem,stall_fifo_full,stall_fifo_empty,idle,hit_ratio,digest\n");
    for (name, rep) in [("monolithic", &o.monolithic), ("pipeline", &o.pipeline)] {
        match rep {
            None => {
                let _ = writeln!(s, "{},{name},skipped,,,,,,,,", o.kernel);
            }
            Some(r) => {
                let sum = |f: fn(&crate::sim::StageStats) -> u64| r.stages.iter().map(f).sum::<u64>();
                let _ = writeln!(
                    s,
                    "{},{name},ok,{},{},{},{},{},{},{:.6},{}",
                    o.kernel,
                    r.total_cycles,
                    sum(|x| x.busy),
                    sum(|x| x.stall_mem),
                    sum(|x| x.stall_fifo_full),
                    sum(|x| x.stall_fifo_empty),
                    sum(|x| x.idle),
                    r.hit_ratio,
                    r.digest
                );
            }
        }
    }
    let speedup = o.speedup().map_or("skipped".to_string(), |x| x.to_string());
    let _ = writeln!(s, "# speedup (monolithic/pipeline) = {speedup}");
    let _ = writeln!(s, "# interpreter digest = {reference}; agree = {agree}");
    s
}

/// One run per value of `param`, each in its own subdirectory, plus a
/// `sweep.csv` table. Stops at the first failing run.
pub fn sweep(base: &RunConfig, param: &str, values: &[String]) -> Result<Vec<RunOutcome>, CliError> {
    let root = PathBuf::from(base.get("out").unwrap_or("out"));
    let mut table = format!("{param},monolithic_cycles,pipeline_cycles,speedup\n");
    let mut outcomes = Vec::new();
    for v in values {
        let mut cfg = base.clone();
        cfg.set(param, v).map_err(|e| CliError::Config(e.to_string()))?;
        let dir = root.join(format!("{param}={v}"));
        cfg.set("out", &dir.to_string_lossy()).expect("known key");
        let resolved = cfg.resolve().map_err(|e| CliError::Config(e.to_string()))?;
        let o = execute(&resolved)?;
        let cyc = |r: &Option<SimReport>| r.as_ref().map_or("skipped".to_string(), |r| r.total_cycles.to_string());
        let sp = o.speedup().map_or("skipped".to_string(), |x| x.to_string());
        let _ = writeln!(table, "{v},{},{},{sp}", cyc(&o.monolithic), cyc(&o.pipeline));
        outcomes.push(o);
    }
    write(&root.join("sweep.csv"), &table)?;
    Ok(outcomes)
}
