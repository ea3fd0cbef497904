//! Command-line driver: parse, partition, simulate both engines, write
//! reports, traces and comparison tables.

mod config;
mod gantt;
mod run;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{ConfigError, Engines, Input, Resolved, RunConfig};
pub use gantt::{glyph, parse_trace, render_gantt, GanttError};
pub use run::{execute, sweep, RunOutcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("functional mismatch: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Deadlock(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Mismatch(_) => 3,
            CliError::Deadlock(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "dfpipe", version, about = "Partition loop kernels into dataflow pipelines and simulate them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Partition and simulate one kernel.
    Run(RunArgs),
    /// Repeat `run` over several values of one config key.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Config key to vary, e.g. mem.miss_latency.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Render a trace CSV as a text Gantt chart.
    Gantt {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 0)]
        from: u64,
        #[arg(long, default_value_t = 120)]
        to: u64,
    },
    /// List the benchmark kernels.
    Catalog,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    ir_file: Option<PathBuf>,
    /// desk or full.
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// both, monolithic or pipeline.
    #[arg(long)]
    engines: Option<String>,
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_cdfg: bool,
    #[arg(long)]
    max_dup_nodes: Option<usize>,
    #[arg(long)]
    fifo_depth: Option<usize>,
    /// Any config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::new(),
        };
        let mut put = |k: &str, v: Option<String>| -> Result<(), CliError> {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
            Ok(())
        };
        put("kernel", self.kernel.clone())?;
        put("ir_file", self.ir_file.as_ref().map(|p| p.display().to_string()))?;
        put("scale", self.scale.clone())?;
        put("seed", self.seed.map(|s| s.to_string()))?;
        put("engines", self.engines.clone())?;
        put("out", self.out.as_ref().map(|p| p.display().to_string()))?;
        put("max_dup_nodes", self.max_dup_nodes.map(|s| s.to_string()))?;
        put("fifo_depth", self.fifo_depth.map(|s| s.to_string()))?;
        put("trace", self.trace.then(|| "true".to_string()))?;
        put("dump_cdfg", self.dump_cdfg.then(|| "true".to_string()))?;
        for pair in &self.set {
            cfg.set_pair(pair)?;
        }
        Ok(cfg)
    }
}

fn summary_line(o: &RunOutcome) -> String {
    let cyc = |r: &Option<crate::sim::SimReport>| r.as_ref().map_or("skipped".to_string(), |r| r.total_cycles.to_string());
    let speedup = o.speedup().map_or("skipped".to_string(), |s| format!("{s:.3}"));
    format!(
        "{}: monolithic {} cycles, pipeline {} cycles, speedup {speedup}",
        o.kernel,
        cyc(&o.monolithic),
        cyc(&o.pipeline)
    )
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let resolved = args.to_config()?.resolve()?;
            let o = execute(&resolved)?;
            println!("{}", summary_line(&o));
            println!("artifacts in {}", resolved.out.display());
        }
        Command::Sweep { run, param, values } => {
            let cfg = run.to_config()?;
            // Validate the base configuration and the swept key up front.
            cfg.resolve()?;
            for o in sweep(&cfg, &param, &values)? {
                println!("{}", summary_line(&o));
            }
        }
        Command::Gantt { trace, from, to } => {
            let text = fs::read_to_string(&trace).map_err(|e| CliError::Io(format!("{}: {e}", trace.display())))?;
            let rows = parse_trace(&text).map_err(|e| CliError::Config(e.to_string()))?;
            print!("{}", render_gantt(&rows, from, to).map_err(|e| CliError::Config(e.to_string()))?);
        }
        Command::Catalog => {
            for e in crate::bench::kernel_catalog() {
                println!("{}: {}\n  {}", e.kind, e.description, e.annotations);
            }
        }
    }
    Ok(())
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dfpipe: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(main_with(std::env::args_os()))
}

#[cfg(test)]
mod tests;
