//! Partition loop-nest kernels into decoupled dataflow pipeline stages and
//! measure, with a cycle-approximate simulator, how well the pipeline
//! tolerates memory latency compared with a single statically scheduled
//! engine.

pub mod bench;
pub mod cdfg;
pub mod cfg;
pub mod cli;
pub mod partition;
pub mod sim;
pub mod testgen;
pub mod ir;
pub mod memory;
