use serde::Serialize;

use super::{Channel, StagePlan};
use crate::cdfg::{Cdfg, SccSet};

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub index: usize,
    pub nodes: Vec<String>,
    pub components: usize,
    /// First node of the component that closed the stage.
    pub closing: Option<String>,
    pub duplicated: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub kernel: String,
    pub stages: Vec<StageRecord>,
    pub channels: Vec<Channel>,
}

impl Manifest {
    pub fn new(plan: &StagePlan, channels: &[Channel], g: &Cdfg, s: &SccSet) -> Self {
        let labels = |ns: &[usize]| ns.iter().map(|&n| g.node_label(n)).collect::<Vec<_>>();
        let stages = (0..plan.len())
            .map(|t| StageRecord {
                index: t,
                nodes: labels(&plan.stages[t]),
                components: plan.components[t].len(),
                closing: plan.closing[t].map(|c| g.node_label(s.members[c][0])),
                duplicated: plan
                    .duplicated
                    .iter()
                    .filter(|&&(_, st)| st == t)
                    .map(|&(c, _)| labels(&s.members[c]))
                    .collect(),
            })
            .collect();
        Manifest {
            kernel: g.program.name.clone(),
            stages,
            channels: channels.to_vec(),
        }
    }
}

pub fn manifest_json(plan: &StagePlan, channels: &[Channel], g: &Cdfg, s: &SccSet) -> String {
    serde_json::to_string_pretty(&Manifest::new(plan, channels, g, s)).unwrap()
}
