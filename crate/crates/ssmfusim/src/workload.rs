//! JSON form of a workload graph: flat tensor and op lists in id order.

use serde::{Deserialize, Serialize};
use ssmfusim_core::graph::{validate, OpNode, Stage, TensorId, TensorSpec, WorkloadGraph};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFile {
    pub stage: Option<Stage>,
    pub tensors: Vec<TensorSpec>,
    pub ops: Vec<OpNode>,
    pub outputs: Vec<TensorId>,
}

impl WorkloadFile {
    pub fn from_graph(g: &WorkloadGraph) -> Self {
        WorkloadFile {
            stage: g.stage,
            tensors: g.tensors.values().cloned().collect(),
            ops: g.ops.values().cloned().collect(),
            outputs: g.outputs.clone(),
        }
    }

    /// Rebuilds the graph and rejects it if any structural check fails.
    pub fn into_graph(self) -> Result<WorkloadGraph> {
        let g = WorkloadGraph {
            tensors: self.tensors.into_iter().map(|t| (t.id, t)).collect(),
            ops: self.ops.into_iter().map(|o| (o.id, o)).collect(),
            outputs: self.outputs,
            stage: self.stage,
        };
        let bad = validate(&g);
        if let Some(v) = bad.first() {
            return Err(CliError::Config(format!("invalid workload: {v:?}")));
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssmfusim_core::builders::{build_mamba_block, MambaConfig};

    #[test]
    fn mamba_block_round_trips() {
        let g = build_mamba_block(&MambaConfig::mamba_2_8b(4, Stage::Prefill)).unwrap();
        let text = serde_json::to_string(&WorkloadFile::from_graph(&g)).unwrap();
        let back: WorkloadFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_graph().unwrap(), g);
    }
}
