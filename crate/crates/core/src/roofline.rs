//! Operator-class roofline analysis under layer-by-layer execution: every
//! operator reads its inputs from and writes its outputs to off-chip memory.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::builders::{
    build_mamba_block, build_transformer_descriptor, MambaConfig, ModelDescriptor, OpDescriptor, TransformerConfig,
};
use crate::error::Result;
use crate::graph::{op_count, OpClass, Stage, TensorId, TensorKind, WorkloadGraph};
use crate::hw::{peak_ops_per_s, AcceleratorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub class: OpClass,
    pub ops: u64,
    pub dram_bytes: u64,
    pub oi: f64,
    pub roofline_perf: f64,
    pub latency_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model: String,
    pub stage: Stage,
    pub seq_len: u64,
    pub classes: Vec<ClassProfile>,
    pub total_ops: u64,
    pub total_bytes: u64,
    pub latency_s: f64,
}

impl ModelProfile {
    pub fn class(&self, class: OpClass) -> Option<&ClassProfile> {
        self.classes.iter().find(|c| c.class == class)
    }

    /// The class with the largest latency share.
    pub fn dominant(&self) -> Option<OpClass> {
        self.classes
            .iter()
            .max_by(|a, b| a.latency_s.partial_cmp(&b.latency_s).unwrap_or(core::cmp::Ordering::Equal))
            .map(|c| c.class)
    }
}

pub fn roofline_perf(oi: f64, cfg: &AcceleratorConfig) -> f64 {
    libm::fmin(peak_ops_per_s(cfg), cfg.offchip_bps * oi)
}

/// Bytes actually fetched to read all of `t`. Views cost what they expose of
/// their sources; the recurrent state stays on-chip and costs nothing.
fn traced_bytes(
    graph: &WorkloadGraph,
    producers: &BTreeMap<TensorId, crate::graph::OpId>,
    t: TensorId,
    memo: &mut BTreeMap<TensorId, u64>,
) -> u64 {
    if let Some(&b) = memo.get(&t) {
        return b;
    }
    let spec = graph.tensor(t);
    let b = if spec.kind == TensorKind::State {
        0
    } else {
        match producers.get(&t).map(|o| graph.op(*o)) {
            Some(op) if op.kind.is_data_movement() => {
                let src: u64 = op.inputs.iter().map(|i| traced_bytes(graph, producers, *i, memo)).sum();
                src.min(spec.bytes())
            }
            _ => spec.bytes(),
        }
    };
    memo.insert(t, b);
    b
}

/// Per-operator ops and unfused traffic of one graph.
pub fn graph_descriptors(graph: &WorkloadGraph) -> Result<Vec<OpDescriptor>> {
    let producers = graph.producers();
    let mut memo = BTreeMap::new();
    let mut out = Vec::new();
    for op in graph.ops.values().filter(|o| !o.kind.is_data_movement()) {
        let ops = op_count(op, &graph.tensors)?;
        let reads: u64 = op.inputs.iter().map(|t| traced_bytes(graph, &producers, *t, &mut memo)).sum();
        let out_spec = graph.tensor(op.output);
        let write = if out_spec.kind == TensorKind::State { 0 } else { out_spec.bytes() };
        out.push(OpDescriptor { name: op.name.clone(), class: op.class, ops, bytes: reads + write });
    }
    Ok(out)
}

pub fn mamba_descriptor(cfg: &MambaConfig) -> Result<ModelDescriptor> {
    let graph = build_mamba_block(cfg)?;
    let layer = graph_descriptors(&graph)?;
    let mut extra = Vec::new();
    if cfg.include_lm_head {
        let e = u64::from(cfg.element_bits) / 8;
        let (t, d, v) = (cfg.tokens(), cfg.d_model, cfg.vocab_size);
        extra.push(OpDescriptor {
            name: "lm_head".to_string(),
            class: OpClass::Projection,
            ops: 2 * t * d * v,
            bytes: e * (t * d + d * v + t * v),
        });
    }
    Ok(ModelDescriptor {
        name: "mamba".to_string(),
        stage: cfg.stage,
        seq_len: cfg.seq_len,
        n_layers: cfg.n_layers,
        layer,
        extra,
    })
}

pub fn profile_model(desc: &ModelDescriptor, cfg: &AcceleratorConfig) -> ModelProfile {
    let mut acc: BTreeMap<OpClass, (u64, u64)> = BTreeMap::new();
    for (ops, k) in desc.layer.iter().map(|o| (o, desc.n_layers)).chain(desc.extra.iter().map(|o| (o, 1))) {
        let e = acc.entry(ops.class).or_default();
        e.0 += ops.ops * k;
        e.1 += ops.bytes * k;
    }
    let classes: Vec<ClassProfile> = acc
        .into_iter()
        .map(|(class, (ops, bytes))| {
            let oi = if bytes == 0 { f64::INFINITY } else { ops as f64 / bytes as f64 };
            let perf = roofline_perf(oi, cfg);
            ClassProfile { class, ops, dram_bytes: bytes, oi, roofline_perf: perf, latency_s: ops as f64 / perf }
        })
        .collect();
    ModelProfile {
        model: desc.name.clone(),
        stage: desc.stage,
        seq_len: desc.seq_len,
        total_ops: classes.iter().map(|c| c.ops).sum(),
        total_bytes: classes.iter().map(|c| c.dram_bytes).sum(),
        latency_s: classes.iter().map(|c| c.latency_s).sum(),
        classes,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: String,
    pub stage: Stage,
    pub seq_len: u64,
    pub latency_s: f64,
    pub dominant: Option<OpClass>,
}

/// Transformer and SSM latency side by side for each sequence length.
pub fn compare_models(
    transformer: &TransformerConfig,
    ssm: &MambaConfig,
    stage: Stage,
    lengths: &[u64],
    cfg: &AcceleratorConfig,
) -> Result<Vec<(ModelProfile, ModelProfile)>> {
    lengths
        .iter()
        .map(|&l| {
            let t = build_transformer_descriptor(&TransformerConfig { seq_len: l, stage, ..transformer.clone() })?;
            let s = mamba_descriptor(&MambaConfig { seq_len: l, stage, ..ssm.clone() })?;
            Ok((profile_model(&t, cfg), profile_model(&s, cfg)))
        })
        .collect()
}

pub fn comparison_rows(pairs: &[(ModelProfile, ModelProfile)]) -> Vec<Comparison> {
    pairs
        .iter()
        .flat_map(|(a, b)| [a, b])
        .map(|p| Comparison {
            model: p.model.clone(),
            stage: p.stage,
            seq_len: p.seq_len,
            latency_s: p.latency_s,
            dominant: p.dominant(),
        })
        .collect()
}
