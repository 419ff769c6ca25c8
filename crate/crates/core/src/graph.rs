//! Workload intermediate representation.
//!
//! A [`WorkloadGraph`] is a DAG of [`OpNode`]s connected through [`TensorSpec`]s.
//! Every tensor carries labeled dimensions (`L`, `D`, `N`, ...) so that
//! shape rules and the dependency tracker can reason about axes by name.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TensorId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpId(pub u32);

/// A labeled axis with its extent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(String, u64)", into = "(String, u64)")]
pub struct Dim {
    pub label: String,
    pub extent: u64,
}

impl Dim {
    pub fn new(label: &str, extent: u64) -> Self {
        Dim { label: label.to_string(), extent }
    }
}

impl From<(String, u64)> for Dim {
    fn from((label, extent): (String, u64)) -> Self {
        Dim { label, extent }
    }
}

impl From<Dim> for (String, u64) {
    fn from(d: Dim) -> Self {
        (d.label, d.extent)
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.label, self.extent)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Weight,
    Activation,
    State,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub id: TensorId,
    pub name: String,
    pub dims: Vec<Dim>,
    pub element_bits: u32,
    pub kind: TensorKind,
}

impl TensorSpec {
    pub fn new(id: TensorId, name: &str, dims: Vec<Dim>, kind: TensorKind) -> Self {
        TensorSpec { id, name: name.to_string(), dims, element_bits: 32, kind }
    }

    pub fn numel(&self) -> u64 {
        self.dims.iter().map(|d| d.extent).product()
    }

    pub fn bytes(&self) -> u64 {
        tensor_bytes(self)
    }

    pub fn axis(&self, label: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.label == label)
    }

    pub fn extents(&self) -> Vec<u64> {
        self.dims.iter().map(|d| d.extent).collect()
    }
}

/// Size in bytes of a densely stored tensor.
pub fn tensor_bytes(t: &TensorSpec) -> u64 {
    t.numel() * u64::from(t.element_bits) / 8
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "attrs")]
pub enum OpKind {
    /// `(.., M, K) x (K, P) -> (.., M, P)`
    MatMul,
    /// Two-operand einsum such as `"ld,dn->ldn"`; one letter per axis.
    Einsum {
        equation: String,
    },
    EwAdd,
    EwMul,
    Exp,
    SiLU,
    Sigmoid,
    SoftPlus,
    /// Broadcasting product; output axes are the label-union of both inputs.
    OuterProduct,
    ReduceSum {
        axis: usize,
    },
    /// Selects index `index` on `axis` and drops the axis.
    Slice {
        axis: usize,
        index: u64,
    },
    /// Emits part `part` of a partition of `axis` into `sizes`.
    Split {
        axis: usize,
        sizes: Vec<u64>,
        part: usize,
    },
    Transpose {
        perm: Vec<usize>,
    },
    /// Row-major reshape when element counts match; label-wise broadcast otherwise.
    Reshape,
    /// Concatenates along `axis`; inputs lacking that axis are stacked instead.
    Concat {
        axis: usize,
    },
    /// Causal depthwise convolution along axis 0.
    Conv1dDepthwise {
        kernel: u64,
    },
    /// Normalizes over the last axis.
    RMSNorm,
    Softmax {
        axis: usize,
    },
}

impl OpKind {
    /// Pure data-movement kinds cost no operations.
    pub fn is_data_movement(&self) -> bool {
        matches!(
            self,
            OpKind::Slice { .. } | OpKind::Split { .. } | OpKind::Transpose { .. } | OpKind::Reshape | OpKind::Concat { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "MatMul",
            OpKind::Einsum { .. } => "Einsum",
            OpKind::EwAdd => "EwAdd",
            OpKind::EwMul => "EwMul",
            OpKind::Exp => "Exp",
            OpKind::SiLU => "SiLU",
            OpKind::Sigmoid => "Sigmoid",
            OpKind::SoftPlus => "SoftPlus",
            OpKind::OuterProduct => "OuterProduct",
            OpKind::ReduceSum { .. } => "ReduceSum",
            OpKind::Slice { .. } => "Slice",
            OpKind::Split { .. } => "Split",
            OpKind::Transpose { .. } => "Transpose",
            OpKind::Reshape => "Reshape",
            OpKind::Concat { .. } => "Concat",
            OpKind::Conv1dDepthwise { .. } => "Conv1dDepthwise",
            OpKind::RMSNorm => "RMSNorm",
            OpKind::Softmax { .. } => "Softmax",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpClass {
    Projection,
    Attention,
    StateUpdate,
    Normalization,
    Elementwise,
    Activation,
}

impl OpClass {
    pub const ALL: [OpClass; 6] = [
        OpClass::Projection,
        OpClass::Attention,
        OpClass::StateUpdate,
        OpClass::Normalization,
        OpClass::Elementwise,
        OpClass::Activation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpClass::Projection => "projection",
            OpClass::Attention => "attention",
            OpClass::StateUpdate => "state_update",
            OpClass::Normalization => "normalization",
            OpClass::Elementwise => "elementwise",
            OpClass::Activation => "activation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpNode {
    pub id: OpId,
    pub name: String,
    #[serde(flatten)]
    pub kind: OpKind,
    pub inputs: Vec<TensorId>,
    pub output: TensorId,
    pub class: OpClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prefill,
    Decode,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkloadGraph {
    pub tensors: BTreeMap<TensorId, TensorSpec>,
    pub ops: BTreeMap<OpId, OpNode>,
    /// Tensors that leave the graph; they need no consumer.
    pub outputs: Vec<TensorId>,
    pub stage: Option<Stage>,
}

impl WorkloadGraph {
    pub fn new(stage: Stage) -> Self {
        WorkloadGraph { stage: Some(stage), ..Default::default() }
    }

    pub fn tensor(&self, id: TensorId) -> &TensorSpec {
        &self.tensors[&id]
    }

    pub fn op(&self, id: OpId) -> &OpNode {
        &self.ops[&id]
    }

    pub fn tensor_by_name(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.values().find(|t| t.name == name)
    }

    pub fn op_by_name(&self, name: &str) -> Option<&OpNode> {
        self.ops.values().find(|o| o.name == name)
    }

    /// Map from tensor to the op producing it.
    pub fn producers(&self) -> BTreeMap<TensorId, OpId> {
        self.ops.values().map(|o| (o.output, o.id)).collect()
    }

    /// Map from tensor to the ops reading it, in ascending id order.
    pub fn consumers(&self) -> BTreeMap<TensorId, Vec<OpId>> {
        let mut m: BTreeMap<TensorId, Vec<OpId>> = BTreeMap::new();
        for o in self.ops.values() {
            for t in &o.inputs {
                let v = m.entry(*t).or_default();
                if !v.contains(&o.id) {
                    v.push(o.id);
                }
            }
        }
        m
    }

    /// Tensors with no producing op.
    pub fn graph_inputs(&self) -> Vec<TensorId> {
        let p = self.producers();
        self.tensors.keys().filter(|t| !p.contains_key(t)).copied().collect()
    }

    pub fn input_specs(&self, op: &OpNode) -> Vec<&TensorSpec> {
        op.inputs.iter().map(|t| &self.tensors[t]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rule {
    Cycle,
    DimMismatch,
    UnknownTensor,
    MultipleProducers,
    Unconsumed,
    StateHasSequenceDim,
    ElementBits,
    ZeroExtent,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Cycle => "cycle",
            Rule::DimMismatch => "dim mismatch",
            Rule::UnknownTensor => "unknown tensor",
            Rule::MultipleProducers => "multiple producers",
            Rule::Unconsumed => "unconsumed tensor",
            Rule::StateHasSequenceDim => "state tensor with L dimension",
            Rule::ElementBits => "element bits",
            Rule::ZeroExtent => "zero extent",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    /// Offending node, e.g. `op 3 (hmul_0)` or `tensor 7 (x)`.
    pub node: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.rule.as_str(), self.node, self.detail)
    }
}

fn op_label(op: &OpNode) -> String {
    format!("op {} ({})", op.id.0, op.name)
}

/// Checks every structural and shape invariant; an empty list means the graph is well formed.
pub fn validate(graph: &WorkloadGraph) -> Vec<Violation> {
    let mut out = Vec::new();

    for t in graph.tensors.values() {
        let node = format!("tensor {} ({})", t.id.0, t.name);
        if t.element_bits == 0 || t.element_bits % 8 != 0 {
            out.push(Violation {
                rule: Rule::ElementBits,
                node: node.clone(),
                detail: format!("{} bits is not a whole number of bytes", t.element_bits),
            });
        }
        if t.dims.iter().any(|d| d.extent == 0) {
            out.push(Violation { rule: Rule::ZeroExtent, node: node.clone(), detail: "extent must be >= 1".into() });
        }
        if t.kind == TensorKind::State && t.axis("L").is_some() {
            out.push(Violation { rule: Rule::StateHasSequenceDim, node, detail: "state tensors are per-timestep".into() });
        }
    }

    let mut produced: BTreeMap<TensorId, OpId> = BTreeMap::new();
    let mut refs_ok = true;
    for op in graph.ops.values() {
        for t in op.inputs.iter().chain(core::iter::once(&op.output)) {
            if !graph.tensors.contains_key(t) {
                refs_ok = false;
                out.push(Violation {
                    rule: Rule::UnknownTensor,
                    node: op_label(op),
                    detail: format!("references missing tensor {}", t.0),
                });
            }
        }
        if let Some(prev) = produced.insert(op.output, op.id) {
            out.push(Violation {
                rule: Rule::MultipleProducers,
                node: op_label(op),
                detail: format!("tensor {} is also produced by op {}", op.output.0, prev.0),
            });
        }
    }
    if !refs_ok {
        return out;
    }

    for op in graph.ops.values() {
        let inputs = graph.input_specs(op);
        if let Err(msg) = check_shape(&op.kind, &inputs, graph.tensor(op.output)) {
            out.push(Violation { rule: Rule::DimMismatch, node: op_label(op), detail: msg });
        }
    }

    let consumers = graph.consumers();
    for t in graph.tensors.values() {
        if !consumers.contains_key(&t.id) && !graph.outputs.contains(&t.id) {
            out.push(Violation {
                rule: Rule::Unconsumed,
                node: format!("tensor {} ({})", t.id.0, t.name),
                detail: "neither consumed nor a graph output".into(),
            });
        }
    }

    if let Err(Error::Cycle(ops)) = topo_order(graph) {
        let names: Vec<String> = ops.iter().map(|o| op_label(graph.op(*o))).collect();
        out.push(Violation { rule: Rule::Cycle, node: names.join(", "), detail: "ops form a cycle".into() });
    }
    out
}

fn same_dims(a: &[Dim], b: &[Dim]) -> bool {
    a == b
}

fn fmt_dims(d: &[Dim]) -> String {
    let parts: Vec<String> = d.iter().map(|d| d.to_string()).collect();
    format!("({})", parts.join(", "))
}

fn arity(inputs: &[&TensorSpec], n: usize, kind: &OpKind) -> core::result::Result<(), String> {
    if inputs.len() != n {
        return Err(format!("{} expects {} inputs, got {}", kind.name(), n, inputs.len()));
    }
    Ok(())
}

/// Parses `"ab,bc->ac"` into per-operand letter lists.
pub(crate) fn parse_einsum(eq: &str) -> core::result::Result<(Vec<Vec<char>>, Vec<char>), String> {
    let (lhs, rhs) = eq.split_once("->").ok_or_else(|| format!("einsum `{eq}` lacks `->`"))?;
    let ins: Vec<Vec<char>> = lhs.split(',').map(|s| s.trim().chars().collect()).collect();
    let out: Vec<char> = rhs.trim().chars().collect();
    Ok((ins, out))
}

/// Verifies that `output` is the shape `kind` produces from `inputs`.
pub fn check_shape(kind: &OpKind, inputs: &[&TensorSpec], output: &TensorSpec) -> core::result::Result<(), String> {
    let od = &output.dims;
    let mismatch = |expected: &[Dim]| -> core::result::Result<(), String> {
        if same_dims(expected, od) {
            Ok(())
        } else {
            Err(format!("expected output {}, declared {}", fmt_dims(expected), fmt_dims(od)))
        }
    };
    match kind {
        OpKind::MatMul => {
            arity(inputs, 2, kind)?;
            let (a, b) = (&inputs[0].dims, &inputs[1].dims);
            if a.is_empty() || b.len() != 2 {
                return Err("matmul needs a rank>=1 left and a rank-2 right operand".into());
            }
            let k_left = &a[a.len() - 1];
            if k_left.extent != b[0].extent {
                return Err(format!("contracted extents differ: {} vs {}", k_left.extent, b[0].extent));
            }
            let mut e: Vec<Dim> = a[..a.len() - 1].to_vec();
            e.push(b[1].clone());
            mismatch(&e)
        }
        OpKind::Einsum { equation } => {
            arity(inputs, 2, kind)?;
            let (ins, outl) = parse_einsum(equation)?;
            if ins.len() != 2 {
                return Err("einsum needs exactly two operands".into());
            }
            let mut ext: BTreeMap<char, Dim> = BTreeMap::new();
            for (spec, letters) in inputs.iter().zip(&ins) {
                if letters.len() != spec.dims.len() {
                    return Err(format!("operand rank {} does not match `{}`", spec.dims.len(), equation));
                }
                for (c, d) in letters.iter().zip(&spec.dims) {
                    if let Some(prev) = ext.get(c) {
                        if prev.extent != d.extent {
                            return Err(format!("index `{c}` has extents {} and {}", prev.extent, d.extent));
                        }
                    } else {
                        ext.insert(*c, d.clone());
                    }
                }
            }
            let mut e = Vec::new();
            for c in &outl {
                e.push(ext.get(c).cloned().ok_or_else(|| format!("output index `{c}` absent from inputs"))?);
            }
            mismatch(&e)
        }
        OpKind::EwAdd | OpKind::EwMul => {
            arity(inputs, 2, kind)?;
            if !same_dims(&inputs[0].dims, &inputs[1].dims) {
                return Err(format!("operands differ: {} vs {}", fmt_dims(&inputs[0].dims), fmt_dims(&inputs[1].dims)));
            }
            mismatch(&inputs[0].dims)
        }
        OpKind::Exp | OpKind::SiLU | OpKind::Sigmoid | OpKind::SoftPlus => {
            arity(inputs, 1, kind)?;
            mismatch(&inputs[0].dims)
        }
        OpKind::OuterProduct => {
            arity(inputs, 2, kind)?;
            let mut e = inputs[0].dims.clone();
            for d in &inputs[1].dims {
                match e.iter().find(|x| x.label == d.label) {
                    Some(x) if x.extent != d.extent => {
                        return Err(format!("shared axis {} has extents {} and {}", d.label, x.extent, d.extent))
                    }
                    Some(_) => {}
                    None => e.push(d.clone()),
                }
            }
            mismatch(&e)
        }
        OpKind::ReduceSum { axis } | OpKind::Slice { axis, .. } => {
            arity(inputs, 1, kind)?;
            let d = &inputs[0].dims;
            if *axis >= d.len() {
                return Err(format!("axis {axis} out of range for rank {}", d.len()));
            }
            if let OpKind::Slice { index, .. } = kind {
                if *index >= d[*axis].extent {
                    return Err(format!("slice index {index} beyond extent {}", d[*axis].extent));
                }
            }
            let mut e = d.clone();
            e.remove(*axis);
            mismatch(&e)
        }
        OpKind::Split { axis, sizes, part } => {
            arity(inputs, 1, kind)?;
            let d = &inputs[0].dims;
            if *axis >= d.len() || *part >= sizes.len() {
                return Err("split axis or part out of range".into());
            }
            if sizes.iter().sum::<u64>() != d[*axis].extent || sizes.contains(&0) {
                return Err(format!("split sizes {:?} do not partition extent {}", sizes, d[*axis].extent));
            }
            let mut e = d.clone();
            e[*axis].extent = sizes[*part];
            mismatch(&e)
        }
        OpKind::Transpose { perm } => {
            arity(inputs, 1, kind)?;
            let d = &inputs[0].dims;
            let mut seen = perm.clone();
            seen.sort_unstable();
            if seen != (0..d.len()).collect::<Vec<_>>() {
                return Err(format!("{perm:?} is not a permutation of rank {}", d.len()));
            }
            let e: Vec<Dim> = perm.iter().map(|&p| d[p].clone()).collect();
            mismatch(&e)
        }
        OpKind::Reshape => {
            arity(inputs, 1, kind)?;
            let i = inputs[0];
            if i.numel() == output.numel() {
                return Ok(());
            }
            broadcast_positions(&i.dims, od).map(|_| ())
        }
        OpKind::Concat { axis } => {
            if inputs.is_empty() {
                return Err("concat needs at least one input".into());
            }
            if *axis >= od.len() {
                return Err(format!("axis {axis} out of range for output rank {}", od.len()));
            }
            let stack = inputs[0].dims.len() + 1 == od.len();
            let mut total = 0;
            for t in inputs {
                let mut rest = od.clone();
                if stack {
                    rest.remove(*axis);
                    if !same_dims(&rest, &t.dims) {
                        return Err(format!("stacked input {} does not match {}", fmt_dims(&t.dims), fmt_dims(&rest)));
                    }
                    total += 1;
                } else {
                    if t.dims.len() != od.len() {
                        return Err("concat inputs must share rank".into());
                    }
                    for (k, (a, b)) in t.dims.iter().zip(od).enumerate() {
                        if k != *axis && a != b {
                            return Err(format!("non-concat axis {} differs", a.label));
                        }
                    }
                    total += t.dims[*axis].extent;
                }
            }
            if total != od[*axis].extent {
                return Err(format!("concat extent {} != declared {}", total, od[*axis].extent));
            }
            Ok(())
        }
        OpKind::Conv1dDepthwise { kernel } => {
            if inputs.is_empty() || inputs.len() > 2 {
                return Err("conv takes the signal and an optional weight".into());
            }
            if *kernel == 0 || inputs[0].dims.len() != 2 {
                return Err("conv expects a (L, C) signal and kernel >= 1".into());
            }
            if let Some(w) = inputs.get(1) {
                let c = &inputs[0].dims[1];
                if w.dims.len() != 2 || w.dims[0].extent != c.extent || w.dims[1].extent != *kernel {
                    return Err(format!("conv weight must be ({}, {kernel})", c.extent));
                }
            }
            mismatch(&inputs[0].dims)
        }
        OpKind::RMSNorm => {
            if inputs.is_empty() || inputs.len() > 2 || inputs[0].dims.is_empty() {
                return Err("rmsnorm takes a rank>=1 input and an optional weight".into());
            }
            if let Some(w) = inputs.get(1) {
                let last = inputs[0].dims.last().unwrap();
                if w.dims.len() != 1 || w.dims[0].extent != last.extent {
                    return Err("rmsnorm weight must match the last axis".into());
                }
            }
            mismatch(&inputs[0].dims)
        }
        OpKind::Softmax { axis } => {
            arity(inputs, 1, kind)?;
            if *axis >= inputs[0].dims.len() {
                return Err(format!("axis {axis} out of range"));
            }
            mismatch(&inputs[0].dims)
        }
    }
}

/// For a broadcast reshape, position of each input axis inside the output.
pub(crate) fn broadcast_positions(input: &[Dim], output: &[Dim]) -> core::result::Result<Vec<usize>, String> {
    let mut pos = Vec::with_capacity(input.len());
    let mut from = 0;
    for d in input {
        match output[from..].iter().position(|o| o.label == d.label) {
            Some(p) if output[from + p].extent == d.extent => {
                pos.push(from + p);
                from += p + 1;
            }
            _ => {
                return Err(format!(
                    "cannot broadcast {} into {}: axis {} missing or resized",
                    fmt_dims(input),
                    fmt_dims(output),
                    d.label
                ))
            }
        }
    }
    Ok(pos)
}

/// Operation count, counting a multiply-accumulate as two operations.
/// Scalar steps a PE performs for `node`: like [`op_count`] but a
/// multiply-accumulate is a single step.
pub fn scalar_iterations(node: &OpNode, tensors: &BTreeMap<TensorId, TensorSpec>) -> Result<u64> {
    let ops = op_count(node, tensors)?;
    let mac = match &node.kind {
        OpKind::MatMul | OpKind::Conv1dDepthwise { .. } => true,
        OpKind::Einsum { equation } => {
            let (ins, outl) = parse_einsum(equation).map_err(|msg| Error::Shape { op: node.id, msg })?;
            ins.iter().flatten().any(|c| !outl.contains(c))
        }
        _ => false,
    };
    Ok(if mac { ops / 2 } else { ops })
}

pub fn op_count(node: &OpNode, tensors: &BTreeMap<TensorId, TensorSpec>) -> Result<u64> {
    let get = |t: &TensorId| tensors.get(t).ok_or(Error::Shape { op: node.id, msg: format!("missing tensor {}", t.0) });
    let inputs: Vec<&TensorSpec> = node.inputs.iter().map(get).collect::<Result<_>>()?;
    let output = get(&node.output)?;
    check_shape(&node.kind, &inputs, output).map_err(|msg| Error::Shape { op: node.id, msg })?;
    let e_out = output.numel();
    Ok(match &node.kind {
        OpKind::MatMul => 2 * inputs[0].numel() * inputs[1].dims[1].extent,
        OpKind::Einsum { equation } => {
            let (ins, outl) = parse_einsum(equation).map_err(|msg| Error::Shape { op: node.id, msg })?;
            let mut ext: BTreeMap<char, u64> = BTreeMap::new();
            for (spec, letters) in inputs.iter().zip(&ins) {
                for (c, d) in letters.iter().zip(&spec.dims) {
                    ext.insert(*c, d.extent);
                }
            }
            let space: u64 = ext.values().product();
            let contracted = ext.keys().any(|c| !outl.contains(c));
            if contracted {
                2 * space
            } else {
                space
            }
        }
        OpKind::EwAdd
        | OpKind::EwMul
        | OpKind::Exp
        | OpKind::SiLU
        | OpKind::Sigmoid
        | OpKind::SoftPlus
        | OpKind::OuterProduct => e_out,
        OpKind::ReduceSum { axis } => {
            let e = inputs[0].numel();
            e - e / inputs[0].dims[*axis].extent
        }
        OpKind::Softmax { .. } => 5 * e_out,
        OpKind::RMSNorm => 4 * e_out,
        OpKind::Conv1dDepthwise { kernel } => 2 * e_out * kernel,
        OpKind::Slice { .. } | OpKind::Split { .. } | OpKind::Transpose { .. } | OpKind::Reshape | OpKind::Concat { .. } => 0,
    })
}

/// Deterministic topological order; ready ops are released by ascending id.
pub fn topo_order(graph: &WorkloadGraph) -> Result<Vec<OpId>> {
    let producers = graph.producers();
    let mut indeg: BTreeMap<OpId, usize> = BTreeMap::new();
    let mut succ: BTreeMap<OpId, Vec<OpId>> = BTreeMap::new();
    for op in graph.ops.values() {
        let preds: BTreeSet<OpId> = op.inputs.iter().filter_map(|t| producers.get(t)).copied().collect();
        indeg.insert(op.id, preds.len());
        for p in preds {
            succ.entry(p).or_default().push(op.id);
        }
    }
    let mut ready: BTreeSet<OpId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(o, _)| *o).collect();
    let mut order = Vec::with_capacity(graph.ops.len());
    while let Some(o) = ready.pop_first() {
        order.push(o);
        if let Some(ss) = succ.get(&o) {
            for s in ss {
                let d = indeg.get_mut(s).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(*s);
                }
            }
        }
    }
    if order.len() != graph.ops.len() {
        let stuck: Vec<OpId> = indeg.iter().filter(|(_, d)| **d > 0).map(|(o, _)| *o).collect();
        return Err(Error::Cycle(stuck));
    }
    Ok(order)
}

/// Incremental construction helper with sequential ids.
#[derive(Debug)]
pub struct GraphBuilder {
    graph: WorkloadGraph,
    next_tensor: u32,
    next_op: u32,
    bits: u32,
}

impl GraphBuilder {
    pub fn new(stage: Stage) -> Self {
        GraphBuilder { graph: WorkloadGraph::new(stage), next_tensor: 0, next_op: 0, bits: 32 }
    }

    pub fn with_bits(mut self, bits: u32) -> Self {
        self.bits = bits;
        self
    }

    pub fn tensor(&mut self, name: &str, dims: &[(&str, u64)], kind: TensorKind) -> TensorId {
        let id = TensorId(self.next_tensor);
        self.next_tensor += 1;
        let dims = dims.iter().map(|(l, e)| Dim::new(l, *e)).collect();
        let mut spec = TensorSpec::new(id, name, dims, kind);
        spec.element_bits = self.bits;
        self.graph.tensors.insert(id, spec);
        id
    }

    pub fn tensor_dims(&mut self, name: &str, dims: Vec<Dim>, kind: TensorKind) -> TensorId {
        let id = TensorId(self.next_tensor);
        self.next_tensor += 1;
        let mut spec = TensorSpec::new(id, name, dims, kind);
        spec.element_bits = self.bits;
        self.graph.tensors.insert(id, spec);
        id
    }

    pub fn dims(&self, t: TensorId) -> Vec<Dim> {
        self.graph.tensors[&t].dims.clone()
    }

    pub fn op(&mut self, name: &str, kind: OpKind, inputs: &[TensorId], output: TensorId, class: OpClass) -> OpId {
        let id = OpId(self.next_op);
        self.next_op += 1;
        self.graph.ops.insert(id, OpNode { id, name: name.to_string(), kind, inputs: inputs.to_vec(), output, class });
        id
    }

    pub fn mark_output(&mut self, t: TensorId) {
        if !self.graph.outputs.contains(&t) {
            self.graph.outputs.push(t);
        }
    }

    pub fn finish(self) -> WorkloadGraph {
        self.graph
    }
}
