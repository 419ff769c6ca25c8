//! Workload construction for the Mamba block and operator summaries for a
//! decoder-only transformer.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, OpClass, OpKind, Stage, TensorId, TensorKind, WorkloadGraph};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MambaConfig {
    pub d_model: u64,
    pub expand: u64,
    /// State dimension.
    pub n: u64,
    pub dt_rank: u64,
    pub conv_kernel: u64,
    pub n_layers: u64,
    /// Sequence length. Decode builds a single-token block regardless.
    pub seq_len: u64,
    pub stage: Stage,
    pub element_bits: u32,
    pub vocab_size: u64,
    /// Adds the LM head as an extra projection in model-level summaries.
    pub include_lm_head: bool,
}

impl MambaConfig {
    /// Mamba-2.8B: D = 5120, N = 64.
    pub fn mamba_2_8b(seq_len: u64, stage: Stage) -> Self {
        MambaConfig {
            d_model: 2560,
            expand: 2,
            n: 64,
            dt_rank: 160,
            conv_kernel: 4,
            n_layers: 64,
            seq_len,
            stage,
            element_bits: 32,
            vocab_size: 50_280,
            include_lm_head: false,
        }
    }

    /// Expanded model dimension `D`.
    pub fn d_inner(&self) -> u64 {
        self.d_model * self.expand
    }

    /// Number of tokens the block processes at once.
    pub fn tokens(&self) -> u64 {
        match self.stage {
            Stage::Prefill => self.seq_len,
            Stage::Decode => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_model", self.d_model),
            ("expand", self.expand),
            ("N", self.n),
            ("dt_rank", self.dt_rank),
            ("conv_kernel", self.conv_kernel),
            ("n_layers", self.n_layers),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.seq_len == 0 {
            return Err(Error::InvalidConfig("L must be ≥ 1".into()));
        }
        if self.element_bits == 0 || !self.element_bits.is_multiple_of(8) {
            return Err(Error::InvalidConfig(format!("element_bits {} is not byte aligned", self.element_bits)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub d_model: u64,
    pub n_heads: u64,
    pub d_ff: u64,
    pub n_layers: u64,
    pub seq_len: u64,
    pub stage: Stage,
    pub kv_cache: bool,
    pub element_bits: u32,
    pub vocab_size: u64,
    pub include_lm_head: bool,
}

impl TransformerConfig {
    /// OPT-2.7B.
    pub fn opt_2_7b(seq_len: u64, stage: Stage) -> Self {
        TransformerConfig {
            d_model: 2560,
            n_heads: 32,
            d_ff: 10240,
            n_layers: 32,
            seq_len,
            stage,
            kv_cache: true,
            element_bits: 32,
            vocab_size: 50_272,
            include_lm_head: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 || self.n_layers == 0 {
            return Err(Error::InvalidConfig("transformer dimensions must be >= 1".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads)));
        }
        if self.seq_len == 0 {
            return Err(Error::InvalidConfig("L must be ≥ 1".into()));
        }
        if self.element_bits == 0 || !self.element_bits.is_multiple_of(8) {
            return Err(Error::InvalidConfig(format!("element_bits {} is not byte aligned", self.element_bits)));
        }
        Ok(())
    }
}

/// Operation and off-chip byte totals of one operator under layer-by-layer execution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpDescriptor {
    pub name: String,
    pub class: OpClass,
    pub ops: u64,
    pub bytes: u64,
}

impl OpDescriptor {
    fn new(name: &str, class: OpClass, ops: u64, bytes: u64) -> Self {
        OpDescriptor { name: name.to_string(), class, ops, bytes }
    }
}

/// Per-layer descriptors plus the layer count; `extra` runs once per model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub stage: Stage,
    pub seq_len: u64,
    pub n_layers: u64,
    pub layer: Vec<OpDescriptor>,
    pub extra: Vec<OpDescriptor>,
}

/// Handles to the tensors the state-update expansion consumes and produces.
#[derive(Clone, Copy, Debug)]
pub struct SsmTensors {
    pub x: TensorId,
    pub delta: TensorId,
    pub b: TensorId,
    pub c: TensorId,
    pub a: TensorId,
    pub d_skip: TensorId,
    pub h0: TensorId,
}

/// Appends the sequential state-update block to `b` and returns `(y, h_last)`.
///
/// The whole-sequence products (`dA`, `exp_dA`, `dB`, `dBx`) are emitted once;
/// the recurrence is unrolled into one chain per timestep threading `h`.
pub fn append_ssm(b: &mut GraphBuilder, t: SsmTensors, l: u64, d: u64, n: u64) -> (TensorId, TensorId) {
    let su = OpClass::StateUpdate;
    let ldn: [(&str, u64); 3] = [("L", l), ("D", d), ("N", n)];
    let dn: [(&str, u64); 2] = [("D", d), ("N", n)];

    let da = b.tensor("dA", &ldn, TensorKind::Activation);
    b.op("dA", OpKind::OuterProduct, &[t.delta, t.a], da, su);
    let exp_da = b.tensor("exp_dA", &ldn, TensorKind::Activation);
    b.op("exp_dA", OpKind::Exp, &[da], exp_da, su);
    let db = b.tensor("dB", &ldn, TensorKind::Activation);
    b.op("dB", OpKind::OuterProduct, &[t.delta, t.b], db, su);
    let xb = b.tensor("x_bcast", &ldn, TensorKind::Activation);
    b.op("x_bcast", OpKind::Reshape, &[t.x], xb, su);
    let dbx = b.tensor("dBx", &ldn, TensorKind::Activation);
    b.op("dBx", OpKind::EwMul, &[db, xb], dbx, su);

    let mut h_prev = t.h0;
    let mut ys = Vec::with_capacity(l as usize);
    for step in 0..l {
        let e_t = b.tensor(&format!("exp_dA[{step}]"), &dn, TensorKind::Activation);
        b.op(&format!("exp_dA[{step}]"), OpKind::Slice { axis: 0, index: step }, &[exp_da], e_t, su);
        let u_t = b.tensor(&format!("dBx[{step}]"), &dn, TensorKind::Activation);
        b.op(&format!("dBx[{step}]"), OpKind::Slice { axis: 0, index: step }, &[dbx], u_t, su);
        let hm = b.tensor(&format!("hmul[{step}]"), &dn, TensorKind::Activation);
        b.op(&format!("hmul[{step}]"), OpKind::EwMul, &[e_t, h_prev], hm, su);
        let h = b.tensor(&format!("h[{step}]"), &dn, TensorKind::State);
        b.op(&format!("hadd[{step}]"), OpKind::EwAdd, &[hm, u_t], h, su);
        let c_t = b.tensor(&format!("C[{step}]"), &[("N", n)], TensorKind::Activation);
        b.op(&format!("C[{step}]"), OpKind::Slice { axis: 0, index: step }, &[t.c], c_t, su);
        let cb = b.tensor(&format!("C_bcast[{step}]"), &dn, TensorKind::Activation);
        b.op(&format!("C_bcast[{step}]"), OpKind::Reshape, &[c_t], cb, su);
        let ch = b.tensor(&format!("Ch[{step}]"), &dn, TensorKind::Activation);
        b.op(&format!("Ch[{step}]"), OpKind::EwMul, &[cb, h], ch, su);
        let yp = b.tensor(&format!("y'[{step}]"), &[("D", d)], TensorKind::Activation);
        b.op(&format!("y'[{step}]"), OpKind::ReduceSum { axis: 1 }, &[ch], yp, su);
        ys.push(yp);
        h_prev = h;
    }

    let ld: [(&str, u64); 2] = [("L", l), ("D", d)];
    let y_cat = b.tensor("y'", &ld, TensorKind::Activation);
    b.op("y'", OpKind::Concat { axis: 0 }, &ys, y_cat, su);
    let d_b = b.tensor("Dskip_bcast", &ld, TensorKind::Weight);
    b.op("Dskip_bcast", OpKind::Reshape, &[t.d_skip], d_b, su);
    let dx = b.tensor("Dx", &ld, TensorKind::Activation);
    // The skip path sits outside the recurrence and runs over whole tensors.
    b.op("Dx", OpKind::EwMul, &[t.x, d_b], dx, OpClass::Elementwise);
    let y = b.tensor("y", &ld, TensorKind::Activation);
    b.op("y", OpKind::EwAdd, &[y_cat, dx], y, OpClass::Elementwise);
    (y, h_prev)
}

/// Standalone state-update subgraph; its operands are graph inputs.
pub fn expand_ssm_operator(cfg: &MambaConfig) -> Result<WorkloadGraph> {
    cfg.validate()?;
    let (l, d, n) = (cfg.tokens(), cfg.d_inner(), cfg.n);
    let mut b = GraphBuilder::new(cfg.stage).with_bits(cfg.element_bits);
    let ld: [(&str, u64); 2] = [("L", l), ("D", d)];
    let ln: [(&str, u64); 2] = [("L", l), ("N", n)];
    let t = SsmTensors {
        x: b.tensor("x", &ld, TensorKind::Activation),
        delta: b.tensor("delta", &ld, TensorKind::Activation),
        b: b.tensor("B", &ln, TensorKind::Activation),
        c: b.tensor("C", &ln, TensorKind::Activation),
        a: b.tensor("A", &[("D", d), ("N", n)], TensorKind::Weight),
        d_skip: b.tensor("Dskip", &[("D", d)], TensorKind::Weight),
        h0: b.tensor("h0", &[("D", d), ("N", n)], TensorKind::State),
    };
    let (y, h) = append_ssm(&mut b, t, l, d, n);
    b.mark_output(y);
    b.mark_output(h);
    Ok(b.finish())
}

/// One Mamba block: norm, input projection, causal conv, SSM, gate, output projection, residual.
pub fn build_mamba_block(cfg: &MambaConfig) -> Result<WorkloadGraph> {
    cfg.validate()?;
    let (l, dm, d, n, r, k) = (cfg.tokens(), cfg.d_model, cfg.d_inner(), cfg.n, cfg.dt_rank, cfg.conv_kernel);
    let mut b = GraphBuilder::new(cfg.stage).with_bits(cfg.element_bits);
    let w = TensorKind::Weight;
    let act = TensorKind::Activation;

    let u = b.tensor("u", &[("L", l), ("Dmodel", dm)], act);
    let norm_w = b.tensor("norm_w", &[("Dmodel", dm)], w);
    let un = b.tensor("u_norm", &[("L", l), ("Dmodel", dm)], act);
    b.op("norm", OpKind::RMSNorm, &[u, norm_w], un, OpClass::Normalization);

    let w_in = b.tensor("W_in", &[("Dmodel", dm), ("XZ", 2 * d)], w);
    let xz = b.tensor("xz", &[("L", l), ("XZ", 2 * d)], act);
    b.op("in_proj", OpKind::MatMul, &[un, w_in], xz, OpClass::Projection);
    let halves = [("x_pre", 0usize), ("z", 1usize)];
    let mut split_out = [TensorId(0); 2];
    for (i, (name, part)) in halves.iter().enumerate() {
        let raw = b.tensor(&format!("{name}_split"), &[("L", l), ("XZ", d)], act);
        b.op(
            &format!("{name}_split"),
            OpKind::Split { axis: 1, sizes: vec![d, d], part: *part },
            &[xz],
            raw,
            OpClass::Elementwise,
        );
        let t = b.tensor(name, &[("L", l), ("D", d)], act);
        b.op(name, OpKind::Reshape, &[raw], t, OpClass::Elementwise);
        split_out[i] = t;
    }
    let [x_pre, z] = split_out;

    let conv_w = b.tensor("conv_w", &[("D", d), ("K", k)], w);
    let xc = b.tensor("x_conv", &[("L", l), ("D", d)], act);
    b.op("conv1d", OpKind::Conv1dDepthwise { kernel: k }, &[x_pre, conv_w], xc, OpClass::Elementwise);
    let x = b.tensor("x", &[("L", l), ("D", d)], act);
    b.op("silu_x", OpKind::SiLU, &[xc], x, OpClass::Activation);

    let w_x = b.tensor("W_x", &[("D", d), ("XP", r + 2 * n)], w);
    let xdbc = b.tensor("x_dbc", &[("L", l), ("XP", r + 2 * n)], act);
    b.op("x_proj", OpKind::MatMul, &[x, w_x], xdbc, OpClass::Projection);
    let parts = [("dt_low", "R", r), ("B", "N", n), ("C", "N", n)];
    let mut pieces = [TensorId(0); 3];
    for (i, (name, label, ext)) in parts.iter().enumerate() {
        let raw = b.tensor(&format!("{name}_split"), &[("L", l), ("XP", *ext)], act);
        b.op(
            &format!("{name}_split"),
            OpKind::Split { axis: 1, sizes: vec![r, n, n], part: i },
            &[xdbc],
            raw,
            OpClass::Elementwise,
        );
        let t = b.tensor(name, &[("L", l), (label, *ext)], act);
        b.op(name, OpKind::Reshape, &[raw], t, OpClass::Elementwise);
        pieces[i] = t;
    }
    let [dt_low, bm, cm] = pieces;

    let w_dt = b.tensor("W_dt", &[("R", r), ("D", d)], w);
    let dt = b.tensor("dt", &[("L", l), ("D", d)], act);
    b.op("dt_proj", OpKind::MatMul, &[dt_low, w_dt], dt, OpClass::Projection);
    let delta = b.tensor("delta", &[("L", l), ("D", d)], act);
    b.op("softplus", OpKind::SoftPlus, &[dt], delta, OpClass::Activation);

    let a = b.tensor("A", &[("D", d), ("N", n)], w);
    let d_skip = b.tensor("Dskip", &[("D", d)], w);
    let h0 = b.tensor("h0", &[("D", d), ("N", n)], TensorKind::State);
    let (y, h_last) = append_ssm(&mut b, SsmTensors { x, delta, b: bm, c: cm, a, d_skip, h0 }, l, d, n);

    let sz = b.tensor("silu_z", &[("L", l), ("D", d)], act);
    b.op("silu_z", OpKind::SiLU, &[z], sz, OpClass::Activation);
    let yg = b.tensor("y_gated", &[("L", l), ("D", d)], act);
    b.op("gate", OpKind::EwMul, &[y, sz], yg, OpClass::Elementwise);
    let w_out = b.tensor("W_out", &[("D", d), ("Dmodel", dm)], w);
    let o = b.tensor("out_proj", &[("L", l), ("Dmodel", dm)], act);
    b.op("out_proj", OpKind::MatMul, &[yg, w_out], o, OpClass::Projection);
    let res = b.tensor("out", &[("L", l), ("Dmodel", dm)], act);
    b.op("residual", OpKind::EwAdd, &[o, u], res, OpClass::Elementwise);
    b.mark_output(res);
    b.mark_output(h_last);
    Ok(b.finish())
}

/// Per-layer operator summary of a pre-norm decoder layer.
///
/// Bytes follow layer-by-layer execution: every operator reads its inputs and
/// weights from off-chip memory and writes its output back.
pub fn build_transformer_descriptor(cfg: &TransformerConfig) -> Result<ModelDescriptor> {
    cfg.validate()?;
    let e = u64::from(cfg.element_bits) / 8;
    let d = cfg.d_model;
    let h = cfg.n_heads;
    let f = cfg.d_ff;
    let (q_len, kv_len) = match (cfg.stage, cfg.kv_cache) {
        (Stage::Prefill, _) => (cfg.seq_len, cfg.seq_len),
        (Stage::Decode, true) => (1, cfg.seq_len),
        (Stage::Decode, false) => (cfg.seq_len, cfg.seq_len),
    };
    let ld = q_len * d;
    let scores = h * q_len * kv_len;
    let proj = |name: &str, k: u64, p: u64| {
        OpDescriptor::new(name, OpClass::Projection, 2 * q_len * k * p, e * (q_len * k + k * p + q_len * p))
    };
    let layer = vec![
        OpDescriptor::new("norm_attn", OpClass::Normalization, 4 * ld, e * (2 * ld + d)),
        proj("qkv_proj", d, 3 * d),
        OpDescriptor::new("qk", OpClass::Attention, 2 * q_len * kv_len * d, e * (ld + kv_len * d + scores)),
        OpDescriptor::new("softmax", OpClass::Attention, 5 * scores, e * 2 * scores),
        OpDescriptor::new("av", OpClass::Attention, 2 * q_len * kv_len * d, e * (scores + kv_len * d + ld)),
        proj("attn_out_proj", d, d),
        OpDescriptor::new("residual_attn", OpClass::Elementwise, ld, e * 3 * ld),
        OpDescriptor::new("norm_ffn", OpClass::Normalization, 4 * ld, e * (2 * ld + d)),
        proj("ffn_up", d, f),
        OpDescriptor::new("relu", OpClass::Activation, q_len * f, e * 2 * q_len * f),
        proj("ffn_down", f, d),
        OpDescriptor::new("residual_ffn", OpClass::Elementwise, ld, e * 3 * ld),
    ];
    let mut extra = Vec::new();
    if cfg.include_lm_head {
        extra.push(proj("lm_head", d, cfg.vocab_size));
    }
    Ok(ModelDescriptor {
        name: "transformer".into(),
        stage: cfg.stage,
        seq_len: cfg.seq_len,
        n_layers: cfg.n_layers,
        layer,
        extra,
    })
}
