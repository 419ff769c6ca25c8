//! Accelerator and model files, and the built-in presets.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ssmfusim_core::builders::{MambaConfig, TransformerConfig};
use ssmfusim_core::graph::Stage;
use ssmfusim_core::hw::{AcceleratorConfig, GB};

use crate::error::{CliError, Result};

const KIND_NAMES: [&str; 18] = [
    "MatMul",
    "Einsum",
    "EwAdd",
    "EwMul",
    "Exp",
    "SiLU",
    "Sigmoid",
    "SoftPlus",
    "OuterProduct",
    "ReduceSum",
    "Slice",
    "Split",
    "Transpose",
    "Reshape",
    "Concat",
    "Conv1dDepthwise",
    "RMSNorm",
    "Softmax",
];

/// On-disk accelerator description. Bandwidth is in GB/s and CPO keys are
/// op kind names in any case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceleratorFile {
    pub pe_count: u64,
    pub clock_hz: f64,
    pub onchip_bytes: u64,
    pub offchip_gbps: f64,
    #[serde(default)]
    pub cpo: BTreeMap<String, u32>,
    #[serde(default)]
    pub macs_per_pe_per_cycle: Option<f64>,
}

impl AcceleratorFile {
    pub fn into_config(self) -> Result<AcceleratorConfig> {
        let mut cpo = BTreeMap::new();
        for (k, v) in self.cpo {
            let name = KIND_NAMES
                .iter()
                .find(|n| n.eq_ignore_ascii_case(&k))
                .ok_or_else(|| CliError::Config(format!("unknown op kind {k:?} in cpo")))?;
            cpo.insert(name.to_string(), v);
        }
        let cfg = AcceleratorConfig {
            pe_count: self.pe_count,
            clock_hz: self.clock_hz,
            onchip_bytes: self.onchip_bytes,
            offchip_bps: self.offchip_gbps * GB,
            cpo,
            macs_per_pe_per_cycle: self.macs_per_pe_per_cycle.unwrap_or(1.0),
        };
        if !(cfg.clock_hz > 0.0 && cfg.offchip_bps > 0.0 && cfg.macs_per_pe_per_cycle > 0.0) {
            return Err(CliError::Config("clock, bandwidth and PE rate must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn from_config(cfg: &AcceleratorConfig) -> Self {
        AcceleratorFile {
            pe_count: cfg.pe_count,
            clock_hz: cfg.clock_hz,
            onchip_bytes: cfg.onchip_bytes,
            offchip_gbps: cfg.offchip_bps / GB,
            cpo: cfg.cpo.iter().map(|(k, v)| (k.to_lowercase(), *v)).collect(),
            macs_per_pe_per_cycle: Some(cfg.macs_per_pe_per_cycle),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// A preset name or a path to a JSON file.
pub fn load_accel(spec: &str) -> Result<AcceleratorConfig> {
    match spec.to_ascii_lowercase().as_str() {
        "marca" => Ok(AcceleratorConfig::marca()),
        _ => {
            let text = read(Path::new(spec))?;
            let file: AcceleratorFile = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{spec}: {e}")))?;
            file.into_config()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelFile {
    Mamba(MambaConfig),
    Transformer(TransformerConfig),
}

impl ModelFile {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFile::Mamba(_) => "mamba",
            ModelFile::Transformer(_) => "transformer",
        }
    }

    /// Same model at another length and stage.
    pub fn at(&self, seq_len: u64, stage: Stage) -> Self {
        match self {
            ModelFile::Mamba(m) => ModelFile::Mamba(MambaConfig { seq_len, stage, ..m.clone() }),
            ModelFile::Transformer(t) => ModelFile::Transformer(TransformerConfig { seq_len, stage, ..t.clone() }),
        }
    }

    pub fn mamba(self) -> Result<MambaConfig> {
        match self {
            ModelFile::Mamba(m) => Ok(m),
            ModelFile::Transformer(_) => Err(CliError::Config("this command needs a state space model".into())),
        }
    }
}

/// A preset name (`mamba-2.8b`, `opt-2.7b`) or a path to a JSON file; the
/// sequence length and stage always come from the caller.
pub fn load_model(spec: &str, seq_len: u64, stage: Stage) -> Result<ModelFile> {
    let model = match spec.to_ascii_lowercase().as_str() {
        "mamba-2.8b" => ModelFile::Mamba(MambaConfig::mamba_2_8b(seq_len, stage)),
        "opt-2.7b" => ModelFile::Transformer(TransformerConfig::opt_2_7b(seq_len, stage)),
        _ => {
            let text = read(Path::new(spec))?;
            let m: ModelFile = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{spec}: {e}")))?;
            m.at(seq_len, stage)
        }
    };
    match &model {
        ModelFile::Mamba(m) => m.validate()?,
        ModelFile::Transformer(t) => t.validate()?,
    }
    Ok(model)
}

/// Byte counts like `1048576`, `512KiB`, `6.27MiB` or `1GiB`.
pub fn parse_bytes(s: &str) -> Result<u64> {
    let t = s.trim();
    let (num, scale) = [("GiB", 1u64 << 30), ("MiB", 1 << 20), ("KiB", 1 << 10), ("B", 1)]
        .iter()
        .find_map(|(suf, k)| t.strip_suffix(suf).map(|n| (n.trim(), *k)))
        .unwrap_or((t, 1));
    let v: f64 = num.parse().map_err(|_| CliError::Config(format!("bad byte count {s:?}")))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(CliError::Config(format!("bad byte count {s:?}")));
    }
    Ok((v * scale as f64).round() as u64)
}
