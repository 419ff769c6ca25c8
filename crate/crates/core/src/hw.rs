//! Accelerator parameters, silicon area accounting and bandwidth scaling.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::OpKind;

pub const MIB: u64 = 1 << 20;
pub const GB: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceleratorConfig {
    pub pe_count: u64,
    pub clock_hz: f64,
    pub onchip_bytes: u64,
    /// Shared read and write bandwidth to off-chip memory.
    pub offchip_bps: f64,
    /// Cycles per operation by op kind name; unlisted kinds cost 1.
    pub cpo: BTreeMap<String, u32>,
    /// Scalar steps each PE retires per cycle; a multiply-accumulate is one step.
    pub macs_per_pe_per_cycle: f64,
}

impl AcceleratorConfig {
    /// 8192 PEs, 24 MiB, 256 GB/s at 1 GHz, four-cycle transcendental ops.
    pub fn marca() -> Self {
        let mut cpo = BTreeMap::new();
        for k in ["Exp", "SiLU", "Sigmoid"] {
            cpo.insert(k.to_string(), 4);
        }
        AcceleratorConfig {
            pe_count: 8192,
            clock_hz: 1e9,
            onchip_bytes: 24 * MIB,
            offchip_bps: 256.0 * GB,
            cpo,
            macs_per_pe_per_cycle: 1.0,
        }
    }

    pub fn cpo_of(&self, kind: &OpKind) -> u64 {
        u64::from(*self.cpo.get(kind.name()).unwrap_or(&1))
    }

    pub fn bytes_per_cycle(&self) -> f64 {
        self.offchip_bps / self.clock_hz
    }

    /// Cycles to move `bytes` across the off-chip interface.
    pub fn transfer_cycles(&self, bytes: u64) -> u64 {
        if bytes == 0 {
            return 0;
        }
        libm::ceil(bytes as f64 / self.bytes_per_cycle()) as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.pe_count == 0 {
            return Err(Error::Infeasible("accelerator has no PEs".into()));
        }
        if self.onchip_bytes == 0 {
            return Err(Error::Infeasible("accelerator has no on-chip memory".into()));
        }
        if !(self.clock_hz > 0.0 && self.offchip_bps > 0.0 && self.macs_per_pe_per_cycle > 0.0) {
            return Err(Error::InvalidConfig("clock, bandwidth and PE rate must be positive".into()));
        }
        Ok(())
    }
}

pub fn peak_ops_per_s(cfg: &AcceleratorConfig) -> f64 {
    cfg.pe_count as f64 * cfg.clock_hz * cfg.macs_per_pe_per_cycle
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaModel {
    pub area_per_pe: f64,
    pub area_per_byte: f64,
    pub anchor_area: f64,
    pub anchor_bw: f64,
}

impl AreaModel {
    pub const MARCA_AREA: f64 = 222.0;

    /// Splits the reference die 20/80 between MARCA's PEs and its 24 MiB.
    pub fn marca_split() -> Self {
        let a = Self::MARCA_AREA;
        AreaModel {
            area_per_pe: 0.2 * a / 8192.0,
            area_per_byte: 0.8 * a / (24 * MIB) as f64,
            anchor_area: a,
            anchor_bw: 256.0 * GB,
        }
    }

    /// Prices one PE like `bytes_per_pe` bytes of SRAM and fixes the
    /// reference die so that MARCA sits exactly on it.
    pub fn pe_equivalent(bytes_per_pe: f64) -> Self {
        let a = Self::MARCA_AREA;
        let marca_bytes = 8192.0 * bytes_per_pe + (24 * MIB) as f64;
        let per_byte = a / marca_bytes;
        AreaModel { area_per_pe: bytes_per_pe * per_byte, area_per_byte: per_byte, anchor_area: a, anchor_bw: 256.0 * GB }
    }

    /// A PE costs as much as 576 B of SRAM, which puts 32768 PEs with
    /// 10.5 MiB on MARCA's iso-area line.
    pub fn iso_calibrated() -> Self {
        Self::pe_equivalent(576.0)
    }

    pub fn area_of(&self, pe_count: u64, onchip_bytes: u64) -> f64 {
        pe_count as f64 * self.area_per_pe + onchip_bytes as f64 * self.area_per_byte
    }

    pub fn mem_fraction_of(&self, pe_count: u64, onchip_bytes: u64) -> f64 {
        onchip_bytes as f64 * self.area_per_byte / self.area_of(pe_count, onchip_bytes)
    }
}

/// Off-chip bandwidth grows with the die perimeter, i.e. with the square root of area.
pub fn bw_from_area(total_area: f64, model: &AreaModel) -> f64 {
    model.anchor_bw * libm::sqrt(total_area / model.anchor_area)
}

// Absorbs float noise so that exact calibration points do not floor one unit low.
fn floor_eps(x: f64) -> u64 {
    libm::floor(x + 1e-6) as u64
}

/// Splits `total_area` between memory and PEs; other parameters follow `base`.
pub fn config_from_area(
    total_area: f64,
    mem_fraction: f64,
    model: &AreaModel,
    base: &AcceleratorConfig,
) -> Result<AcceleratorConfig> {
    if !(0.0..=1.0).contains(&mem_fraction) {
        return Err(Error::InvalidConfig(format!("memory fraction {mem_fraction} outside [0, 1]")));
    }
    if total_area <= 0.0 {
        return Err(Error::InvalidConfig(format!("area {total_area} must be positive")));
    }
    let pe_count = floor_eps((1.0 - mem_fraction) * total_area / model.area_per_pe);
    if pe_count == 0 {
        return Err(Error::Infeasible(format!("{total_area:.2} mm2 at memory fraction {mem_fraction} leaves no PEs")));
    }
    Ok(AcceleratorConfig {
        pe_count,
        onchip_bytes: floor_eps(mem_fraction * total_area / model.area_per_byte),
        offchip_bps: bw_from_area(total_area, model),
        ..base.clone()
    })
}
