//! Design-space sweep over die area and the share of it spent on memory.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::builders::{build_mamba_block, MambaConfig};
use crate::error::{Error, Result};
use crate::fusion::{generate_schedule, scheme, Schedule, SchemeName};
use crate::graph::WorkloadGraph;
use crate::hw::{config_from_area, AcceleratorConfig, AreaModel};
use crate::sim::{simulate, SimOptions};

/// 12.5% to 100% of the reference die in eighths, plus 125%.
pub fn default_area_fractions() -> Vec<f64> {
    let mut v: Vec<f64> = (1..=8).map(|k| k as f64 / 8.0).collect();
    v.push(1.25);
    v
}

/// 0 to 1 in steps of 0.05; both ends are infeasible and get flagged.
pub fn default_mem_fractions() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DseSpec {
    pub area_fractions: Vec<f64>,
    pub mem_fractions: Vec<f64>,
    pub scheme: SchemeName,
    pub model: MambaConfig,
    pub area: AreaModel,
    /// Clock and CPO source; also the reference design.
    pub reference: AcceleratorConfig,
}

impl DseSpec {
    pub fn new(model: MambaConfig, scheme: SchemeName, area: AreaModel) -> Self {
        DseSpec {
            area_fractions: default_area_fractions(),
            mem_fractions: default_mem_fractions(),
            scheme,
            model,
            area,
            reference: AcceleratorConfig::marca(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsePoint {
    pub area_fraction: f64,
    pub area_mm2: f64,
    pub mem_fraction: f64,
    pub pe_count: u64,
    pub onchip_bytes: u64,
    pub offchip_bps: f64,
    pub n_splits: u64,
    pub cycles: Option<u64>,
    pub latency_s: Option<f64>,
    pub speedup: Option<f64>,
    pub status: String,
}

impl DsePoint {
    pub fn feasible(&self) -> bool {
        self.cycles.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DseGrid {
    pub reference_cycles: u64,
    /// Row-major: area fraction outer, memory fraction inner.
    pub points: Vec<DsePoint>,
}

impl DseGrid {
    /// Points sharing one total area.
    pub fn iso_area(&self, area_fraction: f64) -> Vec<&DsePoint> {
        self.points.iter().filter(|p| p.area_fraction == area_fraction).collect()
    }
}

enum Plan {
    Ready { cfg: AcceleratorConfig, n: u64 },
    Rejected { cfg: Option<AcceleratorConfig>, n: u64, why: String },
}

/// Everything a sweep needs, prepared once; points are then independent.
pub struct DseContext {
    spec: DseSpec,
    graph: WorkloadGraph,
    plans: Vec<(f64, f64, Plan)>,
    schedules: BTreeMap<u64, Schedule>,
    reference_cycles: u64,
}

impl DseContext {
    pub fn new(spec: DseSpec) -> Result<Self> {
        Self::with_builder(spec, |graph, jobs| jobs.into_iter().map(|(n, sc)| Ok((n, generate_schedule(graph, &sc)?))).collect())
    }

    /// Like [`DseContext::new`] but lets the caller build the distinct schedules,
    /// e.g. in parallel.
    pub fn with_builder(
        spec: DseSpec,
        build: impl FnOnce(&WorkloadGraph, Vec<(u64, crate::fusion::FusionScheme)>) -> Result<Vec<(u64, Schedule)>>,
    ) -> Result<Self> {
        for &a in &spec.area_fractions {
            if !(a > 0.0 && a <= 1.25) {
                return Err(Error::InvalidConfig(format!("area fraction {a} outside (0, 1.25]")));
            }
        }
        let graph = build_mamba_block(&spec.model)?;
        let mut plans = Vec::new();
        let mut needed: BTreeMap<u64, crate::fusion::FusionScheme> = BTreeMap::new();
        let ref_scheme = scheme(spec.scheme, &spec.model, spec.reference.onchip_bytes)?;
        needed.insert(ref_scheme.d_split_factor, ref_scheme.clone());
        for &a in &spec.area_fractions {
            for &m in &spec.mem_fractions {
                let plan = match config_from_area(a * spec.area.anchor_area, m, &spec.area, &spec.reference) {
                    Err(Error::Infeasible(why)) => Plan::Rejected { cfg: None, n: 0, why },
                    Err(e) => return Err(e),
                    Ok(cfg) if cfg.onchip_bytes == 0 => {
                        Plan::Rejected { cfg: Some(cfg), n: 0, why: "no on-chip memory".to_string() }
                    }
                    Ok(cfg) => match scheme(spec.scheme, &spec.model, cfg.onchip_bytes) {
                        Ok(sc) => {
                            let n = sc.d_split_factor;
                            needed.entry(n).or_insert(sc);
                            Plan::Ready { cfg, n }
                        }
                        Err(Error::Infeasible(why)) => Plan::Rejected { cfg: Some(cfg), n: 0, why },
                        Err(e) => return Err(e),
                    },
                };
                plans.push((a, m, plan));
            }
        }
        let schedules: BTreeMap<u64, Schedule> = build(&graph, needed.into_iter().collect())?.into_iter().collect();
        let reference = simulate(&graph, &schedules[&ref_scheme.d_split_factor], &spec.reference, SimOptions::default())?;
        Ok(DseContext { reference_cycles: reference.total_cycles * spec.model.n_layers, spec, graph, plans, schedules })
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn reference_cycles(&self) -> u64 {
        self.reference_cycles
    }

    /// Simulates grid point `i`; infeasible designs come back flagged.
    pub fn point(&self, i: usize) -> Result<DsePoint> {
        let (a, m, plan) = &self.plans[i];
        let area_mm2 = a * self.spec.area.anchor_area;
        let blank = |cfg: Option<&AcceleratorConfig>, n: u64, status: String| DsePoint {
            area_fraction: *a,
            area_mm2,
            mem_fraction: *m,
            pe_count: cfg.map_or(0, |c| c.pe_count),
            onchip_bytes: cfg.map_or(0, |c| c.onchip_bytes),
            offchip_bps: cfg.map_or(0.0, |c| c.offchip_bps),
            n_splits: n,
            cycles: None,
            latency_s: None,
            speedup: None,
            status,
        };
        match plan {
            Plan::Rejected { cfg, n, why } => Ok(blank(cfg.as_ref(), *n, format!("infeasible: {why}"))),
            Plan::Ready { cfg, n } => match simulate(&self.graph, &self.schedules[n], cfg, SimOptions::default()) {
                Ok(r) => {
                    let cycles = r.total_cycles * self.spec.model.n_layers;
                    let mut p = blank(Some(cfg), *n, "ok".to_string());
                    p.cycles = Some(cycles);
                    p.latency_s = Some(cycles as f64 / cfg.clock_hz);
                    p.speedup = Some(self.reference_cycles as f64 / cycles as f64);
                    Ok(p)
                }
                Err(Error::Infeasible(why)) => Ok(blank(Some(cfg), *n, format!("infeasible: {why}"))),
                Err(e) => Err(e),
            },
        }
    }

    pub fn finish(&self, points: Vec<DsePoint>) -> DseGrid {
        DseGrid { reference_cycles: self.reference_cycles, points }
    }
}

pub fn sweep(spec: DseSpec) -> Result<DseGrid> {
    let ctx = DseContext::new(spec)?;
    let points = (0..ctx.len()).map(|i| ctx.point(i)).collect::<Result<Vec<_>>>()?;
    Ok(ctx.finish(points))
}

/// Fastest feasible point and its speedup over the reference; ties go to the
/// smaller die, then to more memory.
pub fn best_point(grid: &DseGrid) -> Result<(&DsePoint, f64)> {
    best_of(grid.points.iter(), grid.reference_cycles)
}

pub fn best_of<'a>(points: impl Iterator<Item = &'a DsePoint>, reference_cycles: u64) -> Result<(&'a DsePoint, f64)> {
    let best = points.filter(|p| p.feasible()).min_by(|x, y| {
        x.cycles
            .cmp(&y.cycles)
            .then(x.area_mm2.partial_cmp(&y.area_mm2).unwrap_or(core::cmp::Ordering::Equal))
            .then(y.onchip_bytes.cmp(&x.onchip_bytes))
    });
    match best {
        Some(p) => Ok((p, reference_cycles as f64 / p.cycles.unwrap_or(1) as f64)),
        None => Err(Error::Infeasible("no feasible design point".into())),
    }
}

/// Distinct memory fractions present in a grid, ascending.
pub fn mem_fraction_set(grid: &DseGrid) -> Vec<f64> {
    let mut keys: BTreeSet<u64> = BTreeSet::new();
    for p in &grid.points {
        keys.insert(p.mem_fraction.to_bits());
    }
    let mut v: Vec<f64> = keys.into_iter().map(f64::from_bits).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    v
}
