//! CSV and plot-data emitters. Headers are part of the interface and never change.

use std::io::Write;

use ssmfusim_core::dse::DseGrid;
use ssmfusim_core::fusion::SchemeName;
use ssmfusim_core::graph::Stage;
use ssmfusim_core::hw::{GB, MIB};
use ssmfusim_core::roofline::ModelProfile;
use ssmfusim_core::sim::{MemPoint, TimelineEntry};

use crate::error::Result;

pub const ROOFLINE_HEADER: [&str; 9] = ["model", "stage", "L", "class", "ops", "bytes", "oi", "perf_gops", "latency_s"];
pub const SWEEP_MEM_HEADER: [&str; 6] = ["capacity_bytes", "capacity_MiB", "n_splits", "cycles", "latency_ms", "status"];
pub const DSE_HEADER: [&str; 10] =
    ["area_mm2", "mem_fraction", "pe_count", "onchip_MiB", "bw_GBps", "n_splits", "cycles", "latency_ms", "speedup", "status"];
pub const TIMELINE_HEADER: [&str; 5] = ["tile", "start_cycle", "end_cycle", "class", "offchip_bytes"];
pub const SCHEMES_HEADER: [&str; 4] = ["scheme", "local_tensors", "l_split", "d_split"];

fn stage_str(s: Stage) -> &'static str {
    match s {
        Stage::Prefill => "prefill",
        Stage::Decode => "decode",
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per operator class and a `total` row per profile.
pub fn write_roofline<W: Write>(out: W, rows: &[(String, ModelProfile)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROOFLINE_HEADER)?;
    for (model, p) in rows {
        let (stage, l) = (stage_str(p.stage), p.seq_len.to_string());
        for c in &p.classes {
            w.write_record([
                model.as_str(),
                stage,
                &l,
                c.class.as_str(),
                &c.ops.to_string(),
                &c.dram_bytes.to_string(),
                &format!("{:.6}", c.oi),
                &format!("{:.3}", c.roofline_perf / 1e9),
                &format!("{:.9e}", c.latency_s),
            ])?;
        }
        let oi = p.total_ops as f64 / p.total_bytes.max(1) as f64;
        w.write_record([
            model.as_str(),
            stage,
            &l,
            "total",
            &p.total_ops.to_string(),
            &p.total_bytes.to_string(),
            &format!("{oi:.6}"),
            &format!("{:.3}", p.total_ops as f64 / p.latency_s / 1e9),
            &format!("{:.9e}", p.latency_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_mem<W: Write>(out: W, points: &[MemPoint], clock_hz: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_MEM_HEADER)?;
    for p in points {
        w.write_record([
            p.capacity_bytes.to_string(),
            format!("{:.4}", p.capacity_bytes as f64 / MIB as f64),
            p.n_splits.to_string(),
            opt(p.total_cycles),
            opt(p.total_cycles.map(|c| format!("{:.6}", c as f64 / clock_hz * 1e3))),
            p.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dse<W: Write>(out: W, grid: &DseGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DSE_HEADER)?;
    for p in &grid.points {
        w.write_record([
            format!("{:.4}", p.area_mm2),
            format!("{:.4}", p.mem_fraction),
            p.pe_count.to_string(),
            format!("{:.4}", p.onchip_bytes as f64 / MIB as f64),
            format!("{:.3}", p.offchip_bps / GB),
            p.n_splits.to_string(),
            opt(p.cycles),
            opt(p.latency_s.map(|s| format!("{:.6}", s * 1e3))),
            opt(p.speedup.map(|s| format!("{s:.4}"))),
            p.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// gnuplot blocks, one per die area: `area_mm2 mem_fraction latency_ms`, NaN where infeasible.
pub fn write_contour<W: Write>(mut out: W, grid: &DseGrid) -> Result<()> {
    writeln!(out, "# area_mm2 mem_fraction latency_ms")?;
    let mut last: Option<f64> = None;
    for p in &grid.points {
        if last.is_some_and(|a| a != p.area_fraction) {
            writeln!(out)?;
        }
        last = Some(p.area_fraction);
        let lat = p.latency_s.map_or("NaN".to_string(), |s| format!("{:.6}", s * 1e3));
        writeln!(out, "{:.4} {:.4} {}", p.area_mm2, p.mem_fraction, lat)?;
    }
    Ok(())
}

pub fn write_timeline<W: Write>(out: W, timeline: &[TimelineEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMELINE_HEADER)?;
    for e in timeline {
        let idx: Vec<String> = e.index.iter().map(u64::to_string).collect();
        let tile = if idx.is_empty() { e.op.clone() } else { format!("{}[{}]", e.op, idx.join(";")) };
        w.write_record([
            tile,
            e.start.to_string(),
            e.end.to_string(),
            e.class.as_str().to_string(),
            e.offchip_bytes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_schemes<W: Write>(out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCHEMES_HEADER)?;
    for s in SchemeName::ALL {
        let local = s.local_families().join(";");
        let l_split = if s == SchemeName::Uf { "1" } else { "L" };
        let d_split = if s == SchemeName::MaAll { "n" } else { "1" };
        w.write_record([s.as_str(), local.as_str(), l_split, d_split])?;
    }
    w.flush()?;
    Ok(())
}
