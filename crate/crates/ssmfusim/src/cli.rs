//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use ssmfusim_core::builders::build_mamba_block;
use ssmfusim_core::builders::build_transformer_descriptor;
use ssmfusim_core::dse::{best_point, default_area_fractions, default_mem_fractions, DseSpec};
use ssmfusim_core::fusion::{scheme, SchemeName};
use ssmfusim_core::graph::Stage;
use ssmfusim_core::hw::AreaModel;
use ssmfusim_core::roofline::{mamba_descriptor, profile_model};
use ssmfusim_core::sim::{simulate_model, SimOptions, SimReport};

use crate::config::{load_accel, load_model, parse_bytes, ModelFile};
use crate::error::{CliError, Result};
use crate::parallel::{dse, memory_sweep_par, with_pool};
use crate::report;
use crate::workload::WorkloadFile;

#[derive(Debug, Parser)]
#[command(name = "ssmfusim", version, about = "Operator fusion simulator for state space model accelerators")]
pub struct Cli {
    /// Worker threads for sweeps; 0 uses every core.
    #[arg(long, global = true, env = "SSMFUSIM_JOBS", default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StageArg {
    Prefill,
    Decode,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Prefill => Stage::Prefill,
            StageArg::Decode => Stage::Decode,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AreaArg {
    /// 20% PEs and 80% SRAM on the reference die.
    Default,
    /// A PE priced as 576 B of SRAM.
    Calibrated,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-class operational intensity and roofline latency under layer-by-layer execution.
    Roofline {
        /// Preset (`mamba-2.8b`, `opt-2.7b`) or model JSON; repeatable.
        #[arg(long, required = true)]
        model: Vec<String>,
        #[arg(long = "L", value_delimiter = ',', required = true)]
        seq_len: Vec<u64>,
        #[arg(long, value_enum, default_value = "prefill")]
        stage: StageArg,
        #[arg(long, default_value = "marca")]
        accel: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulates one fusion scheme and prints a JSON report.
    Simulate {
        #[arg(long, default_value = "mamba-2.8b")]
        model: String,
        #[arg(long, default_value = "All")]
        scheme: String,
        #[arg(long, default_value = "marca")]
        accel: String,
        #[arg(long = "L")]
        seq_len: u64,
        #[arg(long, value_enum, default_value = "prefill")]
        stage: StageArg,
        /// Writes the per-tile timeline of one block as CSV.
        #[arg(long)]
        timeline: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Latency as a function of on-chip capacity.
    SweepMem {
        #[arg(long, default_value = "mamba-2.8b")]
        model: String,
        #[arg(long, default_value = "MA-All")]
        scheme: String,
        #[arg(long, default_value = "marca")]
        accel: String,
        #[arg(long = "L")]
        seq_len: u64,
        #[arg(long, value_enum, default_value = "prefill")]
        stage: StageArg,
        /// Byte counts, suffixes allowed, e.g. `1MiB,6MiB,24MiB`.
        #[arg(long, value_delimiter = ',', required = true)]
        capacities: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweeps die area against the share of it given to memory.
    Dse {
        #[arg(long, default_value = "mamba-2.8b")]
        model: String,
        #[arg(long, default_value = "MA-All")]
        scheme: String,
        #[arg(long = "L")]
        seq_len: u64,
        #[arg(long, value_enum, default_value = "prefill")]
        stage: StageArg,
        #[arg(long, value_enum, default_value = "default")]
        area_model: AreaArg,
        /// Die areas relative to the reference.
        #[arg(long, value_delimiter = ',')]
        area_fractions: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        mem_fractions: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// gnuplot data for a latency contour.
        #[arg(long)]
        contour: Option<PathBuf>,
    },
    /// Lists the fusion schemes and the tensors each keeps on-chip.
    Schemes {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the expanded block graph as JSON.
    EmitWorkload {
        #[arg(long, default_value = "mamba-2.8b")]
        model: String,
        #[arg(long = "L")]
        seq_len: u64,
        #[arg(long, value_enum, default_value = "prefill")]
        stage: StageArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: Option<&Path>, v: &T) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn parse_scheme(s: &str) -> Result<SchemeName> {
    s.parse::<SchemeName>().map_err(|_| {
        let names: Vec<&str> = SchemeName::ALL.iter().map(|n| n.as_str()).collect();
        CliError::Config(format!("unknown scheme {s:?}; expected one of {}", names.join(", ")))
    })
}

#[derive(Serialize)]
struct SimulateOut<'a> {
    model: String,
    scheme: &'a str,
    stage: Stage,
    seq_len: u64,
    n_layers: u64,
    n_splits: u64,
    latency_s: f64,
    #[serde(flatten)]
    report: &'a SimReport,
}

pub fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs;
    match cli.command {
        Command::Roofline { model, seq_len, stage, accel, out } => {
            let cfg = load_accel(&accel)?;
            let mut rows = Vec::new();
            for spec in &model {
                for &l in &seq_len {
                    let desc = match load_model(spec, l, stage.into())? {
                        ModelFile::Mamba(m) => mamba_descriptor(&m)?,
                        ModelFile::Transformer(t) => build_transformer_descriptor(&t)?,
                    };
                    rows.push((spec.clone(), profile_model(&desc, &cfg)));
                }
            }
            report::write_roofline(sink(out.as_deref())?, &rows)
        }
        Command::Simulate { model, scheme: s, accel, seq_len, stage, timeline, out } => {
            let name = parse_scheme(&s)?;
            let cfg = load_accel(&accel)?;
            let m = load_model(&model, seq_len, stage.into())?.mamba()?;
            let n_splits = scheme(name, &m, cfg.onchip_bytes)?.d_split_factor;
            let mut rep = simulate_model(&m, name, &cfg, SimOptions { timeline: timeline.is_some() })?;
            if let Some(path) = &timeline {
                report::write_timeline(BufWriter::new(File::create(path)?), &rep.timeline)?;
                rep.timeline.clear();
            }
            let summary = SimulateOut {
                model,
                scheme: name.as_str(),
                stage: m.stage,
                seq_len,
                n_layers: m.n_layers,
                n_splits,
                latency_s: rep.latency_s(&cfg),
                report: &rep,
            };
            write_json(out.as_deref(), &summary)
        }
        Command::SweepMem { model, scheme: s, accel, seq_len, stage, capacities, out } => {
            let name = parse_scheme(&s)?;
            let cfg = load_accel(&accel)?;
            let m = load_model(&model, seq_len, stage.into())?.mamba()?;
            let caps = capacities.iter().map(|c| parse_bytes(c)).collect::<Result<Vec<_>>>()?;
            let points = with_pool(jobs, || memory_sweep_par(&m, name, &cfg, &caps))??;
            report::write_sweep_mem(sink(out.as_deref())?, &points, cfg.clock_hz)
        }
        Command::Dse { model, scheme: s, seq_len, stage, area_model, area_fractions, mem_fractions, out, contour } => {
            let name = parse_scheme(&s)?;
            let m = load_model(&model, seq_len, stage.into())?.mamba()?;
            let area = match area_model {
                AreaArg::Default => AreaModel::marca_split(),
                AreaArg::Calibrated => AreaModel::iso_calibrated(),
            };
            let mut spec = DseSpec::new(m, name, area);
            spec.area_fractions = area_fractions.unwrap_or_else(default_area_fractions);
            spec.mem_fractions = mem_fractions.unwrap_or_else(default_mem_fractions);
            let grid = with_pool(jobs, || dse(spec))??;
            if let Some(path) = &contour {
                report::write_contour(BufWriter::new(File::create(path)?), &grid)?;
            }
            report::write_dse(sink(out.as_deref())?, &grid)?;
            if let Ok((p, speedup)) = best_point(&grid) {
                eprintln!(
                    "best: {:.1} mm2, {} PEs, {:.2} MiB on-chip, speedup {speedup:.3}",
                    p.area_mm2,
                    p.pe_count,
                    p.onchip_bytes as f64 / (1u64 << 20) as f64
                );
            }
            Ok(())
        }
        Command::Schemes { out } => report::write_schemes(sink(out.as_deref())?),
        Command::EmitWorkload { model, seq_len, stage, out } => {
            let m = load_model(&model, seq_len, stage.into())?.mamba()?;
            let g = build_mamba_block(&m)?;
            write_json(out.as_deref(), &WorkloadFile::from_graph(&g))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn scheme_names_parse_case_insensitively() {
        assert_eq!(parse_scheme("ma-all").unwrap(), SchemeName::MaAll);
        assert!(matches!(parse_scheme("C"), Err(CliError::Config(_))));
    }
}
