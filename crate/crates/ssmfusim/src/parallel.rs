//! Rayon-backed drivers for the sweeps. Results come back in input order, so
//! output is identical for any thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use ssmfusim_core::builders::MambaConfig;
use ssmfusim_core::dse::{DseContext, DseGrid, DseSpec};
use ssmfusim_core::fusion::{generate_schedule, scheme, SchemeName};
use ssmfusim_core::hw::AcceleratorConfig;
use ssmfusim_core::sim::{memory_sweep, MemPoint};
use ssmfusim_core::Error;

use crate::error::{CliError, Result};

/// Runs `f` on a pool of `jobs` threads; 0 lets rayon pick.
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn dse(spec: DseSpec) -> Result<DseGrid> {
    let ctx = DseContext::with_builder(spec, |graph, jobs| {
        jobs.into_par_iter().map(|(n, sc)| Ok((n, generate_schedule(graph, &sc)?))).collect()
    })?;
    let points = (0..ctx.len()).into_par_iter().map(|i| ctx.point(i)).collect::<ssmfusim_core::Result<Vec<_>>>()?;
    Ok(ctx.finish(points))
}

/// Capacities sharing a split factor share a schedule, so each factor is one task.
pub fn memory_sweep_par(
    model: &MambaConfig,
    name: SchemeName,
    cfg: &AcceleratorConfig,
    capacities: &[u64],
) -> Result<Vec<MemPoint>> {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &cap) in capacities.iter().enumerate() {
        let n = match scheme(name, model, cap.max(1)) {
            Ok(sc) => sc.d_split_factor,
            Err(Error::Infeasible(_)) => 0,
            Err(e) => return Err(e.into()),
        };
        groups.entry(n).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let done = groups
        .par_iter()
        .map(|idx| {
            let caps: Vec<u64> = idx.iter().map(|&i| capacities[i]).collect();
            memory_sweep(model, name, cfg, &caps)
        })
        .collect::<ssmfusim_core::Result<Vec<_>>>()?;
    let mut out: Vec<Option<MemPoint>> = vec![None; capacities.len()];
    for (idx, pts) in groups.iter().zip(done) {
        for (&i, p) in idx.iter().zip(pts) {
            out[i] = Some(p);
        }
    }
    Ok(out.into_iter().flatten().collect())
}
