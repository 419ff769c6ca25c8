//! Fusion schemes over the state-update block and the tile schedules they induce.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::builders::MambaConfig;
use crate::deps::{infer_tile_deps, TileGraph, TileGrid, TileId, Tiling};
use crate::error::{Error, Result};
use crate::graph::{topo_order, OpClass, OpId, TensorId, WorkloadGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SchemeName {
    #[serde(rename = "UF")]
    Uf,
    A,
    B,
    #[serde(rename = "A-B")]
    AB,
    #[serde(rename = "AS")]
    As,
    #[serde(rename = "BS")]
    Bs,
    #[serde(rename = "AS-B")]
    AsB,
    #[serde(rename = "BS-A")]
    BsA,
    All,
    #[serde(rename = "MA-All")]
    MaAll,
}

impl SchemeName {
    pub const ALL: [SchemeName; 10] = [
        SchemeName::Uf,
        SchemeName::A,
        SchemeName::B,
        SchemeName::AB,
        SchemeName::As,
        SchemeName::Bs,
        SchemeName::AsB,
        SchemeName::BsA,
        SchemeName::All,
        SchemeName::MaAll,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeName::Uf => "UF",
            SchemeName::A => "A",
            SchemeName::B => "B",
            SchemeName::AB => "A-B",
            SchemeName::As => "AS",
            SchemeName::Bs => "BS",
            SchemeName::AsB => "AS-B",
            SchemeName::BsA => "BS-A",
            SchemeName::All => "All",
            SchemeName::MaAll => "MA-All",
        }
    }

    /// Tensor families kept on-chip. `h` appears twice: the carried and the new state.
    pub fn local_families(self) -> &'static [&'static str] {
        match self {
            SchemeName::Uf => &[],
            SchemeName::A => &["dA"],
            SchemeName::B => &["dB"],
            SchemeName::AB => &["dA", "dB"],
            SchemeName::As => &["dA", "exp_dA", "h", "h"],
            SchemeName::Bs => &["dB", "dBx", "h", "h"],
            SchemeName::AsB => &["dA", "exp_dA", "h", "h", "dB"],
            SchemeName::BsA => &["dB", "dBx", "h", "h", "dA"],
            SchemeName::All | SchemeName::MaAll => &["dA", "exp_dA", "dB", "dBx", "h", "h", "Ch"],
        }
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeName::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownScheme(s.to_string()))
    }
}

/// Printable name of a tensor family.
pub fn family_label(family: &str) -> &str {
    match family {
        "dA" => "ΔA",
        "exp_dA" => "Exp(ΔA)",
        "dB" => "ΔB",
        "dBx" => "ΔBx",
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionScheme {
    pub name: SchemeName,
    pub local_tensors: Vec<String>,
    pub l_split: bool,
    pub d_split_factor: u64,
}

impl FusionScheme {
    /// A scheme with an explicit D split; only MA-All honours `n > 1`.
    pub fn with_splits(name: SchemeName, n: u64) -> Self {
        FusionScheme {
            name,
            local_tensors: name.local_families().iter().map(|s| s.to_string()).collect(),
            l_split: name != SchemeName::Uf,
            d_split_factor: if name == SchemeName::MaAll { n.max(1) } else { 1 },
        }
    }

    fn families(&self) -> BTreeSet<&str> {
        let mut f = BTreeSet::new();
        for t in &self.local_tensors {
            if t == "h" {
                f.insert("hmul");
            }
            f.insert(t.as_str());
        }
        f
    }
}

pub fn scheme(name: SchemeName, cfg: &MambaConfig, memory_bytes: u64) -> Result<FusionScheme> {
    let n = if name == SchemeName::MaAll { compute_d_splits(cfg.d_inner(), cfg.n, cfg.element_bits, memory_bytes)? } else { 1 };
    Ok(FusionScheme::with_splits(name, n))
}

/// Bytes that must stay resident to fuse the whole state update for one timestep.
pub fn required_bytes(d: u64, n: u64, element_bits: u32) -> u64 {
    (5 * d * n + d) * u64::from(element_bits) / 8
}

/// Smallest number of D slices whose per-slice working set fits in `memory_bytes`.
pub fn compute_d_splits(d: u64, n: u64, element_bits: u32, memory_bytes: u64) -> Result<u64> {
    if memory_bytes == 0 {
        return Err(Error::InvalidConfig("on-chip memory must be positive".into()));
    }
    if required_bytes(1, n, element_bits) > memory_bytes {
        return Err(Error::Infeasible(format!(
            "a single D slice needs {} B, only {memory_bytes} B on chip",
            required_bytes(1, n, element_bits)
        )));
    }
    let mut k = required_bytes(d, n, element_bits).div_ceil(memory_bytes).max(1);
    // Ragged slices can overshoot the even share; widen until the largest fits.
    while k < d && required_bytes(d.div_ceil(k), n, element_bits) > memory_bytes {
        k += 1;
    }
    Ok(k.min(d))
}

fn family(name: &str) -> &str {
    name.split('[').next().unwrap_or(name)
}

/// (first fused position, D slice, timestep).
type GroupKey = (usize, u64, u64);

fn step_of(name: &str) -> Option<u64> {
    let open = name.find('[')?;
    name[open + 1..].strip_suffix(']')?.parse().ok()
}

/// Ordered tile groups. Each group runs back to back; fused groups hold one
/// (D slice, timestep) chain, other groups a single whole op.
#[derive(Clone, Debug)]
pub struct Schedule {
    pub groups: Vec<Vec<TileId>>,
    pub fused: BTreeSet<OpId>,
    pub local: BTreeSet<TensorId>,
    pub tilings: BTreeMap<TensorId, Tiling>,
    pub deps: TileGraph,
    pub d_split_factor: u64,
}

impl Schedule {
    pub fn order(&self) -> Vec<TileId> {
        self.groups.iter().flatten().cloned().collect()
    }

    /// Number of tiles producing each locally kept tensor family.
    pub fn tile_counts(&self, graph: &WorkloadGraph, scheme: &FusionScheme) -> BTreeMap<String, u64> {
        let mut counts: BTreeMap<String, u64> = scheme.local_tensors.iter().map(|f| (f.clone(), 0)).collect();
        for t in self.groups.iter().flatten() {
            let out = graph.tensor(graph.op(t.op).output);
            if let Some(c) = counts.get_mut(family(&out.name)) {
                *c += 1;
            }
        }
        counts
    }
}

/// Tensors that ultimately back `t`, looking through data-movement ops.
pub fn base_tensors(graph: &WorkloadGraph, producers: &BTreeMap<TensorId, OpId>, t: TensorId) -> BTreeSet<TensorId> {
    let mut out = BTreeSet::new();
    let mut stack = vec![t];
    while let Some(t) = stack.pop() {
        match producers.get(&t).map(|o| graph.op(*o)) {
            Some(op) if op.kind.is_data_movement() => stack.extend(op.inputs.iter().copied()),
            _ => {
                out.insert(t);
            }
        }
    }
    out
}

pub fn generate_schedule(graph: &WorkloadGraph, scheme: &FusionScheme) -> Result<Schedule> {
    let order = topo_order(graph)?;
    let pos: BTreeMap<OpId, usize> = order.iter().enumerate().map(|(i, o)| (*o, i)).collect();
    let producers = graph.producers();
    let families = scheme.families();

    let mut local = BTreeSet::new();
    for op in graph.ops.values() {
        let out = graph.tensor(op.output);
        if op.class == OpClass::StateUpdate && !op.kind.is_data_movement() && families.contains(family(&out.name)) {
            local.insert(op.output);
        }
    }
    let mut fused = BTreeSet::new();
    for op in graph.ops.values() {
        if op.class != OpClass::StateUpdate || op.kind.is_data_movement() {
            continue;
        }
        let reads_local = op.inputs.iter().any(|t| base_tensors(graph, &producers, *t).iter().any(|b| local.contains(b)));
        if local.contains(&op.output) || reads_local {
            fused.insert(op.id);
        }
    }

    let n = scheme.d_split_factor;
    let mut tilings = BTreeMap::new();
    for id in &fused {
        let out = graph.tensor(graph.op(*id).output);
        let mut t = Tiling::none();
        if scheme.l_split {
            if let Some(ax) = out.axis("L") {
                t = t.split("L", out.dims[ax].extent);
            }
        }
        if n > 1 && out.axis("D").is_some() {
            t = t.split("D", n);
        }
        tilings.insert(out.id, t);
    }
    let deps = infer_tile_deps(graph, &tilings)?;

    // Node key: (first op position, d slice, timestep); unfused ops are their own node.
    let mut node_of: BTreeMap<TileId, (usize, u64, u64)> = BTreeMap::new();
    let mut members: BTreeMap<(usize, u64, u64), Vec<TileId>> = BTreeMap::new();
    let mut placed: Vec<(TileId, Option<(u64, u64)>)> = Vec::with_capacity(deps.tiles.len());
    for tile in &deps.tiles {
        let op = graph.op(tile.op);
        if !fused.contains(&op.id) {
            placed.push((tile.clone(), None));
            continue;
        }
        let out = graph.tensor(op.output);
        let grid = TileGrid::new(out, &tilings[&out.id])?;
        let at = |label: &str| {
            let ax = out.axis(label)?;
            grid.split_axes.iter().position(|a| *a == ax).map(|k| tile.index[k])
        };
        let t = match at("L") {
            Some(t) => t,
            None => step_of(&op.name).ok_or_else(|| Error::Tiling(format!("fused op {} has no timestep", op.name)))?,
        };
        let d = at("D").unwrap_or(0);
        placed.push((tile.clone(), Some((d, t))));
    }
    let first_fused = fused.iter().map(|o| pos[o]).min().unwrap_or(0);
    for (tile, dt) in placed {
        let key = match dt {
            Some((d, t)) => (first_fused, d, t),
            None => (pos[&tile.op], 0, 0),
        };
        node_of.insert(tile.clone(), key);
        members.entry(key).or_default().push(tile);
    }

    let mut indeg: BTreeMap<GroupKey, usize> = members.keys().map(|k| (*k, 0)).collect();
    let mut succ: BTreeMap<GroupKey, BTreeSet<GroupKey>> = BTreeMap::new();
    for (c, ps) in &deps.deps {
        let cn = node_of[c];
        for p in ps {
            let pn = node_of[p];
            if pn != cn && succ.entry(pn).or_default().insert(cn) {
                *indeg.get_mut(&cn).unwrap() += 1;
            }
        }
    }
    let mut ready: BTreeSet<(usize, u64, u64)> = indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut groups = Vec::with_capacity(members.len());
    while let Some(k) = ready.pop_first() {
        let mut tiles = members.remove(&k).unwrap_or_default();
        tiles.sort_by(|a, b| (pos[&a.op], &a.index).cmp(&(pos[&b.op], &b.index)));
        groups.push(tiles);
        for s in succ.get(&k).into_iter().flatten() {
            let d = indeg.get_mut(s).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(*s);
            }
        }
    }
    if !members.is_empty() {
        let stuck: Vec<OpId> = members.values().flatten().map(|t| t.op).collect();
        return Err(Error::Cycle(stuck));
    }
    Ok(Schedule { groups, fused, local, tilings, deps, d_split_factor: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::build_mamba_block;
    use crate::graph::Stage;
    use crate::hw::MIB;

    fn small(l: u64) -> MambaConfig {
        MambaConfig { d_model: 4, expand: 2, n: 3, dt_rank: 2, conv_kernel: 2, ..MambaConfig::mamba_2_8b(l, Stage::Prefill) }
    }

    #[test]
    fn eq2_threshold() {
        assert_eq!(required_bytes(5120, 64, 32), 6_574_080);
        assert_eq!(required_bytes(1, 1, 32), 24);
        assert_eq!(required_bytes(5120, 128, 32), 13_127_680);
    }

    #[test]
    fn eq3_split_counts() {
        assert_eq!(compute_d_splits(5120, 64, 32, 24 * MIB).unwrap(), 1);
        assert_eq!(compute_d_splits(5120, 64, 32, MIB).unwrap(), 7);
        assert_eq!(compute_d_splits(5120, 64, 32, 6_574_080).unwrap(), 1);
        assert!(matches!(compute_d_splits(5120, 64, 32, 1000), Err(Error::Infeasible(_))));
    }

    #[test]
    fn scheme_table() {
        let cfg = MambaConfig::mamba_2_8b(1024, Stage::Prefill);
        let uf = scheme(SchemeName::Uf, &cfg, 24 * MIB).unwrap();
        assert!(uf.local_tensors.is_empty() && !uf.l_split);
        let a_s = scheme(SchemeName::As, &cfg, 24 * MIB).unwrap();
        assert_eq!(a_s.local_tensors.iter().filter(|t| *t == "h").count(), 2);
        let ma = scheme(SchemeName::MaAll, &cfg, MIB).unwrap();
        assert_eq!(ma.d_split_factor, 7);
        assert_eq!("ma-all".parse::<SchemeName>().unwrap(), SchemeName::MaAll);
        assert!(matches!("X".parse::<SchemeName>(), Err(Error::UnknownScheme(_))));
    }

    fn names(g: &WorkloadGraph, tiles: &[TileId]) -> Vec<String> {
        tiles.iter().map(|t| g.op(t.op).name.clone()).collect()
    }

    #[test]
    fn all_groups_timesteps_in_dataflow_order() {
        let g = build_mamba_block(&small(2)).unwrap();
        let s = generate_schedule(&g, &FusionScheme::with_splits(SchemeName::All, 1)).unwrap();
        let fused: Vec<_> = s.groups.iter().filter(|gr| gr.iter().all(|t| s.fused.contains(&t.op))).collect();
        assert_eq!(fused.len(), 2);
        assert_eq!(names(&g, fused[0]), ["dA", "exp_dA", "dB", "dBx", "hmul[0]", "hadd[0]", "Ch[0]", "y'[0]"]);
        assert_eq!(names(&g, fused[1])[4], "hmul[1]");
        assert!(s.deps.is_topological(&s.order()));
    }

    #[test]
    fn unfused_schedule_is_whole_ops_in_topo_order() {
        let g = build_mamba_block(&small(3)).unwrap();
        let s = generate_schedule(&g, &FusionScheme::with_splits(SchemeName::Uf, 1)).unwrap();
        assert!(s.groups.iter().all(|gr| gr.len() == 1 && gr[0].index.is_empty()));
        let topo: Vec<OpId> = topo_order(&g).unwrap().into_iter().filter(|o| !g.op(*o).kind.is_data_movement()).collect();
        let ops: Vec<OpId> = s.order().iter().map(|t| t.op).collect();
        assert_eq!(ops, topo);
    }

    #[test]
    fn d_slices_run_outermost() {
        let g = build_mamba_block(&small(2)).unwrap();
        let s = generate_schedule(&g, &FusionScheme::with_splits(SchemeName::MaAll, 2)).unwrap();
        let hmuls: Vec<(String, Vec<u64>)> = s
            .order()
            .iter()
            .filter(|t| g.op(t.op).name.starts_with("hmul"))
            .map(|t| (g.op(t.op).name.clone(), t.index.clone()))
            .collect();
        let want = [("hmul[0]", 0), ("hmul[1]", 0), ("hmul[0]", 1), ("hmul[1]", 1)];
        assert_eq!(hmuls.len(), 4);
        for ((n, ix), (wn, wd)) in hmuls.iter().zip(want) {
            assert_eq!((n.as_str(), ix[0]), (wn, wd));
        }
        assert!(s.deps.is_topological(&s.order()));
    }

    #[test]
    fn every_scheme_yields_a_valid_order() {
        let g = build_mamba_block(&small(3)).unwrap();
        for name in SchemeName::ALL {
            let s = generate_schedule(&g, &FusionScheme::with_splits(name, 2)).unwrap();
            assert!(s.deps.is_topological(&s.order()), "{name}");
        }
    }

    #[test]
    fn fused_tile_counts_follow_table() {
        let g = build_mamba_block(&small(16)).unwrap();
        for name in SchemeName::ALL {
            let sc = FusionScheme::with_splits(name, 3);
            let s = generate_schedule(&g, &sc).unwrap();
            let want = if name == SchemeName::MaAll { 48 } else { 16 };
            for (fam, c) in s.tile_counts(&g, &sc) {
                assert_eq!(c, want, "{name} {fam}");
            }
        }
    }
}
