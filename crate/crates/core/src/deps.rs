//! Element-granularity producer maps and exact tile-to-tile dependencies.
//!
//! A map stores, for every element of a tensor, the set of tiles that produced
//! it. Elements are grouped into boxes of intervals along each axis within which
//! the set cannot vary, so storage grows with the number of tile boundaries
//! rather than with the tensor size.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    broadcast_positions, parse_einsum, topo_order, Dim, OpId, OpKind, OpNode, TensorId, TensorSpec, WorkloadGraph,
};

/// Upper bound on stored cells per map and on enumerated elements per read.
pub const MAX_CELLS: u64 = 1 << 20;

/// Half-open index range per axis.
pub type Region = Vec<(u64, u64)>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileId {
    pub op: OpId,
    /// One index per split axis, in axis order.
    pub index: Vec<u64>,
}

/// Requested number of parts per axis label. Unlisted axes are not split.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tiling {
    pub splits: BTreeMap<String, u64>,
}

impl Tiling {
    pub fn none() -> Self {
        Tiling::default()
    }

    pub fn split(mut self, label: &str, parts: u64) -> Self {
        self.splits.insert(label.into(), parts);
        self
    }
}

/// Concrete tile layout of one tensor. The last tile along an axis may be short.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileGrid {
    pub extents: Vec<u64>,
    pub split_axes: Vec<usize>,
    pub sizes: Vec<u64>,
    pub parts: Vec<u64>,
}

impl TileGrid {
    pub fn new(spec: &TensorSpec, tiling: &Tiling) -> Result<Self> {
        for (label, p) in &tiling.splits {
            if spec.axis(label).is_none() {
                return Err(Error::Tiling(format!("tensor {} has no axis {label}", spec.name)));
            }
            if *p == 0 {
                return Err(Error::Tiling(format!("axis {label} of {} split into 0 parts", spec.name)));
            }
        }
        let extents = spec.extents();
        let (mut split_axes, mut sizes, mut parts) = (Vec::new(), Vec::new(), Vec::new());
        for (i, d) in spec.dims.iter().enumerate() {
            if let Some(&p) = tiling.splits.get(&d.label) {
                let size = d.extent.div_ceil(p.min(d.extent.max(1)));
                split_axes.push(i);
                sizes.push(size);
                parts.push(d.extent.div_ceil(size));
            }
        }
        Ok(TileGrid { extents, split_axes, sizes, parts })
    }

    pub fn count(&self) -> u64 {
        self.parts.iter().product()
    }

    /// All tile index vectors in row-major order.
    pub fn indices(&self) -> Vec<Vec<u64>> {
        let ranges: Vec<(u64, u64)> = self.parts.iter().map(|&p| (0, p)).collect();
        let mut out = Vec::new();
        for_each_index(&ranges, |ix| out.push(ix.to_vec()));
        out
    }

    pub fn region(&self, index: &[u64]) -> Region {
        let mut r: Region = self.extents.iter().map(|&e| (0, e)).collect();
        for (k, &ax) in self.split_axes.iter().enumerate() {
            let lo = index[k] * self.sizes[k];
            r[ax] = (lo, (lo + self.sizes[k]).min(self.extents[ax]));
        }
        r
    }

    /// Index of the tile covering a full element coordinate.
    pub fn tile_of(&self, coord: &[u64]) -> Vec<u64> {
        self.split_axes.iter().zip(&self.sizes).map(|(&ax, &s)| coord[ax] / s).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProducerMap {
    pub tensor: TensorId,
    pub dims: Vec<Dim>,
    /// Per axis, ascending boundaries from 0 to the extent; cells are constant
    /// between neighbouring boundaries.
    pub cuts: Vec<Vec<u64>>,
    /// Row-major over the intervals.
    cells: Vec<BTreeSet<TileId>>,
}

fn interval_of(cuts: &[u64], x: u64) -> usize {
    cuts.partition_point(|&c| c <= x) - 1
}

impl ProducerMap {
    fn with_cells(
        tensor: TensorId,
        dims: Vec<Dim>,
        cuts: Vec<Vec<u64>>,
        f: impl FnMut(&[(u64, u64)]) -> Result<BTreeSet<TileId>>,
    ) -> Result<Self> {
        let counts: Region = cuts.iter().map(|c| (0, c.len() as u64 - 1)).collect();
        let n: u64 = counts.iter().map(|r| r.1).product();
        if n > MAX_CELLS {
            return Err(Error::TooLarge(format!("{n} cells for tensor {}", tensor.0)));
        }
        let mut cells = Vec::with_capacity(n as usize);
        let mut f = f;
        let mut err = None;
        for_each_index(&counts, |ix| {
            if err.is_none() {
                let region: Region = ix.iter().zip(&cuts).map(|(&i, c)| (c[i as usize], c[i as usize + 1])).collect();
                match f(&region) {
                    Ok(c) => cells.push(c),
                    Err(e) => err = Some(e),
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok(ProducerMap { tensor, dims, cuts, cells })
    }

    /// Map of a tensor nobody produces: every cell empty.
    pub fn external(spec: &TensorSpec) -> Self {
        ProducerMap {
            tensor: spec.id,
            dims: spec.dims.clone(),
            cuts: spec.dims.iter().map(|d| whole(d.extent)).collect(),
            cells: vec![BTreeSet::new()],
        }
    }

    pub fn collapsed_dims(&self) -> Vec<&str> {
        self.dims.iter().zip(&self.cuts).filter(|(_, c)| c.len() == 2).map(|(d, _)| d.label.as_str()).collect()
    }

    pub fn stored_cells(&self) -> usize {
        self.cells.len()
    }

    fn offset(&self, ix: &[u64]) -> usize {
        ix.iter().zip(&self.cuts).fold(0u64, |off, (&i, c)| off * (c.len() as u64 - 1) + i) as usize
    }

    /// Producers of one element.
    pub fn cell(&self, coord: &[u64]) -> &BTreeSet<TileId> {
        let ix: Vec<u64> = coord.iter().zip(&self.cuts).map(|(&x, c)| interval_of(c, x) as u64).collect();
        &self.cells[self.offset(&ix)]
    }

    /// Union of cells over a region.
    pub fn union_over(&self, region: &[(u64, u64)], acc: &mut BTreeSet<TileId>) {
        if region.iter().any(|&(lo, hi)| lo >= hi) {
            return;
        }
        let ranges: Region = region
            .iter()
            .zip(&self.cuts)
            .map(|(&(lo, hi), c)| (interval_of(c, lo) as u64, interval_of(c, hi - 1) as u64 + 1))
            .collect();
        for_each_index(&ranges, |ix| acc.extend(self.cells[self.offset(ix)].iter().cloned()));
    }
}

fn whole(extent: u64) -> Vec<u64> {
    vec![0, extent]
}

fn every(extent: u64) -> Vec<u64> {
    (0..=extent).collect()
}

fn merge<'a>(extent: u64, parts: impl IntoIterator<Item = &'a Vec<u64>>) -> Vec<u64> {
    let mut set: BTreeSet<u64> = [0, extent].into_iter().collect();
    for p in parts {
        set.extend(p.iter().copied());
    }
    set.into_iter().collect()
}

fn trivial(c: &[u64]) -> bool {
    c.len() == 2
}

/// Fresh map for the output of `op`: each element belongs to the tile covering it.
pub fn init_map(op: OpId, spec: &TensorSpec, tiling: &Tiling) -> Result<ProducerMap> {
    let grid = TileGrid::new(spec, tiling)?;
    let mut cuts: Vec<Vec<u64>> = spec.dims.iter().map(|d| whole(d.extent)).collect();
    for (k, &ax) in grid.split_axes.iter().enumerate() {
        let e = spec.dims[ax].extent;
        cuts[ax] = merge(e, [&(0..grid.parts[k]).map(|i| (i * grid.sizes[k]).min(e)).collect::<Vec<u64>>()]);
    }
    ProducerMap::with_cells(spec.id, spec.dims.clone(), cuts, |r| {
        let lo: Vec<u64> = r.iter().map(|x| x.0).collect();
        let mut s = BTreeSet::new();
        s.insert(TileId { op, index: grid.tile_of(&lo) });
        Ok(s)
    })
}

/// Calls `f` for every index vector in the box, last axis fastest.
pub fn for_each_index(ranges: &[(u64, u64)], mut f: impl FnMut(&[u64])) {
    if ranges.iter().any(|&(lo, hi)| lo >= hi) {
        return;
    }
    let mut ix: Vec<u64> = ranges.iter().map(|r| r.0).collect();
    loop {
        f(&ix);
        let mut k = ranges.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            ix[k] += 1;
            if ix[k] < ranges[k].1 {
                break;
            }
            ix[k] = ranges[k].0;
        }
    }
}

fn unravel(mut flat: u64, extents: &[u64]) -> Vec<u64> {
    let mut ix = vec![0; extents.len()];
    for k in (0..extents.len()).rev() {
        ix[k] = flat % extents[k];
        flat /= extents[k];
    }
    ix
}

fn ravel(ix: &[u64], extents: &[u64]) -> u64 {
    ix.iter().zip(extents).fold(0, |acc, (&i, &e)| acc * e + i)
}

fn region_size(r: &[(u64, u64)]) -> u64 {
    r.iter().map(|&(lo, hi)| hi.saturating_sub(lo)).product()
}

fn full(dims: &[Dim]) -> Region {
    dims.iter().map(|d| (0, d.extent)).collect()
}

/// Regions of each input read to compute the output region `out`.
pub fn read_regions(kind: &OpKind, ins: &[&TensorSpec], output: &TensorSpec, out: &[(u64, u64)]) -> Result<Vec<Vec<Region>>> {
    let shape_err = |msg: String| Error::Shape { op: OpId(u32::MAX), msg };
    let od = &output.dims;
    Ok(match kind {
        OpKind::MatMul => {
            let k = ins[1].dims[0].extent;
            let mut left: Region = out[..out.len() - 1].to_vec();
            left.push((0, k));
            vec![vec![left], vec![vec![(0, k), out[out.len() - 1]]]]
        }
        OpKind::Einsum { equation } => {
            let (letters, outl) = parse_einsum(equation).map_err(shape_err)?;
            ins.iter()
                .zip(&letters)
                .map(|(t, ls)| {
                    let r = ls
                        .iter()
                        .zip(&t.dims)
                        .map(|(c, d)| match outl.iter().position(|o| o == c) {
                            Some(p) => out[p],
                            None => (0, d.extent),
                        })
                        .collect();
                    vec![r]
                })
                .collect()
        }
        OpKind::EwAdd | OpKind::EwMul | OpKind::Exp | OpKind::SiLU | OpKind::Sigmoid | OpKind::SoftPlus => {
            ins.iter().map(|_| vec![out.to_vec()]).collect()
        }
        OpKind::OuterProduct => ins
            .iter()
            .map(|t| {
                let r = t.dims.iter().map(|d| out[od.iter().position(|o| o.label == d.label).unwrap_or(0)]).collect();
                vec![r]
            })
            .collect(),
        OpKind::ReduceSum { axis } => {
            let mut r = out.to_vec();
            r.insert(*axis, (0, ins[0].dims[*axis].extent));
            vec![vec![r]]
        }
        OpKind::Slice { axis, index } => {
            let mut r = out.to_vec();
            r.insert(*axis, (*index, index + 1));
            vec![vec![r]]
        }
        OpKind::Split { axis, sizes, part } => {
            let off: u64 = sizes[..*part].iter().sum();
            let mut r = out.to_vec();
            r[*axis] = (r[*axis].0 + off, r[*axis].1 + off);
            vec![vec![r]]
        }
        OpKind::Transpose { perm } => {
            let mut r = vec![(0, 0); perm.len()];
            for (j, &p) in perm.iter().enumerate() {
                r[p] = out[j];
            }
            vec![vec![r]]
        }
        OpKind::Reshape => {
            let src = &ins[0].dims;
            let (se, oe) = (ins[0].extents(), output.extents());
            if ins[0].numel() != output.numel() {
                let pos = broadcast_positions(src, od).map_err(shape_err)?;
                vec![vec![pos.iter().map(|&p| out[p]).collect()]]
            } else if se == oe {
                vec![vec![out.to_vec()]]
            } else {
                if region_size(out) > MAX_CELLS {
                    return Err(Error::TooLarge(format!("row-major reshape of {} elements", region_size(out))));
                }
                let mut regions = Vec::new();
                for_each_index(out, |ix| {
                    let s = unravel(ravel(ix, &oe), &se);
                    regions.push(s.iter().map(|&i| (i, i + 1)).collect());
                });
                vec![regions]
            }
        }
        OpKind::Concat { axis } => {
            let stack = ins[0].dims.len() + 1 == od.len();
            let (lo, hi) = out[*axis];
            let mut off = 0;
            ins.iter()
                .map(|t| {
                    let width = if stack { 1 } else { t.dims[*axis].extent };
                    let (a, b) = (lo.max(off), hi.min(off + width));
                    let r = if a < b {
                        let mut r = out.to_vec();
                        if stack {
                            r.remove(*axis);
                        } else {
                            r[*axis] = (a - off, b - off);
                        }
                        vec![r]
                    } else {
                        Vec::new()
                    };
                    off += width;
                    r
                })
                .collect()
        }
        OpKind::Conv1dDepthwise { kernel } => {
            let (lo, hi) = out[0];
            let mut v = vec![vec![vec![(lo.saturating_sub(kernel - 1), hi), out[1]]]];
            if ins.len() > 1 {
                v.push(vec![vec![out[1], (0, *kernel)]]);
            }
            v
        }
        OpKind::RMSNorm => {
            let last = od.len() - 1;
            let mut r = out.to_vec();
            r[last] = (0, od[last].extent);
            let mut v = vec![vec![r]];
            if ins.len() > 1 {
                v.push(vec![full(&ins[1].dims)]);
            }
            v
        }
        OpKind::Softmax { axis } => {
            let mut r = out.to_vec();
            r[*axis] = (0, od[*axis].extent);
            vec![vec![r]]
        }
    })
}

/// Interval boundaries of the output of `kind` fine enough that every
/// interval box reads a uniform set of producers.
fn output_cuts(kind: &OpKind, ins: &[&TensorSpec], output: &TensorSpec, maps: &[&ProducerMap]) -> Result<Vec<Vec<u64>>> {
    let od = &output.dims;
    let shape_err = |msg: String| Error::Shape { op: OpId(u32::MAX), msg };
    let by_label = |j: usize| {
        let parts: Vec<&Vec<u64>> = ins
            .iter()
            .zip(maps)
            .filter_map(|(t, m)| t.dims.iter().position(|d| d.label == od[j].label).map(|p| &m.cuts[p]))
            .collect();
        merge(od[j].extent, parts)
    };
    Ok(match kind {
        OpKind::MatMul => {
            let mut c = maps[0].cuts[..maps[0].cuts.len() - 1].to_vec();
            c.push(maps[1].cuts[1].clone());
            c
        }
        OpKind::Einsum { equation } => {
            let (letters, outl) = parse_einsum(equation).map_err(shape_err)?;
            outl.iter()
                .zip(od)
                .map(|(c, d)| {
                    let parts: Vec<&Vec<u64>> = letters
                        .iter()
                        .zip(maps)
                        .filter_map(|(ls, m)| ls.iter().position(|x| x == c).map(|p| &m.cuts[p]))
                        .collect();
                    merge(d.extent, parts)
                })
                .collect()
        }
        OpKind::EwAdd | OpKind::EwMul | OpKind::Exp | OpKind::SiLU | OpKind::Sigmoid | OpKind::SoftPlus => {
            (0..od.len()).map(|j| merge(od[j].extent, maps.iter().map(|m| &m.cuts[j]))).collect()
        }
        OpKind::OuterProduct => (0..od.len()).map(by_label).collect(),
        OpKind::ReduceSum { axis } | OpKind::Slice { axis, .. } => {
            let mut c = maps[0].cuts.clone();
            c.remove(*axis);
            c
        }
        OpKind::Split { axis, sizes, part } => {
            let off: u64 = sizes[..*part].iter().sum();
            let len = od[*axis].extent;
            let mut c = maps[0].cuts.clone();
            let inner: Vec<u64> = c[*axis].iter().filter(|&&x| x > off && x < off + len).map(|&x| x - off).collect();
            c[*axis] = merge(len, [&inner]);
            c
        }
        OpKind::Transpose { perm } => perm.iter().map(|&p| maps[0].cuts[p].clone()).collect(),
        OpKind::Reshape => {
            if ins[0].numel() != output.numel() {
                let pos = broadcast_positions(&ins[0].dims, od).map_err(shape_err)?;
                let mut c: Vec<Vec<u64>> = od.iter().map(|d| whole(d.extent)).collect();
                for (i, &p) in pos.iter().enumerate() {
                    c[p] = maps[0].cuts[i].clone();
                }
                c
            } else if ins[0].extents() == output.extents() {
                maps[0].cuts.clone()
            } else if maps[0].cuts.iter().all(|c| trivial(c)) {
                od.iter().map(|d| whole(d.extent)).collect()
            } else {
                od.iter().map(|d| every(d.extent)).collect()
            }
        }
        OpKind::Concat { axis } => {
            let stack = ins[0].dims.len() + 1 == od.len();
            (0..od.len())
                .map(|j| {
                    if j == *axis {
                        let mut bounds = Vec::new();
                        let mut off = 0;
                        for (t, m) in ins.iter().zip(maps) {
                            let width = if stack { 1 } else { t.dims[j].extent };
                            bounds.push(off);
                            if !stack {
                                bounds.extend(m.cuts[j].iter().map(|&x| x + off));
                            }
                            off += width;
                        }
                        merge(od[j].extent, [&bounds])
                    } else {
                        let src = if stack && j > *axis { j - 1 } else { j };
                        merge(od[j].extent, maps.iter().map(|m| &m.cuts[src]))
                    }
                })
                .collect()
        }
        OpKind::Conv1dDepthwise { kernel } => {
            let e = od[0].extent;
            // A window changes the intervals it touches when its newest element
            // enters one and when its oldest element leaves one.
            let mut l = Vec::new();
            for &b in &maps[0].cuts[0][1..maps[0].cuts[0].len() - 1] {
                l.push(b);
                l.push((b + kernel - 1).min(e));
            }
            let mut d = vec![&maps[0].cuts[1]];
            if let Some(w) = maps.get(1) {
                d.push(&w.cuts[0]);
            }
            vec![merge(e, [&l]), merge(od[1].extent, d)]
        }
        OpKind::RMSNorm => {
            let mut c = maps[0].cuts.clone();
            let last = c.len() - 1;
            c[last] = whole(od[last].extent);
            c
        }
        OpKind::Softmax { axis } => {
            let mut c = maps[0].cuts.clone();
            c[*axis] = whole(od[*axis].extent);
            c
        }
    })
}

/// Carries producer information through `op`: each output cell is the union of
/// the cells of every input element it reads.
pub fn propagate(op: &OpNode, ins: &[&TensorSpec], output: &TensorSpec, maps: &[&ProducerMap]) -> Result<ProducerMap> {
    if maps.len() != ins.len() {
        return Err(Error::Shape { op: op.id, msg: format!("{} maps for {} inputs", maps.len(), ins.len()) });
    }
    for (t, m) in ins.iter().zip(maps) {
        if t.dims != m.dims {
            return Err(Error::Shape { op: op.id, msg: format!("map of tensor {} does not match input {}", m.tensor.0, t.name) });
        }
    }
    let cuts = output_cuts(&op.kind, ins, output, maps)?;
    ProducerMap::with_cells(output.id, output.dims.clone(), cuts, |out| {
        let regions = read_regions(&op.kind, ins, output, out)?;
        let mut acc = BTreeSet::new();
        for (m, rs) in maps.iter().zip(&regions) {
            for r in rs {
                m.union_over(r, &mut acc);
            }
        }
        Ok(acc)
    })
}

/// Tiles of every compute op and the producer tiles each one reads from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TileGraph {
    /// Compute tiles, ops in topological order, tiles row-major within an op.
    pub tiles: Vec<TileId>,
    /// Producer tiles of each consumer tile.
    pub deps: BTreeMap<TileId, BTreeSet<TileId>>,
}

impl TileGraph {
    pub fn edges(&self) -> BTreeSet<(TileId, TileId)> {
        self.deps.iter().flat_map(|(c, ps)| ps.iter().map(move |p| (c.clone(), p.clone()))).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.deps.values().map(BTreeSet::len).sum()
    }

    /// Whether `order` lists every tile exactly once after all of its producers.
    pub fn is_topological(&self, order: &[TileId]) -> bool {
        let pos: BTreeMap<&TileId, usize> = order.iter().enumerate().map(|(i, t)| (t, i)).collect();
        if pos.len() != order.len() || order.len() != self.tiles.len() {
            return false;
        }
        self.deps.iter().all(|(c, ps)| match pos.get(c) {
            Some(&ci) => ps.iter().all(|p| pos.get(p).is_some_and(|&pi| pi < ci)),
            None => false,
        })
    }

    pub fn to_dot(&self, graph: &WorkloadGraph) -> String {
        let label = |t: &TileId| {
            let mut s = String::from(graph.op(t.op).name.as_str());
            if !t.index.is_empty() {
                s.push('[');
                for (k, i) in t.index.iter().enumerate() {
                    if k > 0 {
                        s.push(',');
                    }
                    let _ = write!(s, "{i}");
                }
                s.push(']');
            }
            s
        };
        let mut out = String::from("digraph tiles {\n");
        for t in &self.tiles {
            let _ = writeln!(out, "  \"{}\";", label(t));
        }
        for (c, p) in self.edges() {
            let _ = writeln!(out, "  \"{}\" -> \"{}\";", label(&p), label(&c));
        }
        out.push_str("}\n");
        out
    }
}

/// Exact tile dependencies of `graph`. Data-movement ops produce no tiles; their
/// maps are propagated so that consumers see the original producers.
/// Compute ops missing from `tilings` run as a single tile.
pub fn infer_tile_deps(graph: &WorkloadGraph, tilings: &BTreeMap<TensorId, Tiling>) -> Result<TileGraph> {
    let order = topo_order(graph)?;
    let producers = graph.producers();
    let mut maps: BTreeMap<TensorId, ProducerMap> = BTreeMap::new();
    for (id, spec) in &graph.tensors {
        if !producers.contains_key(id) {
            maps.insert(*id, ProducerMap::external(spec));
        }
    }
    let none = Tiling::none();
    let mut tg = TileGraph::default();
    for op_id in order {
        let op = graph.op(op_id);
        let ins = graph.input_specs(op);
        let out = graph.tensor(op.output);
        let in_maps: Vec<&ProducerMap> = op.inputs.iter().map(|t| &maps[t]).collect();
        let map = if op.kind.is_data_movement() {
            propagate(op, &ins, out, &in_maps)?
        } else {
            let tiling = tilings.get(&op.output).unwrap_or(&none);
            let grid = TileGrid::new(out, tiling)?;
            for ix in grid.indices() {
                let region = grid.region(&ix);
                let regions = read_regions(&op.kind, &ins, out, &region)?;
                let mut acc = BTreeSet::new();
                for (m, rs) in in_maps.iter().zip(&regions) {
                    for r in rs {
                        m.union_over(r, &mut acc);
                    }
                }
                let id = TileId { op: op_id, index: ix };
                tg.tiles.push(id.clone());
                tg.deps.insert(id, acc);
            }
            init_map(op_id, out, tiling)?
        };
        maps.insert(op.output, map);
    }
    Ok(tg)
}
