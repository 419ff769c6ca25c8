//! Random small graphs and a per-element dependency enumerator used as an
//! independent reference for the tile dependency engine.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ssmfusim_core::deps::{TileId, Tiling};
use ssmfusim_core::graph::{
    topo_order, Dim, GraphBuilder, OpClass, OpKind, Stage, TensorId, TensorKind, TensorSpec, WorkloadGraph,
};

/// Deterministic choice stream backed by proptest-generated words.
pub struct Picks<'a> {
    words: &'a [u32],
    at: usize,
}

impl<'a> Picks<'a> {
    pub fn new(words: &'a [u32]) -> Self {
        Picks { words, at: 0 }
    }

    pub fn below(&mut self, n: u64) -> u64 {
        let w = self.words[self.at % self.words.len()] as u64 ^ (self.at as u64).wrapping_mul(0x9E37_79B9);
        self.at += 1;
        w % n.max(1)
    }

    fn range(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }
}

fn fresh(b: &mut GraphBuilder, counter: &mut u32, name: &str, dims: Vec<Dim>) -> TensorId {
    *counter += 1;
    b.tensor_dims(&format!("{name}{counter}"), dims, TensorKind::Activation)
}

fn label(counter: &mut u32) -> String {
    *counter += 1;
    format!("X{counter}")
}

/// Builds a valid graph of at most `max_ops` ops with extents in 1..=5 and a
/// random split of up to 3 parts on each axis of each op output.
pub fn random_graph(p: &mut Picks, max_ops: usize) -> (WorkloadGraph, BTreeMap<TensorId, Tiling>) {
    let mut b = GraphBuilder::new(Stage::Prefill);
    let mut n = 0u32;
    let mut pool: Vec<TensorId> = Vec::new();
    for _ in 0..p.range(1, 2) {
        let rank = p.range(1, 3);
        let dims = (0..rank).map(|_| Dim::new(&label(&mut n), p.range(1, 5))).collect();
        pool.push(fresh(&mut b, &mut n, "in", dims));
    }
    let n_ops = p.range(1, max_ops as u64) as usize;
    let mut made = 0;
    let mut consumed = BTreeSet::new();
    let mut attempts = 0;
    while made < n_ops && attempts < 200 {
        attempts += 1;
        // Favor the newest tensor so chains get deep.
        let src = if p.below(2) == 0 { *pool.last().unwrap() } else { pool[p.below(pool.len() as u64) as usize] };
        let d = b.dims(src);
        let rank = d.len();
        let choice = p.below(14);
        let (kind, inputs, out_dims): (OpKind, Vec<TensorId>, Vec<Dim>) = match choice {
            0 => (OpKind::Exp, vec![src], d.clone()),
            1 => {
                let other = pool.iter().copied().filter(|t| b.dims(*t) == d).nth(p.below(4) as usize).unwrap_or(src);
                let k = if p.below(2) == 0 { OpKind::EwAdd } else { OpKind::EwMul };
                (k, vec![src, other], d.clone())
            }
            2 if rank >= 2 => {
                let mut perm: Vec<usize> = (0..rank).collect();
                for i in (1..rank).rev() {
                    perm.swap(i, p.below(i as u64 + 1) as usize);
                }
                let od = perm.iter().map(|&i| d[i].clone()).collect();
                (OpKind::Transpose { perm }, vec![src], od)
            }
            3 if rank >= 2 => {
                let axis = p.below(rank as u64) as usize;
                let index = p.below(d[axis].extent);
                let mut od = d.clone();
                od.remove(axis);
                (OpKind::Slice { axis, index }, vec![src], od)
            }
            4 => {
                let axis = p.below(rank as u64) as usize;
                if d[axis].extent < 2 {
                    continue;
                }
                let first = p.range(1, d[axis].extent - 1);
                let sizes = vec![first, d[axis].extent - first];
                let part = p.below(2) as usize;
                let mut od = d.clone();
                od[axis].extent = sizes[part];
                (OpKind::Split { axis, sizes, part }, vec![src], od)
            }
            5 => {
                let other = pool.iter().copied().filter(|t| b.dims(*t) == d).nth(p.below(4) as usize).unwrap_or(src);
                let axis = p.below(rank as u64) as usize;
                let mut od = d.clone();
                od[axis].extent *= 2;
                (OpKind::Concat { axis }, vec![src, other], od)
            }
            6 => {
                let axis = p.below(rank as u64 + 1) as usize;
                let mut od = d.clone();
                od.insert(axis, Dim::new(&label(&mut n), 2));
                (OpKind::Concat { axis }, vec![src, src], od)
            }
            7 => {
                let total: u64 = d.iter().map(|x| x.extent).product();
                let divisors: Vec<u64> = (1..=total).filter(|k| total.is_multiple_of(*k)).collect();
                let a = divisors[p.below(divisors.len() as u64) as usize];
                let od = vec![Dim::new(&label(&mut n), a), Dim::new(&label(&mut n), total / a)];
                (OpKind::Reshape, vec![src], od)
            }
            8 if rank >= 2 => {
                let axis = p.below(rank as u64) as usize;
                let mut od = d.clone();
                od.remove(axis);
                (OpKind::ReduceSum { axis }, vec![src], od)
            }
            9 => {
                let k = d[rank - 1].extent;
                let wd = vec![Dim::new(&label(&mut n), k), Dim::new(&label(&mut n), p.range(1, 4))];
                let w = fresh(&mut b, &mut n, "w", wd);
                let mut od = d[..rank - 1].to_vec();
                od.push(b.dims(w)[1].clone());
                (OpKind::MatMul, vec![src, w], od)
            }
            10 if rank <= 2 => {
                let vd = vec![Dim::new(&label(&mut n), p.range(1, 3))];
                let other = fresh(&mut b, &mut n, "v", vd);
                let mut od = d.clone();
                od.push(b.dims(other)[0].clone());
                (OpKind::OuterProduct, vec![src, other], od)
            }
            11 => {
                let axis = p.below(rank as u64) as usize;
                (OpKind::Softmax { axis }, vec![src], d.clone())
            }
            12 if rank == 2 => {
                let kernel = p.range(1, 3);
                let mut inputs = vec![src];
                if p.below(2) == 0 {
                    let cd = vec![Dim::new(&label(&mut n), d[1].extent), Dim::new(&label(&mut n), kernel)];
                    inputs.push(fresh(&mut b, &mut n, "cw", cd));
                }
                (OpKind::Conv1dDepthwise { kernel }, inputs, d.clone())
            }
            13 if rank <= 2 => {
                let axis = p.below(rank as u64 + 1) as usize;
                let mut od = d.clone();
                od.insert(axis, Dim::new(&label(&mut n), p.range(2, 3)));
                (OpKind::Reshape, vec![src], od)
            }
            _ => continue,
        };
        let out = fresh(&mut b, &mut n, "t", out_dims);
        consumed.extend(inputs.iter().copied());
        b.op(&format!("op{made}"), kind, &inputs, out, OpClass::Elementwise);
        pool.push(out);
        made += 1;
    }
    for t in &pool {
        if !consumed.contains(t) {
            b.mark_output(*t);
        }
    }
    let g = b.finish();
    let mut tilings = BTreeMap::new();
    for op in g.ops.values() {
        let mut t = Tiling::none();
        for dim in &g.tensor(op.output).dims {
            if p.below(3) != 0 {
                t = t.split(&dim.label, p.range(1, 3));
            }
        }
        tilings.insert(op.output, t);
    }
    (g, tilings)
}

fn all_coords(ext: &[u64]) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for &e in ext {
        out = out
            .into_iter()
            .flat_map(|c| {
                (0..e).map(move |i| {
                    let mut c = c.clone();
                    c.push(i);
                    c
                })
            })
            .collect();
    }
    out
}

fn flat(c: &[u64], ext: &[u64]) -> usize {
    c.iter().zip(ext).fold(0u64, |a, (&i, &e)| a * e + i) as usize
}

/// Every `(input slot, element)` read when computing output element `c`.
fn element_reads(kind: &OpKind, ins: &[&TensorSpec], out: &TensorSpec, c: &[u64]) -> Vec<(usize, Vec<u64>)> {
    let mut r = Vec::new();
    match kind {
        OpKind::Exp | OpKind::SiLU | OpKind::Sigmoid | OpKind::SoftPlus | OpKind::EwAdd | OpKind::EwMul => {
            for k in 0..ins.len() {
                r.push((k, c.to_vec()));
            }
        }
        OpKind::Transpose { perm } => {
            let mut s = vec![0; c.len()];
            for (j, &pj) in perm.iter().enumerate() {
                s[pj] = c[j];
            }
            r.push((0, s));
        }
        OpKind::Slice { axis, index } => {
            let mut s = c.to_vec();
            s.insert(*axis, *index);
            r.push((0, s));
        }
        OpKind::Split { axis, sizes, part } => {
            let mut s = c.to_vec();
            s[*axis] += sizes[..*part].iter().sum::<u64>();
            r.push((0, s));
        }
        OpKind::Concat { axis } => {
            if ins[0].dims.len() < out.dims.len() {
                let mut s = c.to_vec();
                let which = s.remove(*axis) as usize;
                r.push((which, s));
            } else {
                let mut pos = c[*axis];
                for (k, t) in ins.iter().enumerate() {
                    let e = t.dims[*axis].extent;
                    if pos < e {
                        let mut s = c.to_vec();
                        s[*axis] = pos;
                        r.push((k, s));
                        break;
                    }
                    pos -= e;
                }
            }
        }
        OpKind::Reshape => {
            if ins[0].numel() == out.numel() {
                let mut f = flat(c, &out.extents()) as u64;
                let ext = ins[0].extents();
                let mut s = vec![0; ext.len()];
                for k in (0..ext.len()).rev() {
                    s[k] = f % ext[k];
                    f /= ext[k];
                }
                r.push((0, s));
            } else {
                let s = ins[0].dims.iter().map(|d| c[out.dims.iter().position(|o| o.label == d.label).unwrap()]).collect();
                r.push((0, s));
            }
        }
        OpKind::ReduceSum { axis } => {
            for i in 0..ins[0].dims[*axis].extent {
                let mut s = c.to_vec();
                s.insert(*axis, i);
                r.push((0, s));
            }
        }
        OpKind::MatMul => {
            let rank = c.len();
            for k in 0..ins[1].dims[0].extent {
                let mut a = c[..rank - 1].to_vec();
                a.push(k);
                r.push((0, a));
                r.push((1, vec![k, c[rank - 1]]));
            }
        }
        OpKind::OuterProduct => {
            for (k, t) in ins.iter().enumerate() {
                let s = t.dims.iter().map(|d| c[out.dims.iter().position(|o| o.label == d.label).unwrap()]).collect();
                r.push((k, s));
            }
        }
        OpKind::Softmax { axis } => {
            for i in 0..out.dims[*axis].extent {
                let mut s = c.to_vec();
                s[*axis] = i;
                r.push((0, s));
            }
        }
        OpKind::Conv1dDepthwise { kernel } => {
            for j in 0..*kernel {
                if c[0] >= j {
                    r.push((0, vec![c[0] - j, c[1]]));
                }
                if ins.len() > 1 {
                    r.push((1, vec![c[1], j]));
                }
            }
        }
        other => panic!("oracle does not model {other:?}"),
    }
    r
}

fn tile_of(spec: &TensorSpec, t: &Tiling, c: &[u64]) -> Vec<u64> {
    spec.dims
        .iter()
        .zip(c)
        .filter_map(|(d, &i)| {
            t.splits.get(&d.label).map(|&parts| {
                let size = d.extent.div_ceil(parts.min(d.extent));
                i / size
            })
        })
        .collect()
}

/// Producer tiles of every consumer tile, by enumerating each element.
pub fn brute_force_deps(g: &WorkloadGraph, tilings: &BTreeMap<TensorId, Tiling>) -> BTreeMap<TileId, BTreeSet<TileId>> {
    let none = Tiling::none();
    let mut cells: BTreeMap<TensorId, Vec<BTreeSet<TileId>>> = BTreeMap::new();
    for (id, t) in &g.tensors {
        cells.insert(*id, vec![BTreeSet::new(); t.numel() as usize]);
    }
    let mut deps: BTreeMap<TileId, BTreeSet<TileId>> = BTreeMap::new();
    for op_id in topo_order(g).unwrap() {
        let op = g.op(op_id);
        let out = g.tensor(op.output);
        let ins: Vec<&TensorSpec> = op.inputs.iter().map(|t| g.tensor(*t)).collect();
        let tiling = tilings.get(&op.output).unwrap_or(&none);
        let mut new_cells = vec![BTreeSet::new(); out.numel() as usize];
        for c in all_coords(&out.extents()) {
            let mut read = BTreeSet::new();
            for (k, s) in element_reads(&op.kind, &ins, out, &c) {
                read.extend(cells[&op.inputs[k]][flat(&s, &ins[k].extents())].iter().cloned());
            }
            let at = flat(&c, &out.extents());
            if op.kind.is_data_movement() {
                new_cells[at] = read;
            } else {
                let tile = TileId { op: op_id, index: tile_of(out, tiling, &c) };
                deps.entry(tile.clone()).or_default().extend(read);
                new_cells[at].insert(tile);
            }
        }
        cells.insert(op.output, new_cells);
    }
    deps
}
