//! Metric graphs on the fast grid and shortest-path machinery.
//!
//! Edge `y -> y'` between stencil neighbours carries `sigma_b((y + y') / 2, y' - y)`.
//! Negative cycles are detected by Bellman-Ford from a virtual source; all-pairs
//! distances use Johnson's reweighting followed by one Dijkstra per source.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::cell::CellInstance;
use crate::grid::{BoxGrid, Field};
use crate::par::map_range;
use crate::sublevel::{PointData, SupportError};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    pub grid: BoxGrid,
    /// Level `b` the weights were computed at.
    pub level: f64,
    start: Vec<usize>,
    edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CycleOutcome {
    NegativeCycle,
    /// Minimal cycle length; zero exactly when a zero-length loop exists.
    MinLoop(f64),
}

impl MetricGraph {
    pub fn len(&self) -> usize {
        self.start.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn out_edges(&self, i: usize) -> &[Edge] {
        &self.edges[self.start[i]..self.start[i + 1]]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn min_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).fold(f64::INFINITY, f64::min)
    }

    fn weight_scale(&self) -> f64 {
        self.edges.iter().fold(0.0, |s, e| s.max(e.weight.abs()))
    }

    /// Same graph with each weight replaced by `f(from, edge)`.
    pub fn map_weights(&self, f: impl Fn(usize, &Edge) -> f64) -> MetricGraph {
        let mut edges = self.edges.clone();
        for i in 0..self.len() {
            for k in self.start[i]..self.start[i + 1] {
                edges[k].weight = f(i, &self.edges[k]);
            }
        }
        MetricGraph {
            grid: self.grid.clone(),
            level: self.level,
            start: self.start.clone(),
            edges,
        }
    }

    /// Weight of the edge `i -> j`, if present.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.out_edges(i).iter().find(|e| e.to == j).map(|e| e.weight)
    }
}

/// Primitive integer offsets in `{-r..r}^m \ {0}`, in lexicographic order.
pub fn stencil(m: usize, radius: i64) -> Vec<Vec<i64>> {
    let side = (2 * radius + 1) as usize;
    let mut out = Vec::new();
    for code in 0..side.pow(m as u32) {
        let mut rem = code;
        let mut o = vec![0i64; m];
        for k in (0..m).rev() {
            o[k] = (rem % side) as i64 - radius;
            rem /= side;
        }
        let g = o.iter().fold(0i64, |g, &v| gcd(g, v.abs()));
        if g == 1 {
            out.push(o);
        }
    }
    out
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Level-independent data for building metric graphs of one cell on one grid.
pub struct GraphTemplate<'a, 'c> {
    pub cell: &'a CellInstance<'c>,
    pub grid: BoxGrid,
    nodes: Vec<PointData>,
    pairs: Vec<Pair>,
    start: Vec<usize>,
    // (to, pair, forward) per directed edge.
    adj: Vec<(usize, usize, bool)>,
}

struct Pair {
    mid: Vec<f64>,
    delta: [f64; 3],
    data: PointData,
}

impl<'a, 'c> GraphTemplate<'a, 'c> {
    pub fn new(cell: &'a CellInstance<'c>, grid: &BoxGrid, radius: i64) -> Result<Self, Error> {
        let m = cell.dim();
        if grid.dim() != m {
            return Err(Error::Dimension(alloc::format!(
                "fast grid has {} axes, cell has {m}",
                grid.dim()
            )));
        }
        let offsets = stencil(m, radius.max(1));
        let n = grid.len();
        let nodes = map_range(n, |i| PointData::new(cell, &grid.node(i)));
        // Pair ids: for node i and positive offset k, id = pair_of[i * kpos + k].
        let positive: Vec<usize> = (0..offsets.len())
            .filter(|&k| offsets[k].iter().find(|&&v| v != 0).is_some_and(|&v| v > 0))
            .collect();
        let kpos = positive.len();
        let mut pair_of = vec![usize::MAX; n * kpos];
        let mut pair_ends: Vec<(usize, usize)> = Vec::new();
        for i in 0..n {
            for (slot, &k) in positive.iter().enumerate() {
                if let Some(j) = grid.shifted(i, &offsets[k]) {
                    pair_of[i * kpos + slot] = pair_ends.len();
                    pair_ends.push((i, j));
                }
            }
        }
        let pairs = map_range(pair_ends.len(), |p| {
            let (i, j) = pair_ends[p];
            let yi = grid.node(i);
            let yj = grid.node(j);
            let mid: Vec<f64> = yi.iter().zip(&yj).map(|(a, b)| 0.5 * (a + b)).collect();
            let mut delta = [0.0; 3];
            for k in 0..m {
                delta[k] = yj[k] - yi[k];
            }
            let data = PointData::new(cell, &mid);
            Pair { mid, delta, data }
        });
        let mut start = Vec::with_capacity(n + 1);
        let mut adj = Vec::new();
        for i in 0..n {
            start.push(adj.len());
            for o in &offsets {
                let Some(j) = grid.shifted(i, o) else { continue };
                let pos = o.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0);
                let (lo, key): (usize, Vec<i64>) = if pos {
                    (i, o.clone())
                } else {
                    (j, o.iter().map(|v| -v).collect())
                };
                let slot = positive
                    .iter()
                    .position(|&k| offsets[k] == key)
                    .expect("stencil is symmetric");
                adj.push((j, pair_of[lo * kpos + slot], pos));
            }
        }
        start.push(adj.len());
        Ok(GraphTemplate {
            cell,
            grid: grid.clone(),
            nodes,
            pairs,
            start,
            adj,
        })
    }

    pub fn node_data(&self, i: usize) -> &PointData {
        &self.nodes[i]
    }

    /// Nodes and edge midpoints, with their constraint data.
    fn sample_points(&self) -> impl Iterator<Item = &PointData> {
        self.nodes.iter().chain(self.pairs.iter().map(|p| &p.data))
    }

    /// Largest level at which some node or midpoint has an empty sublevel set.
    pub fn floor(&self) -> Result<f64, Error> {
        let pts: Vec<&PointData> = self.sample_points().collect();
        let vals = map_range(pts.len(), |k| pts[k].floor());
        let mut best = f64::NEG_INFINITY;
        for v in vals {
            best = best.max(v?);
        }
        Ok(best)
    }

    /// `max(0, max H0(y, 0))` over nodes and midpoints.
    pub fn upper_seed(&self) -> f64 {
        let zero = [0.0; 3];
        self.sample_points()
            .map(|d| d.h0(&zero[..d.dim()]))
            .fold(0.0, f64::max)
    }

    pub fn at_level(&self, b: f64) -> Result<MetricGraph, Error> {
        let m = self.cell.dim();
        let bad_nodes: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].sublevel(b), Err(SupportError::Infeasible)))
            .collect();
        let sig = map_range(self.pairs.len(), |p| {
            let pair = &self.pairs[p];
            let z = pair.data.sublevel(b)?;
            let fwd = z.sigma(&pair.delta[..m])?;
            let back: [f64; 3] = core::array::from_fn(|k| -pair.delta[k]);
            let bwd = z.sigma(&back[..m])?;
            Ok::<(f64, f64), SupportError>((fwd, bwd))
        });
        let mut infeasible: Vec<Vec<f64>> = bad_nodes.iter().map(|&i| self.grid.node(i)).collect();
        for (p, s) in sig.iter().enumerate() {
            match s {
                Err(SupportError::Infeasible) => infeasible.push(self.pairs[p].mid.clone()),
                Err(SupportError::Unbounded) => return Err(Error::Unbounded),
                Ok(_) => {}
            }
        }
        if !infeasible.is_empty() {
            return Err(Error::InfeasibleNodes(infeasible));
        }
        let edges = self
            .adj
            .iter()
            .map(|&(to, p, fwd)| {
                let (f, r) = sig[p].unwrap();
                Edge {
                    to,
                    weight: if fwd { f } else { r },
                }
            })
            .collect();
        Ok(MetricGraph {
            grid: self.grid.clone(),
            level: b,
            start: self.start.clone(),
            edges,
        })
    }

    /// Midpoint of the edge stored at position `k` of the adjacency.
    pub fn edge_midpoint(&self, k: usize) -> &[f64] {
        &self.pairs[self.adj[k].1].mid
    }
}

/// Graph at level `b` over the fast grid with the unit stencil.
pub fn build_metric_graph(cell: &CellInstance<'_>, grid: &BoxGrid, b: f64) -> Result<MetricGraph, Error> {
    GraphTemplate::new(cell, grid, 1)?.at_level(b)
}

fn relax_tol(g: &MetricGraph) -> f64 {
    1e-13 * (1.0 + g.weight_scale())
}

/// Bellman-Ford from a virtual source joined to every node by zero edges.
/// Returns potentials `phi` with `phi(v) <= phi(u) + w(u, v)` up to rounding,
/// or `None` when a negative cycle exists.
pub fn potentials(g: &MetricGraph) -> Option<Vec<f64>> {
    let n = g.len();
    let tol = relax_tol(g);
    let mut d = vec![0.0; n];
    for _round in 0..=n {
        let mut changed = false;
        for u in 0..n {
            let du = d[u];
            for e in g.out_edges(u) {
                let cand = du + e.weight;
                if cand < d[e.to] - tol {
                    d[e.to] = cand;
                    changed = true;
                }
            }
        }
        if !changed {
            return Some(d);
        }
    }
    None
}

#[derive(Clone, Copy, PartialEq)]
struct Item {
    cost: f64,
    node: usize,
}

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra with weights `w(u, v) + phi(u) - phi(v)` clamped at zero; returns
/// reduced distances and predecessors.
fn dijkstra(g: &MetricGraph, sources: &[usize], phi: Option<&[f64]>) -> (Vec<f64>, Vec<usize>) {
    let n = g.len();
    let mut d = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        d[s] = 0.0;
        heap.push(Item { cost: 0.0, node: s });
    }
    while let Some(Item { cost, node }) = heap.pop() {
        if cost > d[node] {
            continue;
        }
        for e in g.out_edges(node) {
            let w = match phi {
                Some(p) => (e.weight + p[node] - p[e.to]).max(0.0),
                None => e.weight,
            };
            let cand = cost + w;
            if cand < d[e.to] {
                d[e.to] = cand;
                pred[e.to] = node;
                heap.push(Item {
                    cost: cand,
                    node: e.to,
                });
            }
        }
    }
    (d, pred)
}

/// Label-correcting search for graphs with negative weights.
fn bellman_ford(g: &MetricGraph, sources: &[usize]) -> Result<(Vec<f64>, Vec<usize>), Error> {
    let n = g.len();
    let tol = relax_tol(g);
    let mut d = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    for &s in sources {
        d[s] = 0.0;
    }
    for _round in 0..=n {
        let mut changed = false;
        for u in 0..n {
            let du = d[u];
            if du == f64::INFINITY {
                continue;
            }
            for e in g.out_edges(u) {
                let cand = du + e.weight;
                if cand < d[e.to] - tol {
                    d[e.to] = cand;
                    pred[e.to] = u;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok((d, pred));
        }
    }
    Err(Error::NegativeCycle)
}

/// Distances from the nearest source and the predecessor of each node on a
/// recorded shortest path (`usize::MAX` for sources and unreachable nodes).
pub fn shortest_paths(g: &MetricGraph, sources: &[usize]) -> Result<(Vec<f64>, Vec<usize>), Error> {
    if g.min_weight() >= 0.0 {
        Ok(dijkstra(g, sources, None))
    } else {
        bellman_ford(g, sources)
    }
}

/// Multi-source distance field `min_{s in sources} S(s, y)`.
pub fn distance_field(g: &MetricGraph, sources: &[usize]) -> Result<Field, Error> {
    let (d, _) = shortest_paths(g, sources)?;
    Field::new(g.grid.clone(), d)
}

/// Dense matrix of graph distances, row = source.
#[derive(Debug, Clone, PartialEq)]
pub struct AllPairs {
    pub n: usize,
    pub d: Vec<f64>,
}

impl AllPairs {
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.d[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.d[from * self.n..(from + 1) * self.n]
    }
}

pub fn all_pairs(g: &MetricGraph) -> Result<AllPairs, Error> {
    let n = g.len();
    let nonneg = g.min_weight() >= 0.0;
    let phi = if nonneg {
        None
    } else {
        Some(potentials(g).ok_or(Error::NegativeCycle)?)
    };
    let rows = map_range(n, |s| {
        let (mut d, _) = dijkstra(g, &[s], phi.as_deref());
        if let Some(p) = &phi {
            for t in 0..n {
                d[t] = d[t] - p[s] + p[t];
            }
        }
        d
    });
    Ok(AllPairs { n, d: rows.concat() })
}

/// `rho(y) = min_{z != y} S(y, z) + S(z, y)`.
pub fn loop_defects(ap: &AllPairs) -> Vec<f64> {
    let n = ap.n;
    (0..n)
        .map(|y| {
            (0..n)
                .filter(|&z| z != y)
                .map(|z| ap.get(y, z) + ap.get(z, y))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn min_cycle_length(g: &MetricGraph) -> Result<CycleOutcome, Error> {
    if potentials(g).is_none() {
        return Ok(CycleOutcome::NegativeCycle);
    }
    let ap = all_pairs(g)?;
    let rho = loop_defects(&ap).into_iter().fold(f64::INFINITY, f64::min);
    Ok(CycleOutcome::MinLoop(rho))
}
