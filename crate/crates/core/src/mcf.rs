//! Min-cost flow by successive shortest paths with node potentials.
//!
//! Supplies are scaled to integer units; every phase runs Dijkstra on
//! reduced costs, raises the potentials, and pushes a blocking flow through
//! the zero-reduced-cost subgraph.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub cost: f64,
}

/// Uncapacitated network. Positive supply is a source, negative a sink.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    pub n_nodes: usize,
    pub arcs: Vec<Arc>,
    pub supplies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Flow on each network arc, in mass units.
    pub arc_flows: Vec<f64>,
    pub total_cost: f64,
    /// Dual variables: `π(v) − π(u) ≤ cost(u,v)` on every arc, with equality
    /// where flow is positive.
    pub node_potentials: Vec<f64>,
    pub mass_scale: u64,
    /// Supplies after rounding to multiples of `1/mass_scale`.
    pub supplies_used: Vec<f64>,
    /// `Σ |supplies_used − supplies|`.
    pub rounding: f64,
}

impl FlowSolution {
    /// Largest violation of `inflow − outflow = −supply` over the nodes.
    pub fn conservation_error(&self, net: &FlowNetwork) -> f64 {
        let mut balance = self.supplies_used.clone();
        for (a, &f) in net.arcs.iter().zip(&self.arc_flows) {
            balance[a.from] -= f;
            balance[a.to] += f;
        }
        balance.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    /// Largest violation of `π(v) − π(u) ≤ cost` over the arcs.
    pub fn dual_infeasibility(&self, net: &FlowNetwork) -> f64 {
        net.arcs
            .iter()
            .map(|a| self.node_potentials[a.to] - self.node_potentials[a.from] - a.cost)
            .fold(0.0, f64::max)
    }

    /// Largest `|reduced cost|` over arcs carrying flow.
    pub fn slackness_error(&self, net: &FlowNetwork) -> f64 {
        net.arcs
            .iter()
            .zip(&self.arc_flows)
            .filter(|(_, &f)| f > 0.0)
            .map(|(a, _)| (a.cost + self.node_potentials[a.from] - self.node_potentials[a.to]).abs())
            .fold(0.0, f64::max)
    }
}

/// Round supplies to integer units, pushing the residual onto the node of
/// largest magnitude.
fn scale_supplies(supplies: &[f64], mass_scale: u64) -> Result<Vec<i64>> {
    let total: f64 = supplies.iter().sum();
    let gross: f64 = supplies.iter().map(|s| s.abs()).sum();
    if !total.is_finite() || total.abs() > 1e-9 * (1.0 + gross) {
        return Err(Error::Unbalanced(total));
    }
    let scale = mass_scale as f64;
    let mut units: Vec<i64> = supplies.iter().map(|&s| (s * scale).round() as i64).collect();
    let residual: i64 = units.iter().sum();
    if residual != 0 {
        let largest = (0..supplies.len())
            .max_by(|&a, &b| supplies[a].abs().total_cmp(&supplies[b].abs()).then(b.cmp(&a)))
            .expect("nonzero residual implies a node");
        units[largest] -= residual;
    }
    Ok(units)
}

const INF_CAP: i64 = i64::MAX / 4;
const ADMISSIBLE: f64 = 1e-11;

#[derive(Clone, Copy)]
struct REdge {
    to: u32,
    cap: i64,
    cost: f64,
}

struct Residual {
    edges: Vec<REdge>,
    adj: Vec<Vec<u32>>,
}

impl Residual {
    fn add(&mut self, u: usize, v: usize, cap: i64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(REdge { to: v as u32, cap, cost });
        self.edges.push(REdge { to: u as u32, cap: 0, cost: -cost });
        self.adj[u].push(id as u32);
        self.adj[v].push(id as u32 + 1);
        id
    }

    fn tail(&self, e: usize) -> usize {
        self.edges[e ^ 1].to as usize
    }
}

#[derive(PartialEq)]
struct Entry(f64, u32);
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Solve the uncapacitated transshipment problem at resolution `1/mass_scale`.
pub fn min_cost_flow(net: &FlowNetwork, mass_scale: u64) -> Result<FlowSolution> {
    if mass_scale == 0 {
        return Err(Error::InvalidInput("mass_scale must be at least 1".into()));
    }
    if net.supplies.len() != net.n_nodes {
        return Err(Error::InvalidInput("supplies length differs from node count".into()));
    }
    for a in &net.arcs {
        if a.from >= net.n_nodes || a.to >= net.n_nodes || !(a.cost >= 0.0) || !a.cost.is_finite() {
            return Err(Error::InvalidInput(format!("bad arc {a:?}")));
        }
    }
    let units = scale_supplies(&net.supplies, mass_scale)?;
    let n = net.n_nodes;
    let (src, snk) = (n, n + 1);
    let mut g = Residual { edges: Vec::with_capacity(2 * (net.arcs.len() + n)), adj: vec![Vec::new(); n + 2] };
    for a in &net.arcs {
        g.add(a.from, a.to, INF_CAP, a.cost);
    }
    let mut remaining = 0i64;
    for (v, &u) in units.iter().enumerate() {
        if u > 0 {
            g.add(src, v, u, 0.0);
            remaining += u;
        } else if u < 0 {
            g.add(v, snk, -u, 0.0);
        }
    }

    let mut pi = vec![0.0; n + 2];
    let mut dist = vec![f64::INFINITY; n + 2];
    let mut pred = vec![u32::MAX; n + 2];
    let mut heap = BinaryHeap::new();
    let mut level = vec![u32::MAX; n + 2];
    let mut iter = vec![0usize; n + 2];

    while remaining > 0 {
        dist.fill(f64::INFINITY);
        pred.fill(u32::MAX);
        heap.clear();
        dist[src] = 0.0;
        heap.push(Entry(0.0, src as u32));
        while let Some(Entry(d, u)) = heap.pop() {
            let u = u as usize;
            if d > dist[u] {
                continue;
            }
            if u == snk {
                break;
            }
            for &e in &g.adj[u] {
                let ed = g.edges[e as usize];
                if ed.cap <= 0 {
                    continue;
                }
                let v = ed.to as usize;
                let rc = (ed.cost + pi[u] - pi[v]).max(0.0);
                let nd = d + rc;
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = e;
                    heap.push(Entry(nd, v as u32));
                }
            }
        }
        let dt = dist[snk];
        if !dt.is_finite() {
            return Err(Error::Disconnected);
        }
        for v in 0..n + 2 {
            pi[v] += dist[v].min(dt);
        }

        let mut pushed_phase = 0i64;
        loop {
            if !levels(&g, &pi, src, snk, &mut level) {
                break;
            }
            iter.fill(0);
            let f = blocking_flow(&mut g, &pi, src, snk, &level, &mut iter);
            if f == 0 {
                break;
            }
            pushed_phase += f;
        }
        if pushed_phase == 0 {
            // Rounding left the shortest path just outside the admissible
            // band; push along the Dijkstra path directly.
            let mut bottleneck = i64::MAX;
            let mut v = snk;
            while v != src {
                let e = pred[v] as usize;
                bottleneck = bottleneck.min(g.edges[e].cap);
                v = g.tail(e);
            }
            let mut v = snk;
            while v != src {
                let e = pred[v] as usize;
                g.edges[e].cap -= bottleneck;
                g.edges[e ^ 1].cap += bottleneck;
                v = g.tail(e);
            }
            pushed_phase = bottleneck;
        }
        remaining -= pushed_phase;
    }

    let scale = mass_scale as f64;
    let arc_flows: Vec<f64> = (0..net.arcs.len()).map(|i| g.edges[2 * i + 1].cap as f64 / scale).collect();
    let total_cost = net.arcs.iter().zip(&arc_flows).map(|(a, f)| a.cost * f).sum();
    let supplies_used: Vec<f64> = units.iter().map(|&u| u as f64 / scale).collect();
    let rounding = supplies_used.iter().zip(&net.supplies).map(|(a, b)| (a - b).abs()).sum();
    pi.truncate(n);
    Ok(FlowSolution {
        arc_flows,
        total_cost,
        node_potentials: pi,
        mass_scale,
        supplies_used,
        rounding,
    })
}

fn admissible(g: &Residual, pi: &[f64], u: usize, e: usize) -> bool {
    let ed = g.edges[e];
    ed.cap > 0 && ed.cost + pi[u] - pi[ed.to as usize] <= ADMISSIBLE
}

fn levels(g: &Residual, pi: &[f64], src: usize, snk: usize, level: &mut [u32]) -> bool {
    level.fill(u32::MAX);
    level[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &e in &g.adj[u] {
            let v = g.edges[e as usize].to as usize;
            if level[v] == u32::MAX && admissible(g, pi, u, e as usize) {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    level[snk] != u32::MAX
}

fn blocking_flow(
    g: &mut Residual,
    pi: &[f64],
    src: usize,
    snk: usize,
    level: &[u32],
    iter: &mut [usize],
) -> i64 {
    let mut total = 0;
    let mut path: Vec<usize> = Vec::new();
    let mut dead = vec![false; level.len()];
    let mut u = src;
    loop {
        if u == snk {
            let f = path.iter().map(|&e| g.edges[e].cap).min().unwrap_or(0);
            let mut cut = path.len();
            for (i, &e) in path.iter().enumerate() {
                g.edges[e].cap -= f;
                g.edges[e ^ 1].cap += f;
                if g.edges[e].cap == 0 && cut == path.len() {
                    cut = i;
                }
            }
            total += f;
            path.truncate(cut);
            u = path.last().map_or(src, |&e| g.edges[e].to as usize);
            continue;
        }
        let mut advanced = false;
        while iter[u] < g.adj[u].len() {
            let e = g.adj[u][iter[u]] as usize;
            let v = g.edges[e].to as usize;
            if !dead[v] && level[v] == level[u].wrapping_add(1) && admissible(g, pi, u, e) {
                path.push(e);
                u = v;
                advanced = true;
                break;
            }
            iter[u] += 1;
        }
        if !advanced {
            dead[u] = true;
            match path.pop() {
                None => return total,
                Some(e) => {
                    u = g.tail(e);
                    iter[u] += 1;
                }
            }
        }
    }
}
