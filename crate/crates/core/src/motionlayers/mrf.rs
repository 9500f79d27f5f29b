//! Potts-smoothed layer assignment by alpha-expansion over graph cuts.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::GrayImage;

use super::affine::AffineModel;

/// Data cost charged when a model sends a pixel outside the previous frame.
pub const OUT_OF_FRAME_COST: f64 = 255.0;

const EPS: f64 = 1e-9;

/// Warping error `|I_t(p) - I_{t-1}(p + w(p))|` of one pixel under `model`.
pub fn data_cost(model: &AffineModel, current: &GrayImage, previous: &GrayImage, x: usize, y: usize) -> f64 {
    let (sx, sy) = model.displace(x as f64, y as f64);
    match previous.sample(sx, sy) {
        Some(v) => (current.at(x, y) - v).abs(),
        None => OUT_OF_FRAME_COST,
    }
}

struct Costs {
    labels: Vec<u32>,
    /// `cost[l][k]` for label index `l` and pixel `k`.
    cost: Vec<Vec<f64>>,
}

fn costs(models: &BTreeMap<u32, AffineModel>, current: &GrayImage, previous: &GrayImage) -> Costs {
    let w = current.width;
    let cost = models
        .par_iter()
        .map(|(_, m)| {
            (0..current.data.len())
                .map(|k| data_cost(m, current, previous, k % w, k / w))
                .collect()
        })
        .collect();
    Costs {
        labels: models.keys().copied().collect(),
        cost,
    }
}

fn check(labels: &[u32], models: &BTreeMap<u32, AffineModel>, current: &GrayImage, previous: &GrayImage, lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) {
        return Err(Error::Contract(format!("smoothness weight must be >= 0, got {lambda}")));
    }
    if current.width != previous.width || current.height != previous.height || labels.len() != current.data.len() {
        return Err(Error::Contract("labelling and frames must share one grid".into()));
    }
    if let Some(l) = labels.iter().find(|l| !models.contains_key(l)) {
        return Err(Error::Contract(format!("label {l} has no motion model")));
    }
    Ok(())
}

fn energy_of(idx: &[usize], costs: &Costs, width: usize, lambda: f64) -> f64 {
    let data: f64 = idx.iter().enumerate().map(|(k, &l)| costs.cost[l][k]).sum();
    let mut cuts = 0usize;
    for k in 0..idx.len() {
        if (k + 1) % width != 0 && idx[k] != idx[k + 1] {
            cuts += 1;
        }
        if k + width < idx.len() && idx[k] != idx[k + width] {
            cuts += 1;
        }
    }
    data + lambda * cuts as f64
}

/// `sum_p D_p(f_p) + lambda * #{4-adjacent pairs with different labels}`.
pub fn mrf_energy(
    labels: &[u32],
    models: &BTreeMap<u32, AffineModel>,
    previous: &GrayImage,
    current: &GrayImage,
    lambda: f64,
) -> Result<f64> {
    check(labels, models, current, previous, lambda)?;
    let costs = costs(models, current, previous);
    let idx: Vec<usize> = labels.iter().map(|l| costs.labels.binary_search(l).unwrap()).collect();
    Ok(energy_of(&idx, &costs, current.width, lambda))
}

/// Minimises the Potts energy starting from `labels`.
///
/// With `lambda = 0` every pixel takes its cheapest label (lowest label on
/// ties). Otherwise expansions run over labels in ascending order until a
/// sweep lowers the energy no further; the result never has higher energy
/// than the input.
pub fn mrf_smooth(
    labels: &[u32],
    models: &BTreeMap<u32, AffineModel>,
    previous: &GrayImage,
    current: &GrayImage,
    lambda: f64,
) -> Result<Vec<u32>> {
    check(labels, models, current, previous, lambda)?;
    let costs = costs(models, current, previous);
    let n = labels.len();
    if lambda == 0.0 {
        return Ok((0..n)
            .map(|k| {
                let mut best = 0;
                for l in 1..costs.labels.len() {
                    if costs.cost[l][k] < costs.cost[best][k] {
                        best = l;
                    }
                }
                costs.labels[best]
            })
            .collect());
    }
    let width = current.width;
    let mut idx: Vec<usize> = labels.iter().map(|l| costs.labels.binary_search(l).unwrap()).collect();
    let mut energy = energy_of(&idx, &costs, width, lambda);
    loop {
        let mut improved = false;
        for alpha in 0..costs.labels.len() {
            let proposal = expand(&idx, alpha, &costs, width, lambda);
            let e = energy_of(&proposal, &costs, width, lambda);
            if e < energy - EPS * energy.abs().max(1.0) {
                idx = proposal;
                energy = e;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(idx.into_iter().map(|l| costs.labels[l]).collect())
}

/// Optimal alpha-expansion move from `idx`.
fn expand(idx: &[usize], alpha: usize, costs: &Costs, width: usize, lambda: f64) -> Vec<usize> {
    let n = idx.len();
    let (s, t) = (n, n + 1);
    let mut g = MaxFlow::new(n + 2);
    // net cost of choosing alpha (x = 1) over keeping (x = 0)
    let mut unary: Vec<f64> = (0..n).map(|k| costs.cost[alpha][k] - costs.cost[idx[k]][k]).collect();
    let potts = |a: usize, b: usize| if a == b { 0.0 } else { lambda };
    let mut pair = |p: usize, q: usize, g: &mut MaxFlow| {
        let a = potts(idx[p], idx[q]);
        let b = potts(idx[p], alpha);
        let c = potts(alpha, idx[q]);
        unary[p] += c - a;
        unary[q] -= c;
        let cap = b + c - a;
        if cap > 0.0 {
            g.add_edge(p, q, cap);
        }
    };
    for k in 0..n {
        if (k + 1) % width != 0 {
            pair(k, k + 1, &mut g);
        }
        if k + width < n {
            pair(k, k + width, &mut g);
        }
    }
    for (k, &c) in unary.iter().enumerate() {
        if c > 0.0 {
            g.add_edge(s, k, c);
        } else if c < 0.0 {
            g.add_edge(k, t, -c);
        }
    }
    g.run(s, t);
    let source_side = g.source_side(s);
    (0..n).map(|k| if source_side[k] { idx[k] } else { alpha }).collect()
}

struct Edge {
    from: usize,
    to: usize,
    cap: f64,
}

/// Dinic's algorithm on real capacities.
struct MaxFlow {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl MaxFlow {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { from, to, cap });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { from: to, to: from, cap: 0.0 });
    }

    fn levels(&self, s: usize) -> Vec<i64> {
        let mut level = vec![-1; self.adj.len()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.adj[v] {
                let edge = &self.edges[e];
                if edge.cap > EPS && level[edge.to] < 0 {
                    level[edge.to] = level[v] + 1;
                    queue.push_back(edge.to);
                }
            }
        }
        level
    }

    fn run(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        loop {
            let mut level = self.levels(s);
            if level[t] < 0 {
                return total;
            }
            let mut next = vec![0usize; self.adj.len()];
            let mut path: Vec<usize> = Vec::new();
            let mut v = s;
            loop {
                if v == t {
                    let push = path.iter().map(|&e| self.edges[e].cap).fold(f64::INFINITY, f64::min);
                    for &e in &path {
                        self.edges[e].cap -= push;
                        self.edges[e ^ 1].cap += push;
                    }
                    total += push;
                    path.clear();
                    v = s;
                    continue;
                }
                let mut advanced = false;
                while next[v] < self.adj[v].len() {
                    let e = self.adj[v][next[v]];
                    let edge = &self.edges[e];
                    if edge.cap > EPS && level[edge.to] == level[v] + 1 {
                        path.push(e);
                        v = edge.to;
                        advanced = true;
                        break;
                    }
                    next[v] += 1;
                }
                if !advanced {
                    if v == s {
                        break;
                    }
                    level[v] = -1;
                    let e = path.pop().unwrap();
                    v = self.edges[e].from;
                    next[v] += 1;
                }
            }
        }
    }

    fn source_side(&self, s: usize) -> Vec<bool> {
        self.levels(s).into_iter().map(|l| l >= 0).collect()
    }
}
