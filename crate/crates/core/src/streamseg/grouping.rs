//! Felzenszwalb–Huttenlocher grouping with optional frozen components.

use std::collections::HashMap;

use super::graph::{sort_edges, VoxelEdge};
use crate::image::LabelVolume;

/// Union-find over graph nodes carrying the minimum-internal-difference
/// statistics. A component may hold at most one frozen label; components
/// with different frozen labels never merge.
pub(crate) struct Grouping {
    parent: Vec<u32>,
    size: Vec<u64>,
    int_diff: Vec<f64>,
    frozen: Vec<Option<u32>>,
}

impl Grouping {
    pub(crate) fn new(sizes: Vec<u64>, frozen: Vec<Option<u32>>, carried_int: &HashMap<u32, f64>) -> Self {
        let n = sizes.len();
        debug_assert_eq!(frozen.len(), n);
        let mut g = Self {
            parent: (0..n as u32).collect(),
            size: sizes,
            int_diff: vec![0.0; n],
            frozen,
        };
        // Pre-group nodes that share a frozen label.
        let mut first_with: HashMap<u32, u32> = HashMap::new();
        for node in 0..n as u32 {
            if let Some(label) = g.frozen[node as usize] {
                match first_with.get(&label) {
                    Some(&head) => {
                        let (ra, rb) = (g.find(head), g.find(node));
                        g.link(ra, rb, 0.0);
                    }
                    None => {
                        first_with.insert(label, node);
                    }
                }
            }
        }
        for (&label, &head) in &first_with {
            let r = g.find(head) as usize;
            g.int_diff[r] = carried_int.get(&label).copied().unwrap_or(0.0);
        }
        g
    }

    pub(crate) fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    fn link(&mut self, ra: u32, rb: u32, w: f64) -> u32 {
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        let (b, s) = (big as usize, small as usize);
        self.parent[s] = big;
        self.size[b] += self.size[s];
        self.int_diff[b] = self.int_diff[b].max(self.int_diff[s]).max(w);
        self.frozen[b] = self.frozen[b].or(self.frozen[s]);
        big
    }

    fn compatible(&self, ra: u32, rb: u32) -> bool {
        !(self.frozen[ra as usize].is_some() && self.frozen[rb as usize].is_some())
    }

    /// Main sweep over edges sorted ascending.
    pub(crate) fn merge_sorted(&mut self, edges: &[VoxelEdge], k: f64) {
        for e in edges {
            let (ra, rb) = (self.find(e.a), self.find(e.b));
            if ra == rb || !self.compatible(ra, rb) {
                continue;
            }
            let ta = self.int_diff[ra as usize] + k / self.size[ra as usize] as f64;
            let tb = self.int_diff[rb as usize] + k / self.size[rb as usize] as f64;
            if e.w <= ta.min(tb) {
                self.link(ra, rb, e.w);
            }
        }
    }

    /// Absorbs components smaller than `min_size` into their cheapest neighbour.
    pub(crate) fn absorb_small(&mut self, edges: &[VoxelEdge], min_size: u64) {
        for e in edges {
            let (ra, rb) = (self.find(e.a), self.find(e.b));
            if ra == rb || !self.compatible(ra, rb) {
                continue;
            }
            if self.size[ra as usize] < min_size || self.size[rb as usize] < min_size {
                self.link(ra, rb, e.w);
            }
        }
    }

    pub(crate) fn frozen_of(&self, root: u32) -> Option<u32> {
        self.frozen[root as usize]
    }

    pub(crate) fn int_of(&self, root: u32) -> f64 {
        self.int_diff[root as usize]
    }
}

/// Assigns output labels: frozen components keep their label, the rest get
/// fresh labels from `next_label` in order of first node appearance.
pub(crate) fn assign_labels(
    g: &mut Grouping,
    num_nodes: usize,
    next_label: &mut u32,
) -> (Vec<u32>, HashMap<u32, f64>) {
    let mut root_label: HashMap<u32, u32> = HashMap::new();
    let mut ints = HashMap::new();
    let mut labels = Vec::with_capacity(num_nodes);
    for node in 0..num_nodes as u32 {
        let r = g.find(node);
        let label = *root_label.entry(r).or_insert_with(|| match g.frozen_of(r) {
            Some(l) => l,
            None => {
                let l = *next_label;
                *next_label += 1;
                l
            }
        });
        ints.entry(label).or_insert_with(|| g.int_of(r));
        labels.push(label);
    }
    (labels, ints)
}

/// Level-0 grouping of a voxel graph. Edges need not be pre-sorted.
pub fn segment_level0(edges: &[VoxelEdge], dims: (usize, usize, usize), k0: f64, min_size: usize) -> LabelVolume {
    let (w, h, d) = dims;
    let n = w * h * d;
    let mut sorted = edges.to_vec();
    sort_edges(&mut sorted);
    let mut g = Grouping::new(vec![1; n], vec![None; n], &HashMap::new());
    g.merge_sorted(&sorted, k0);
    g.absorb_small(&sorted, min_size as u64);
    let mut next = 0;
    let (labels, _) = assign_labels(&mut g, n, &mut next);
    LabelVolume::new(w, h, d, labels).expect("dims match node count")
}
