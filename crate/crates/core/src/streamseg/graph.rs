use crate::image::{FlowField, Frame, Rgb};

/// An undirected weighted edge between two voxels of the active window.
/// Voxel ids are `x + y*W + t*W*H` with `t` relative to the window start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelEdge {
    pub a: u32,
    pub b: u32,
    pub w: f64,
}

impl VoxelEdge {
    /// Endpoints as `(min, max)`.
    pub fn key(&self) -> (u32, u32) {
        (self.a.min(self.b), self.a.max(self.b))
    }
}

const MAX_RGB_DIST: f64 = 441.672_955_930_063_7; // 255 * sqrt(3)

/// Euclidean RGB distance scaled to `[0, 1]`.
pub fn color_weight(p: Rgb, q: Rgb) -> f64 {
    let d2: f64 = (0..3)
        .map(|c| {
            let d = f64::from(p[c]) - f64::from(q[c]);
            d * d
        })
        .sum();
    (d2.sqrt() / MAX_RGB_DIST).min(1.0)
}

/// In-frame 8-neighbour edges, each undirected pair emitted once.
pub fn build_spatial_edges(frames: &[Frame]) -> Vec<VoxelEdge> {
    let Some(first) = frames.first() else {
        return Vec::new();
    };
    let (w, h) = (first.width(), first.height());
    let plane = w * h;
    let mut edges = Vec::with_capacity(frames.len() * plane * 4);
    for (t, frame) in frames.iter().enumerate() {
        let px = frame.pixels();
        let base = t * plane;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let mut push = |j: usize| {
                    edges.push(VoxelEdge {
                        a: (base + i) as u32,
                        b: (base + j) as u32,
                        w: color_weight(px[i], px[j]),
                    })
                };
                if x + 1 < w {
                    push(i + 1);
                }
                if y + 1 < h {
                    push(i + w);
                    if x + 1 < w {
                        push(i + w + 1);
                    }
                    if x > 0 {
                        push(i + w - 1);
                    }
                }
            }
        }
    }
    edges
}

/// Temporal edges from each voxel `(x, y, t)`, `t >= 1`, to the 3x3 block
/// around `(round(x + u), round(y + v), t - 1)`. `flows[t - 1]` is the
/// backward flow of frame `t`; with `use_flow_edges` off, or when no flow is
/// supplied, the block is centred on `(x, y)`. Out-of-frame targets are
/// dropped; duplicate pairs keep the minimum weight.
pub fn build_temporal_edges(frames: &[Frame], flows: &[FlowField], use_flow_edges: bool) -> Vec<VoxelEdge> {
    let Some(first) = frames.first() else {
        return Vec::new();
    };
    let (w, h) = (first.width() as i64, first.height() as i64);
    let plane = (w * h) as usize;
    let mut edges = Vec::with_capacity(frames.len().saturating_sub(1) * plane * 9);
    for t in 1..frames.len() {
        let cur = frames[t].pixels();
        let prev = frames[t - 1].pixels();
        let flow = if use_flow_edges { flows.get(t - 1) } else { None };
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                let (cx, cy) = match flow {
                    Some(f) => {
                        let (u, v) = f.at(x as usize, y as usize);
                        (
                            (x as f64 + f64::from(u)).round() as i64,
                            (y as f64 + f64::from(v)).round() as i64,
                        )
                    }
                    None => (x, y),
                };
                for n in -1..=1 {
                    let ty = cy + n;
                    if ty < 0 || ty >= h {
                        continue;
                    }
                    for m in -1..=1 {
                        let tx = cx + m;
                        if tx < 0 || tx >= w {
                            continue;
                        }
                        let j = (ty * w + tx) as usize;
                        edges.push(VoxelEdge {
                            a: ((t - 1) * plane + j) as u32,
                            b: (t * plane + i) as u32,
                            w: color_weight(prev[j], cur[i]),
                        });
                    }
                }
            }
        }
    }
    dedup_min(&mut edges);
    edges
}

fn dedup_min(edges: &mut Vec<VoxelEdge>) {
    edges.sort_by(|p, q| p.key().cmp(&q.key()).then(p.w.total_cmp(&q.w)));
    edges.dedup_by(|later, kept| later.key() == kept.key());
}

/// Spatial plus temporal edges of a window, sorted by `(w, min id, max id)`.
pub fn build_voxel_edges(frames: &[Frame], flows: &[FlowField], use_flow_edges: bool) -> Vec<VoxelEdge> {
    let mut edges = build_spatial_edges(frames);
    edges.extend(build_temporal_edges(frames, flows, use_flow_edges));
    sort_edges(&mut edges);
    edges
}

pub(crate) fn sort_edges(edges: &mut [VoxelEdge]) {
    edges.sort_by(|p, q| p.w.total_cmp(&q.w).then_with(|| p.key().cmp(&q.key())));
}
