//! Label correspondence between consecutive frame pairs.

use std::collections::{BTreeMap, HashMap};

use super::affine::AffineModel;

/// Minimum share of a current region that must be covered by a warped
/// previous region for the two to correspond.
pub const MIN_OVERLAP: f64 = 0.3;

const EMPTY: u32 = u32::MAX;

/// Moves each previous region forward one frame.
///
/// Models hold backward flow, so a previous pixel `p` is assumed to continue
/// to `p - w(p)`. Collisions keep the first pixel in raster order.
pub fn warp_forward(prev_labels: &[u32], prev_models: &BTreeMap<u32, AffineModel>, width: usize, height: usize) -> Vec<u32> {
    let mut out = vec![EMPTY; width * height];
    for (k, &l) in prev_labels.iter().enumerate() {
        let Some(m) = prev_models.get(&l) else { continue };
        let (x, y) = ((k % width) as f64, (k / width) as f64);
        let (u, v) = m.flow_at(x, y);
        let (tx, ty) = ((x - u).round(), (y - v).round());
        if tx >= 0.0 && ty >= 0.0 && tx < width as f64 && ty < height as f64 {
            let target = ty as usize * width + tx as usize;
            if out[target] == EMPTY {
                out[target] = l;
            }
        }
    }
    out
}

/// Maps every current label to a stream-wide label.
///
/// A current region inherits the previous label whose warped footprint covers
/// most of it, if that covers at least [`MIN_OVERLAP`] of its area. A previous
/// label goes to at most one current region: the one with the largest overlap
/// (lower current label on ties). Everything else draws from `next_label`.
pub fn associate_temporal(
    prev_labels: &[u32],
    prev_models: &BTreeMap<u32, AffineModel>,
    cur_labels: &[u32],
    width: usize,
    height: usize,
    next_label: &mut u32,
) -> BTreeMap<u32, u32> {
    let warped = warp_forward(prev_labels, prev_models, width, height);
    let mut area: BTreeMap<u32, usize> = BTreeMap::new();
    let mut overlap: HashMap<(u32, u32), usize> = HashMap::new();
    for (&c, &p) in cur_labels.iter().zip(&warped) {
        *area.entry(c).or_default() += 1;
        if p != EMPTY {
            *overlap.entry((c, p)).or_default() += 1;
        }
    }
    let mut best: BTreeMap<u32, (u32, usize)> = BTreeMap::new();
    let mut sorted: Vec<_> = overlap.into_iter().collect();
    sorted.sort_unstable();
    for ((c, p), n) in sorted {
        if best.get(&c).is_none_or(|&(_, m)| n > m) {
            best.insert(c, (p, n));
        }
    }
    // previous label -> (overlap, current label) of the strongest claimant
    let mut claims: BTreeMap<u32, (usize, u32)> = BTreeMap::new();
    for (&c, &(p, n)) in &best {
        if n as f64 >= MIN_OVERLAP * area[&c] as f64 {
            match claims.get(&p) {
                Some(&(m, _)) if m >= n => {}
                _ => {
                    claims.insert(p, (n, c));
                }
            }
        }
    }
    let winners: HashMap<u32, u32> = claims.into_iter().map(|(p, (_, c))| (c, p)).collect();
    area.keys()
        .map(|&c| {
            let label = winners.get(&c).copied().unwrap_or_else(|| {
                let l = *next_label;
                *next_label += 1;
                l
            });
            (c, label)
        })
        .collect()
}
