//! Greedy region merging and the per-frame-pair motion hierarchy.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{FlowField, GrayImage};
use crate::rng::mix;

use super::affine::{fit_affine_ransac, AffineModel, RansacParams};
use super::divergence::{region_distance, DivergenceParams, MotionRegion};

/// Geometric threshold schedule `tau0 * growth^l` for `l in 0..levels`.
pub fn tau_schedule(tau0: f64, growth: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|l| tau0 * growth.powi(l as i32)).collect()
}

/// Parameters shared by hierarchy construction and merging.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionParams {
    pub divergence: DivergenceParams,
    pub ransac: RansacParams,
    /// Merge threshold for each level above level 0, strictly increasing.
    pub schedule: Vec<f64>,
    /// Supervoxel hierarchy level used to initialise level 0.
    pub supervoxel_level: usize,
    /// Potts weight of the smoothing pass; `None` disables it.
    pub mrf_lambda: Option<f64>,
    /// Motion level that is smoothed; defaults to the top level.
    pub mrf_level: Option<usize>,
    pub seed: u64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            divergence: DivergenceParams::default(),
            ransac: RansacParams::default(),
            schedule: tau_schedule(4.0, 2.0, 6),
            supervoxel_level: 0,
            mrf_lambda: None,
            mrf_level: None,
            seed: 0,
        }
    }
}

/// One level: a label per pixel and the model of every label present.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionLevel {
    pub labels: Vec<u32>,
    pub models: BTreeMap<u32, AffineModel>,
}

impl MotionLevel {
    pub fn num_regions(&self) -> usize {
        self.models.len()
    }

    pub(crate) fn from_regions(width: usize, height: usize, regions: &[MotionRegion]) -> Self {
        let mut labels = vec![0; width * height];
        let mut models = BTreeMap::new();
        for r in regions {
            for &(x, y) in &r.pixels {
                labels[y as usize * width + x as usize] = r.id;
            }
            models.insert(r.id, r.model);
        }
        Self { labels, models }
    }
}

/// Motion segmentation of one frame pair at increasing merge thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionHierarchy {
    pub width: usize,
    pub height: usize,
    pub levels: Vec<MotionLevel>,
    pub tau_schedule: Vec<f64>,
    /// Smoothed labelling of `smoothed_level`, when smoothing ran.
    pub smoothed: Option<MotionLevel>,
    pub smoothed_level: Option<usize>,
}

impl MotionHierarchy {
    pub fn region_counts(&self) -> Vec<usize> {
        self.levels.iter().map(MotionLevel::num_regions).collect()
    }

    /// The labelling reported for `level`: the smoothed one if present.
    pub fn output(&self, level: usize) -> &MotionLevel {
        match (&self.smoothed, self.smoothed_level) {
            (Some(s), Some(l)) if l == level => s,
            _ => &self.levels[level],
        }
    }
}

/// 4-connected components of a label frame, numbered by first appearance.
pub fn connected_components(labels: &[u32], width: usize, height: usize) -> Vec<u32> {
    const UNSET: u32 = u32::MAX;
    let mut out = vec![UNSET; labels.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if out[start] != UNSET {
            continue;
        }
        out[start] = next;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (x, y) = (k % width, k / width);
            let mut visit = |n: usize| {
                if out[n] == UNSET && labels[n] == labels[start] {
                    out[n] = next;
                    stack.push(n);
                }
            };
            if x > 0 {
                visit(k - 1);
            }
            if x + 1 < width {
                visit(k + 1);
            }
            if y > 0 {
                visit(k - width);
            }
            if y + 1 < height {
                visit(k + width);
            }
        }
        next += 1;
    }
    out
}

/// Unordered pairs of distinct labels that touch under 4-connectivity.
pub fn region_adjacency(labels: &[u32], width: usize, height: usize) -> BTreeSet<(u32, u32)> {
    let mut pairs = BTreeSet::new();
    let mut add = |a: u32, b: u32| {
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    };
    for y in 0..height {
        for x in 0..width {
            let k = y * width + x;
            if x + 1 < width {
                add(labels[k], labels[k + 1]);
            }
            if y + 1 < height {
                add(labels[k], labels[k + width]);
            }
        }
    }
    pairs
}

fn region_seed(seed: u64, id: u32, n: usize) -> u64 {
    mix(seed ^ mix(u64::from(id) << 32 ^ n as u64))
}

pub(crate) fn fit_region(pixels: &[(u32, u32)], id: u32, flow: &FlowField, seed: u64, ransac: &RansacParams) -> AffineModel {
    fit_affine_ransac(pixels, flow, region_seed(seed, id, pixels.len()), ransac).expect("regions are non-empty")
}

const DISTANCE_BATCH: usize = 8;

/// First-fit greedy merging at threshold `tau`.
///
/// Regions are visited in ascending id; each absorbs the first neighbour (in
/// ascending id) within `tau`, keeps the lower id, is refitted, and is
/// rescanned. Sweeps repeat until nothing merges.
#[allow(clippy::too_many_arguments)]
pub fn merge_pass(
    regions: Vec<MotionRegion>,
    adjacency: &BTreeSet<(u32, u32)>,
    tau: f64,
    frame: &GrayImage,
    flow: &FlowField,
    divergence: &DivergenceParams,
    ransac: &RansacParams,
    seed: u64,
) -> Vec<MotionRegion> {
    let mut regions: BTreeMap<u32, MotionRegion> = regions.into_iter().map(|r| (r.id, r)).collect();
    let mut adj: BTreeMap<u32, BTreeSet<u32>> = regions.keys().map(|&id| (id, BTreeSet::new())).collect();
    for &(a, b) in adjacency {
        if regions.contains_key(&a) && regions.contains_key(&b) && a != b {
            adj.get_mut(&a).unwrap().insert(b);
            adj.get_mut(&b).unwrap().insert(a);
        }
    }
    let key = |a: u32, b: u32| (a.min(b), a.max(b));
    let mut cache: HashMap<(u32, u32), f64> = HashMap::new();

    loop {
        let mut merged_any = false;
        let ids: Vec<u32> = regions.keys().copied().collect();
        for id in ids {
            if !regions.contains_key(&id) {
                continue;
            }
            let mut cur = id;
            loop {
                let neighbours: Vec<u32> = adj[&cur].iter().copied().collect();
                let mut hit = None;
                for batch in neighbours.chunks(DISTANCE_BATCH) {
                    let missing: Vec<u32> = batch.iter().copied().filter(|&n| !cache.contains_key(&key(cur, n))).collect();
                    let here = &regions[&cur];
                    let computed: Vec<(u32, f64)> = missing
                        .par_iter()
                        .map(|&n| (n, region_distance(here, &regions[&n], frame, divergence)))
                        .collect();
                    for (n, d) in computed {
                        cache.insert(key(cur, n), d);
                    }
                    if let Some(&n) = batch.iter().find(|&&n| cache[&key(cur, n)] <= tau) {
                        hit = Some(n);
                        break;
                    }
                }
                let Some(other) = hit else { break };
                let (keep, gone) = (cur.min(other), cur.max(other));
                let gone_region = regions.remove(&gone).unwrap();
                let gone_adj = adj.remove(&gone).unwrap();
                for &n in adj[&keep].iter().chain(&gone_adj) {
                    cache.remove(&key(keep, n));
                    cache.remove(&key(gone, n));
                }
                for &n in &gone_adj {
                    if n != keep {
                        let set = adj.get_mut(&n).unwrap();
                        set.remove(&gone);
                        set.insert(keep);
                        adj.get_mut(&keep).unwrap().insert(n);
                    }
                }
                adj.get_mut(&keep).unwrap().remove(&gone);
                let kept = regions.get_mut(&keep).unwrap();
                kept.pixels.extend(gone_region.pixels);
                kept.pixels.sort_unstable_by_key(|&(x, y)| (y, x));
                kept.model = fit_region(&kept.pixels, keep, flow, seed, ransac);
                cur = keep;
                merged_any = true;
            }
        }
        if !merged_any {
            break;
        }
    }
    regions.into_values().collect()
}

/// Builds the motion hierarchy of one frame pair.
///
/// `init_labels` is a label per pixel of the current frame; `frame` is the
/// frame `flow` points into.
pub fn motion_hierarchy(
    init_labels: &[u32],
    frame: &GrayImage,
    flow: &FlowField,
    params: &MotionParams,
) -> Result<MotionHierarchy> {
    let (w, h) = (flow.width(), flow.height());
    if init_labels.len() != w * h || frame.width != w || frame.height != h {
        return Err(Error::Contract(format!(
            "motion hierarchy inputs disagree: {} labels, frame {}x{}, flow {w}x{h}",
            init_labels.len(),
            frame.width,
            frame.height
        )));
    }
    if params.schedule.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::Contract(format!(
            "merge schedule must be strictly increasing, got {:?}",
            params.schedule
        )));
    }
    let components = connected_components(init_labels, w, h);
    let mut pixels: Vec<Vec<(u32, u32)>> = Vec::new();
    for (k, &c) in components.iter().enumerate() {
        if c as usize == pixels.len() {
            pixels.push(Vec::new());
        }
        pixels[c as usize].push(((k % w) as u32, (k / w) as u32));
    }
    let mut regions: Vec<MotionRegion> = pixels
        .into_par_iter()
        .enumerate()
        .map(|(id, pixels)| {
            let model = fit_region(&pixels, id as u32, flow, params.seed, &params.ransac);
            MotionRegion {
                id: id as u32,
                pixels,
                model,
            }
        })
        .collect();

    let mut levels = vec![MotionLevel::from_regions(w, h, &regions)];
    for &tau in &params.schedule {
        let adjacency = region_adjacency(&levels.last().unwrap().labels, w, h);
        regions = merge_pass(
            regions,
            &adjacency,
            tau,
            frame,
            flow,
            &params.divergence,
            &params.ransac,
            params.seed,
        );
        levels.push(MotionLevel::from_regions(w, h, &regions));
    }
    Ok(MotionHierarchy {
        width: w,
        height: h,
        levels,
        tau_schedule: params.schedule.clone(),
        smoothed: None,
        smoothed_level: None,
    })
}
