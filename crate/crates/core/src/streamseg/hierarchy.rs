use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use rayon::prelude::*;

use super::config::StreamConfig;
use super::features::{color_distance, combine, extract_region_features, flow_distance, RegionRecord};
use super::graph::{build_voxel_edges, sort_edges, VoxelEdge};
use super::grouping::{assign_labels, Grouping};
use crate::error::{Error, Result};
use crate::image::{FlowField, Frame, FrameSequence, LabelVolume};

/// Nested label volumes, finest first, with the region descriptors of each
/// level.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationHierarchy {
    pub levels: Vec<LabelVolume>,
    pub region_tables: Vec<Vec<RegionRecord>>,
}

impl SegmentationHierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn region_counts(&self) -> Vec<usize> {
        self.levels.iter().map(LabelVolume::num_labels).collect()
    }

    /// Every level-`l` label maps to exactly one level-`l+1` label.
    pub fn is_nested(&self) -> bool {
        self.levels.windows(2).all(|pair| {
            let mut parent: HashMap<u32, u32> = HashMap::new();
            pair[0]
                .labels()
                .iter()
                .zip(pair[1].labels())
                .all(|(&fine, &coarse)| *parent.entry(fine).or_insert(coarse) == coarse)
        })
    }
}

/// Consecutive `[start, end)` frame ranges of length `subseq_len`; the last
/// may be shorter.
pub fn subsequence_ranges(num_frames: usize, subseq_len: usize) -> Vec<Range<usize>> {
    (0..num_frames)
        .step_by(subseq_len.max(1))
        .map(|s| s..(s + subseq_len).min(num_frames))
        .collect()
}

/// Labels of the already-emitted predecessor subsequence, at every level.
struct FrozenPart {
    frames: usize,
    levels: Vec<Vec<u32>>,
    ints: Vec<HashMap<u32, f64>>,
}

struct LevelResult {
    labels: Vec<u32>,
    ints: HashMap<u32, f64>,
}

fn group_level0(
    edges: &[VoxelEdge],
    num_voxels: usize,
    frozen: Option<&FrozenPart>,
    config: &StreamConfig,
    next_label: &mut u32,
) -> LevelResult {
    let mut frozen_labels = vec![None; num_voxels];
    let empty = HashMap::new();
    let mut carried = &empty;
    if let Some(fz) = frozen {
        for (slot, &l) in frozen_labels.iter_mut().zip(&fz.levels[0]) {
            *slot = Some(l);
        }
        carried = &fz.ints[0];
    }
    let mut g = Grouping::new(vec![1; num_voxels], frozen_labels, carried);
    g.merge_sorted(edges, config.k_at(0));
    g.absorb_small(edges, config.min_size as u64);
    let (labels, ints) = assign_labels(&mut g, num_voxels, next_label);
    LevelResult { labels, ints }
}

#[allow(clippy::too_many_arguments)]
fn group_upper_level(
    level: usize,
    below: &[u32],
    dims: (usize, usize, usize),
    frames: &[Frame],
    flows: &[FlowField],
    voxel_edges: &[VoxelEdge],
    frozen: Option<&FrozenPart>,
    config: &StreamConfig,
    next_label: &mut u32,
) -> LevelResult {
    // Nodes are the regions of the level below, indexed by first appearance.
    let mut node_of_label: HashMap<u32, u32> = HashMap::new();
    let mut node_label: Vec<u32> = Vec::new();
    let node_of_voxel: Vec<u32> = below
        .iter()
        .map(|&l| {
            *node_of_label.entry(l).or_insert_with(|| {
                node_label.push(l);
                (node_label.len() - 1) as u32
            })
        })
        .collect();
    let num_nodes = node_label.len();
    let mut sizes = vec![0u64; num_nodes];
    for &n in &node_of_voxel {
        sizes[n as usize] += 1;
    }

    let mut frozen_labels: Vec<Option<u32>> = vec![None; num_nodes];
    let empty = HashMap::new();
    let mut carried = &empty;
    if let Some(fz) = frozen {
        for (v, &l) in fz.levels[level].iter().enumerate() {
            frozen_labels[node_of_voxel[v] as usize] = Some(l);
        }
        carried = &fz.ints[level];
    }

    let below_volume = LabelVolume::new(dims.0, dims.1, dims.2, below.to_vec()).expect("window dims");
    let records: BTreeMap<u32, RegionRecord> = extract_region_features(&below_volume, frames, flows, config)
        .into_iter()
        .map(|r| (r.id, r))
        .collect();

    let mut pairs: Vec<(u32, u32)> = voxel_edges
        .iter()
        .filter_map(|e| {
            let (na, nb) = (node_of_voxel[e.a as usize], node_of_voxel[e.b as usize]);
            if na == nb {
                return None;
            }
            // Two frozen nodes can never merge.
            if frozen_labels[na as usize].is_some() && frozen_labels[nb as usize].is_some() {
                return None;
            }
            Some((na.min(nb), na.max(nb)))
        })
        .collect();
    pairs.sort_unstable();
    pairs.dedup();

    let mut region_edges: Vec<VoxelEdge> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let ra = &records[&node_label[a as usize]];
            let rb = &records[&node_label[b as usize]];
            let dc = color_distance(ra, rb);
            let w = if config.use_flow_feature {
                combine(dc, flow_distance(ra, rb))
            } else {
                dc
            };
            VoxelEdge { a, b, w }
        })
        .collect();
    sort_edges(&mut region_edges);

    let mut g = Grouping::new(sizes, frozen_labels, carried);
    g.merge_sorted(&region_edges, config.k_at(level));
    let (node_labels, ints) = assign_labels(&mut g, num_nodes, next_label);
    LevelResult {
        labels: node_of_voxel.iter().map(|&n| node_labels[n as usize]).collect(),
        ints,
    }
}

fn segment_window(
    frames: &[Frame],
    flows: &[FlowField],
    config: &StreamConfig,
    frozen: Option<&FrozenPart>,
    level0: Option<&[u32]>,
    next_labels: &mut [u32],
) -> Vec<LevelResult> {
    let (w, h, d) = (frames[0].width(), frames[0].height(), frames.len());
    let n = w * h * d;
    let edges = build_voxel_edges(frames, flows, config.use_flow_edges);
    let first = match level0 {
        Some(labels) => LevelResult {
            labels: labels.to_vec(),
            ints: HashMap::new(),
        },
        None => group_level0(&edges, n, frozen, config, &mut next_labels[0]),
    };
    let mut results = vec![first];
    for level in 1..config.levels {
        let below = &results[level - 1].labels;
        let next = group_upper_level(
            level,
            below,
            (w, h, d),
            frames,
            flows,
            &edges,
            frozen,
            config,
            &mut next_labels[level],
        );
        results.push(next);
    }
    results
}

fn check_flows(frames: usize, width: usize, height: usize, flows: &[FlowField]) -> Result<()> {
    if !flows.is_empty() && flows.len() + 1 != frames {
        return Err(Error::Contract(format!(
            "expected {} flow fields for {frames} frames, got {}",
            frames.saturating_sub(1),
            flows.len()
        )));
    }
    if let Some(f) = flows.iter().find(|f| f.width() != width || f.height() != height) {
        return Err(Error::Contract(format!(
            "flow field is {}x{}, frames are {width}x{height}",
            f.width(),
            f.height()
        )));
    }
    Ok(())
}

fn region_tables(levels: &[LabelVolume], frames: &[Frame], flows: &[FlowField], config: &StreamConfig) -> Vec<Vec<RegionRecord>> {
    levels
        .par_iter()
        .map(|l| extract_region_features(l, frames, flows, config))
        .collect()
}

/// Builds levels `1..config.levels` over a single window on top of `level0`.
/// `flows` is empty or holds the backward flow of frames `1..`.
pub fn build_hierarchy(
    level0: &LabelVolume,
    frames: &[Frame],
    flows: &[FlowField],
    config: &StreamConfig,
) -> Result<SegmentationHierarchy> {
    config.validate()?;
    if frames.is_empty()
        || level0.depth() != frames.len()
        || level0.width() != frames[0].width()
        || level0.height() != frames[0].height()
    {
        return Err(Error::Contract("level-0 labels must match the frames".into()));
    }
    check_flows(frames.len(), level0.width(), level0.height(), flows)?;
    let mut next = vec![0u32; config.levels];
    let results = segment_window(frames, flows, config, None, Some(level0.labels()), &mut next);
    let levels: Vec<LabelVolume> = results
        .into_iter()
        .map(|r| LabelVolume::new(level0.width(), level0.height(), level0.depth(), r.labels).expect("dims"))
        .collect();
    let region_tables = region_tables(&levels, frames, flows, config);
    Ok(SegmentationHierarchy { levels, region_tables })
}

/// Streaming segmentation over subsequences of `config.subseq_len` frames.
///
/// `flows` is empty (grid temporal edges, no flow feature) or holds the
/// backward flow of frames `1..len`. Labels emitted for a subsequence depend
/// only on that subsequence and its predecessors.
pub fn stream_segment(seq: &FrameSequence, flows: &[FlowField], config: &StreamConfig) -> Result<SegmentationHierarchy> {
    config.validate()?;
    let (w, h, t_total) = (seq.width(), seq.height(), seq.len());
    check_flows(t_total, w, h, flows)?;
    let plane = w * h;
    let frames = seq.frames();
    let ranges = subsequence_ranges(t_total, config.subseq_len);

    let mut next_labels = vec![0u32; config.levels];
    let mut out: Vec<Vec<u32>> = vec![Vec::with_capacity(t_total * plane); config.levels];
    let mut frozen: Option<FrozenPart> = None;
    for (i, range) in ranges.iter().enumerate() {
        let win_start = if i == 0 { range.start } else { ranges[i - 1].start };
        let win_frames = &frames[win_start..range.end];
        let win_flows = if flows.is_empty() {
            &[][..]
        } else {
            &flows[win_start..range.end - 1]
        };
        let results = segment_window(win_frames, win_flows, config, frozen.as_ref(), None, &mut next_labels);
        let offset = (range.start - win_start) * plane;
        let mut carry_levels = Vec::with_capacity(config.levels);
        let mut carry_ints = Vec::with_capacity(config.levels);
        for (level, r) in results.into_iter().enumerate() {
            let fresh = &r.labels[offset..];
            out[level].extend_from_slice(fresh);
            carry_levels.push(fresh.to_vec());
            carry_ints.push(r.ints);
        }
        log::debug!(
            "window {i}: frames {}..{}, labels allocated per level {:?}",
            range.start,
            range.end,
            next_labels
        );
        frozen = Some(FrozenPart {
            frames: range.len(),
            levels: carry_levels,
            ints: carry_ints,
        });
    }
    debug_assert!(frozen.as_ref().is_none_or(|f| f.frames > 0));

    let levels: Vec<LabelVolume> = out
        .into_iter()
        .map(|labels| LabelVolume::new(w, h, t_total, labels).expect("dims"))
        .collect();
    let region_tables = region_tables(&levels, frames, flows, config);
    Ok(SegmentationHierarchy { levels, region_tables })
}
