//! Frame-pair by frame-pair motion layers with stream-consistent labels.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::image::{FlowField, FrameSequence, GrayImage};
use crate::streamseg::SegmentationHierarchy;

use super::hierarchy::{motion_hierarchy, MotionHierarchy, MotionLevel, MotionParams};
use super::mrf::mrf_smooth;
use super::temporal::associate_temporal;

fn relabel(level: &MotionLevel, map: &BTreeMap<u32, u32>) -> MotionLevel {
    MotionLevel {
        labels: level.labels.iter().map(|l| map[l]).collect(),
        models: level.models.iter().map(|(l, m)| (map[l], *m)).collect(),
    }
}

fn smooth_level(level: &MotionLevel, previous: &GrayImage, current: &GrayImage, lambda: f64) -> Result<MotionLevel> {
    let labels = mrf_smooth(&level.labels, &level.models, previous, current, lambda)?;
    let mut models = BTreeMap::new();
    for l in &labels {
        models.entry(*l).or_insert(level.models[l]);
    }
    Ok(MotionLevel { labels, models })
}

/// Runs the motion hierarchy on every frame pair `(t-1, t)`.
///
/// `flows[t-1]` is the backward flow of frame `t`. Level 0 of each pair is
/// initialised from the supervoxels of frame `t` at
/// `params.supervoxel_level`. Labels of every level (and of the smoothed
/// output, when enabled) are carried across pairs by overlap association;
/// unmatched regions get labels never used before in the stream.
pub fn run_motion_stream(
    seq: &FrameSequence,
    flows: &[FlowField],
    supervoxels: &SegmentationHierarchy,
    params: &MotionParams,
) -> Result<Vec<MotionHierarchy>> {
    let t_len = seq.len();
    if t_len < 2 {
        return Err(Error::Contract("motion layers need at least two frames".into()));
    }
    if flows.len() != t_len - 1 {
        return Err(Error::Contract(format!(
            "expected {} backward flow fields, got {}",
            t_len - 1,
            flows.len()
        )));
    }
    let sv = supervoxels.levels.get(params.supervoxel_level).ok_or_else(|| {
        Error::Contract(format!(
            "supervoxel level {} requested, hierarchy has {}",
            params.supervoxel_level,
            supervoxels.levels.len()
        ))
    })?;
    if sv.width() != seq.width() || sv.height() != seq.height() || sv.depth() != t_len {
        return Err(Error::Contract("supervoxels and video differ in size".into()));
    }
    let mrf_level = params.mrf_level.unwrap_or(params.schedule.len());
    if params.mrf_lambda.is_some() && mrf_level > params.schedule.len() {
        return Err(Error::Contract(format!("smoothing level {mrf_level} does not exist")));
    }
    let (w, h) = (seq.width(), seq.height());
    let grays: Vec<GrayImage> = seq.frames().iter().map(|f| f.to_gray()).collect();

    let mut out: Vec<MotionHierarchy> = Vec::with_capacity(t_len - 1);
    let mut next_label = 0u32;
    for t in 1..t_len {
        let mut hier = motion_hierarchy(sv.frame(t), &grays[t - 1], &flows[t - 1], params)?;
        if let Some(lambda) = params.mrf_lambda {
            hier.smoothed = Some(smooth_level(&hier.levels[mrf_level], &grays[t - 1], &grays[t], lambda)?);
            hier.smoothed_level = Some(mrf_level);
        }
        match out.last() {
            None => {
                let max = hier
                    .levels
                    .iter()
                    .chain(&hier.smoothed)
                    .flat_map(|l| l.models.keys())
                    .max()
                    .copied()
                    .unwrap_or(0);
                next_label = max + 1;
            }
            Some(prev) => {
                let mut associate = |p: &MotionLevel, c: &MotionLevel| {
                    let map = associate_temporal(&p.labels, &p.models, &c.labels, w, h, &mut next_label);
                    relabel(c, &map)
                };
                hier.levels = prev.levels.iter().zip(&hier.levels).map(|(p, c)| associate(p, c)).collect();
                if let (Some(p), Some(c)) = (&prev.smoothed, &hier.smoothed) {
                    hier.smoothed = Some(associate(p, c));
                }
            }
        }
        log::debug!("frame pair {t}: region counts {:?}", hier.region_counts());
        out.push(hier);
    }
    Ok(out)
}
