//! End-to-end drivers: filtering, flow, supervoxels and motion layers.

use std::path::Path;

use crate::error::Result;
use crate::image::{FlowField, FrameSequence};
use crate::motionlayers::{run_motion_stream, MotionHierarchy, MotionParams};
use crate::optflow::{flow_for_sequence, FlowParams};
use crate::preprocess::{bilateral_filter_sequence, BilateralParams};
use crate::streamseg::{stream_segment, SegmentationHierarchy, StreamConfig};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentSettings {
    /// Bilateral smoothing before flow and grouping; `None` skips it.
    pub bilateral: Option<BilateralParams>,
    pub flow: FlowParams,
    pub stream: StreamConfig,
}

impl SegmentSettings {
    pub fn needs_flow(&self) -> bool {
        self.stream.use_flow_edges || self.stream.use_flow_feature
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutput {
    /// The frames the graph was built on.
    pub filtered: FrameSequence,
    /// Backward flow of frames `1..T`; empty when the configuration uses none.
    pub flows: Vec<FlowField>,
    pub hierarchy: SegmentationHierarchy,
}

pub fn segment_video(seq: &FrameSequence, settings: &SegmentSettings, external_flow: Option<&Path>) -> Result<SegmentOutput> {
    segment_inner(seq, settings, external_flow, settings.needs_flow())
}

fn segment_inner(
    seq: &FrameSequence,
    settings: &SegmentSettings,
    external_flow: Option<&Path>,
    want_flow: bool,
) -> Result<SegmentOutput> {
    settings.stream.validate()?;
    settings.flow.validate()?;
    let filtered = match &settings.bilateral {
        Some(p) => bilateral_filter_sequence(seq, p),
        None => seq.clone(),
    };
    let flows = if want_flow || external_flow.is_some() {
        flow_for_sequence(&filtered, &settings.flow, external_flow)?
    } else {
        Vec::new()
    };
    let used: &[FlowField] = if settings.needs_flow() { &flows } else { &[] };
    let hierarchy = stream_segment(&filtered, used, &settings.stream)?;
    Ok(SegmentOutput {
        filtered,
        flows,
        hierarchy,
    })
}

/// Supervoxels followed by motion layers on every frame pair. Motion models
/// are fitted to the same flow the supervoxels used and warp the original
/// frames.
pub fn motion_video(
    seq: &FrameSequence,
    settings: &SegmentSettings,
    motion: &MotionParams,
    external_flow: Option<&Path>,
) -> Result<(SegmentOutput, Vec<MotionHierarchy>)> {
    let seg = segment_inner(seq, settings, external_flow, true)?;
    let layers = run_motion_stream(seq, &seg.flows, &seg.hierarchy, motion)?;
    Ok((seg, layers))
}
