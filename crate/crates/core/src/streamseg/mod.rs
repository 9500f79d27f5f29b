//! Flow-guided streaming graph-based hierarchical segmentation.
//!
//! The video is cut into consecutive subsequences of `subseq_len` frames.
//! Each subsequence is grouped together with its predecessor, whose regions
//! are frozen at every level: they may absorb new voxels (which then inherit
//! the frozen label) but are never merged with each other or relabelled.
//!
//! Level 0 groups voxels over a graph of in-frame 8-neighbour edges plus
//! temporal edges to the 3x3 block around each voxel's backward-flow target
//! in the previous frame. Higher levels group the regions of the level below
//! using chi-squared distances of their color and per-frame flow histograms.

mod config;
mod features;
mod graph;
mod grouping;
mod hierarchy;

pub use config::StreamConfig;
pub use features::{
    chi2_distance, color_distance, combine_distance, extract_region_features, flow_distance, FlowHist,
    RegionRecord,
};
pub use graph::{build_spatial_edges, build_temporal_edges, build_voxel_edges, color_weight, VoxelEdge};
pub use grouping::segment_level0;
pub use hierarchy::{build_hierarchy, stream_segment, subsequence_ranges, SegmentationHierarchy};
