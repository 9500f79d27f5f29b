//! Affine motion layers on top of supervoxels.
//!
//! For every frame pair the supervoxels of the current frame seed a set of
//! regions, each with a RANSAC affine fit of the backward flow. Neighbouring
//! regions are merged greedily when their symmetric divergence, the warping
//! disagreement of their models measured in a fixed-size canonical frame,
//! stays under a per-level threshold. A Potts model solved by alpha-expansion
//! optionally smooths one level, and overlap association carries labels from
//! one pair to the next.
//!
//! RANSAC sampling uses [`SplitMix64`](crate::rng::SplitMix64), so fits are
//! reproducible from the seed alone.

mod affine;
mod divergence;
mod hierarchy;
mod mrf;
mod stream;
mod temporal;

pub use affine::{fit_affine_ransac, AffineModel, RansacParams};
pub use divergence::{
    directed_divergence, region_distance, warp_to_canonical, CanonicalPatch, DivergenceNorm, DivergenceParams,
    MotionRegion,
};
pub use hierarchy::{
    connected_components, merge_pass, motion_hierarchy, region_adjacency, tau_schedule, MotionHierarchy, MotionLevel,
    MotionParams,
};
pub use mrf::{data_cost, mrf_energy, mrf_smooth, OUT_OF_FRAME_COST};
pub use stream::run_motion_stream;
pub use temporal::{associate_temporal, warp_forward, MIN_OVERLAP};
