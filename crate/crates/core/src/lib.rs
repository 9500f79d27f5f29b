//! Streaming hierarchical video segmentation.
//!
//! The crate is organised bottom-up:
//!
//! - [`image`] and [`media_io`]: frames, flow fields, label volumes and their
//!   on-disk formats (PPM, 16-bit PGM, Middlebury `.flo`).
//! - [`preprocess`]: edge-preserving bilateral smoothing.
//! - [`optflow`]: coarse-to-fine Horn–Schunck backward flow.
//! - [`streamseg`]: flow-guided spatio-temporal graph grouping, region
//!   features, hierarchy construction and the streaming window driver.
//! - [`motionlayers`]: per-region affine motion, directed-divergence merging,
//!   alpha-expansion smoothing and temporal association of motion layers.
//! - [`metrics`]: supervoxel benchmark metrics.
//! - [`synth`]: synthetic scenes with exact ground-truth labels and flow.
//! - [`pipeline`]: end-to-end drivers chaining the stages above.

pub mod error;
pub mod image;
pub mod media_io;
pub mod metrics;
pub mod motionlayers;
pub mod optflow;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod streamseg;
pub mod synth;

pub use error::{Error, Result};
pub use image::{FlowField, Frame, FrameSequence, GrayImage, LabelVolume};
