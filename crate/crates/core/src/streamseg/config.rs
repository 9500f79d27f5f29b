use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    /// Frames per streaming subsequence.
    pub subseq_len: usize,
    /// Hierarchy depth, including level 0.
    pub levels: usize,
    /// Level-0 grouping constant.
    pub k0: f64,
    /// Per-level multiplier: `k_l = k0 * k_growth^l`.
    pub k_growth: f64,
    /// Minimum level-0 region size in voxels.
    pub min_size: usize,
    pub color_bins: usize,
    pub flow_bins: usize,
    /// Flow components are clamped to `[-flow_range, flow_range]` before binning.
    pub flow_range: f64,
    pub use_flow_edges: bool,
    pub use_flow_feature: bool,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            subseq_len: 3,
            levels: 6,
            k0: 5.0,
            k_growth: 2.0,
            min_size: 10,
            color_bins: 8,
            flow_bins: 9,
            flow_range: 16.0,
            use_flow_edges: true,
            use_flow_feature: true,
        }
    }
}

impl StreamConfig {
    /// Color-only configuration: grid temporal edges, no flow feature.
    pub fn color_only() -> Self {
        Self {
            use_flow_edges: false,
            use_flow_feature: false,
            ..Self::default()
        }
    }

    pub fn k_at(&self, level: usize) -> f64 {
        self.k0 * self.k_growth.powi(level as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(m));
        if self.subseq_len == 0 {
            return fail("subseq_len must be >= 1".into());
        }
        if self.levels == 0 {
            return fail("levels must be >= 1".into());
        }
        if !(self.k0 > 0.0 && self.k0.is_finite()) {
            return fail(format!("k0 must be > 0, got {}", self.k0));
        }
        if !(self.k_growth > 1.0) {
            return fail(format!("k_growth must be > 1, got {}", self.k_growth));
        }
        if self.min_size == 0 {
            return fail("min_size must be >= 1".into());
        }
        if self.color_bins < 2 || self.color_bins > 256 || self.flow_bins < 2 {
            return fail("color_bins must be in [2, 256] and flow_bins >= 2".into());
        }
        if !(self.flow_range > 0.0 && self.flow_range.is_finite()) {
            return fail(format!("flow_range must be > 0, got {}", self.flow_range));
        }
        Ok(())
    }
}
