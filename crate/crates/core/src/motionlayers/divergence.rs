//! Canonical-frame warps and the directed divergence between region models.

use crate::image::GrayImage;

use super::affine::AffineModel;

/// A region of one frame with its fitted motion.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionRegion {
    pub id: u32,
    pub pixels: Vec<(u32, u32)>,
    pub model: AffineModel,
}

impl MotionRegion {
    pub fn n(&self) -> usize {
        self.pixels.len()
    }
}

/// Fixed-size resampling of a warped region.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalPatch {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl CanonicalPatch {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Resamples `frame` over the region's pixels displaced by `transform`.
///
/// The bounding box of the displaced pixel positions is mapped onto a
/// `p x q` grid; each cell samples `frame` bilinearly at its displaced-space
/// position. A cell is valid when that position lies in the frame and its
/// preimage under the displacement rounds to a region pixel.
pub fn warp_to_canonical(
    frame: &GrayImage,
    region: &MotionRegion,
    transform: &AffineModel,
    p: usize,
    q: usize,
) -> CanonicalPatch {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    let (mut rx0, mut ry0, mut rx1, mut ry1) = (u32::MAX, u32::MAX, 0u32, 0u32);
    for &(x, y) in &region.pixels {
        let (dx, dy) = transform.displace(f64::from(x), f64::from(y));
        x0 = x0.min(dx);
        y0 = y0.min(dy);
        x1 = x1.max(dx);
        y1 = y1.max(dy);
        rx0 = rx0.min(x);
        ry0 = ry0.min(y);
        rx1 = rx1.max(x);
        ry1 = ry1.max(y);
    }
    let (bw, bh) = ((rx1 - rx0 + 1) as usize, (ry1 - ry0 + 1) as usize);
    let mut member = vec![false; bw * bh];
    for &(x, y) in &region.pixels {
        member[(y - ry0) as usize * bw + (x - rx0) as usize] = true;
    }
    let inside_region = |x: f64, y: f64| {
        let (xr, yr) = (x.round(), y.round());
        if xr < f64::from(rx0) || yr < f64::from(ry0) || xr > f64::from(rx1) || yr > f64::from(ry1) {
            return false;
        }
        member[(yr as u32 - ry0) as usize * bw + (xr as u32 - rx0) as usize]
    };

    let ext_x = (x1 - x0).max(0.0) + 1.0;
    let ext_y = (y1 - y0).max(0.0) + 1.0;
    let (pm, off) = transform.point_map();
    let det = pm[0] * pm[3] - pm[1] * pm[2];
    let inverse = (det.abs() > 1e-9).then(|| [pm[3] / det, -pm[1] / det, -pm[2] / det, pm[0] / det]);

    let mut values = vec![0.0; p * q];
    let mut valid = vec![false; p * q];
    for j in 0..q {
        let sy = y0 - 0.5 + (j as f64 + 0.5) * ext_y / q as f64;
        for i in 0..p {
            let sx = x0 - 0.5 + (i as f64 + 0.5) * ext_x / p as f64;
            let Some(val) = frame.sample(sx, sy) else { continue };
            let in_footprint = match inverse {
                Some(inv) => {
                    let (tx, ty) = (sx - off[0], sy - off[1]);
                    inside_region(inv[0] * tx + inv[1] * ty, inv[2] * tx + inv[3] * ty)
                }
                None => true,
            };
            if in_footprint {
                values[j * p + i] = val;
                valid[j * p + i] = true;
            }
        }
    }
    CanonicalPatch {
        width: p,
        height: q,
        values,
        valid,
    }
}

/// How the canonical difference is normalised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceNorm {
    /// Mean absolute difference over jointly valid cells plus
    /// `kappa * (1 - joint / union)` for footprint disagreement.
    MeanOverValid { kappa: f64 },
    /// Sum of absolute differences over jointly valid cells divided by the
    /// region's pixel count.
    Literal,
}

impl Default for DivergenceNorm {
    fn default() -> Self {
        DivergenceNorm::MeanOverValid { kappa: 64.0 }
    }
}

/// Canonical grid size and normalisation used by divergences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceParams {
    pub p: usize,
    pub q: usize,
    pub norm: DivergenceNorm,
}

impl Default for DivergenceParams {
    fn default() -> Self {
        Self {
            p: 64,
            q: 64,
            norm: DivergenceNorm::default(),
        }
    }
}

pub(crate) fn patch_divergence(a: &CanonicalPatch, b: &CanonicalPatch, n: usize, norm: DivergenceNorm) -> f64 {
    let mut sum = 0.0;
    let mut joint = 0usize;
    let mut union = 0usize;
    for k in 0..a.values.len() {
        match (a.valid[k], b.valid[k]) {
            (true, true) => {
                sum += (a.values[k] - b.values[k]).abs();
                joint += 1;
                union += 1;
            }
            (false, false) => {}
            _ => union += 1,
        }
    }
    if joint == 0 {
        return f64::MAX;
    }
    match norm {
        DivergenceNorm::MeanOverValid { kappa } => {
            sum / joint as f64 + kappa * (1.0 - joint as f64 / union as f64)
        }
        DivergenceNorm::Literal => sum / n as f64,
    }
}

/// How badly `k`'s model explains region `i` relative to `i`'s own model,
/// measured on `frame` (the frame the backward flow points into).
/// `f64::MAX` when the two warps share no valid cell.
pub fn directed_divergence(i: &MotionRegion, k: &MotionRegion, frame: &GrayImage, params: &DivergenceParams) -> f64 {
    if i.model == k.model {
        return 0.0;
    }
    let a = warp_to_canonical(frame, i, &i.model, params.p, params.q);
    let b = warp_to_canonical(frame, i, &k.model, params.p, params.q);
    patch_divergence(&a, &b, i.n(), params.norm)
}

/// Symmetric distance: the larger of the two directed divergences.
pub fn region_distance(i: &MotionRegion, k: &MotionRegion, frame: &GrayImage, params: &DivergenceParams) -> f64 {
    directed_divergence(i, k, frame, params).max(directed_divergence(k, i, frame, params))
}
