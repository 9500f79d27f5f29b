//! Dense backward optical flow by coarse-to-fine Horn–Schunck.
//!
//! For each pair the solver returns `(u, v)` with
//! `current(x, y) ~ previous(x + u, y + v)`. A Gaussian pyramid is processed
//! from the coarsest level; at each level the previous image is warped by the
//! current estimate `warp_steps` times and, per warp, `iters_per_level`
//! Jacobi fixed-point sweeps solve the linearised brightness-constancy plus
//! `alpha`-weighted smoothness system.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{FlowField, Frame, FrameSequence, GrayImage};
use crate::media_io::load_flow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub alpha: f64,
    pub pyramid_scale: f64,
    pub min_size: usize,
    pub iters_per_level: usize,
    pub warp_steps: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            alpha: 15.0,
            pyramid_scale: 0.5,
            min_size: 16,
            iters_per_level: 100,
            warp_steps: 3,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Contract(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::Contract(format!(
                "pyramid_scale must be in (0,1), got {}",
                self.pyramid_scale
            )));
        }
        if self.min_size == 0 || self.iters_per_level == 0 || self.warp_steps == 0 {
            return Err(Error::Contract(
                "min_size, iters_per_level and warp_steps must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// File name of the backward flow for frame `t` (pair `t -> t-1`).
pub fn flow_file_name(t: usize) -> String {
    format!("{t:05}.flo")
}

fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / sum).collect();
    let (w, h) = (img.width as isize, img.height as isize);
    let mut tmp = GrayImage::zeros(img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xx = (x + k as isize - r).clamp(0, w - 1);
                acc += kv * img.data[(y * w + xx) as usize];
            }
            tmp.data[(y * w + x) as usize] = acc;
        }
    }
    let mut out = GrayImage::zeros(img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let yy = (y + k as isize - r).clamp(0, h - 1);
                acc += kv * tmp.data[(yy * w + x) as usize];
            }
            out.data[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Pixel-centre aligned bilinear resize.
fn resize(img: &GrayImage, width: usize, height: usize) -> GrayImage {
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let mut out = GrayImage::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            let fy = (y as f64 + 0.5) * sy - 0.5;
            out.data[y * width + x] = img.sample_clamped(fx, fy);
        }
    }
    out
}

fn build_pyramid(base: GrayImage, params: &FlowParams) -> Vec<GrayImage> {
    let s = params.pyramid_scale;
    let sigma = 0.5 * (1.0 / (s * s) - 1.0).sqrt();
    let mut levels = vec![base];
    loop {
        let last = levels.last().expect("non-empty");
        let nw = (last.width as f64 * s).round() as usize;
        let nh = (last.height as f64 * s).round() as usize;
        if nw.min(nh) < params.min_size || nw == 0 || nh == 0 || (nw == last.width && nh == last.height) {
            break;
        }
        let next = resize(&gaussian_blur(last, sigma), nw, nh);
        levels.push(next);
    }
    levels
}

fn gradients(img: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width, img.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            let dx = (xp - xm).max(1) as f64;
            let dy = (yp - ym).max(1) as f64;
            gx[y * w + x] = (img.at(xp, y) - img.at(xm, y)) / dx;
            gy[y * w + x] = (img.at(x, yp) - img.at(x, ym)) / dy;
        }
    }
    (gx, gy)
}

/// Horn–Schunck neighbourhood average (1/6 edge, 1/12 corner neighbours),
/// replicated borders.
fn neighbour_average(field: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let edge = field[ym * w + x] + field[yp * w + x] + field[y * w + xm] + field[y * w + xp];
            let corner = field[ym * w + xm] + field[ym * w + xp] + field[yp * w + xm] + field[yp * w + xp];
            out[y * w + x] = edge / 6.0 + corner / 12.0;
        }
    }
}

fn refine_level(cur: &GrayImage, prev: &GrayImage, u: &mut [f64], v: &mut [f64], params: &FlowParams) {
    let (w, h) = (cur.width, cur.height);
    let alpha2 = params.alpha * params.alpha;
    let (cgx, cgy) = gradients(cur);
    let mut ubar = vec![0.0; w * h];
    let mut vbar = vec![0.0; w * h];
    for _ in 0..params.warp_steps {
        let mut warped = GrayImage::zeros(w, h);
        let mut inside = vec![true; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let sx = x as f64 + u[i];
                let sy = y as f64 + v[i];
                inside[i] = sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f64 && sy <= (h - 1) as f64;
                warped.data[i] = prev.sample_clamped(sx, sy);
            }
        }
        let (wgx, wgy) = gradients(&warped);
        let n = w * h;
        let mut ix = vec![0.0; n];
        let mut iy = vec![0.0; n];
        let mut it = vec![0.0; n];
        for i in 0..n {
            if inside[i] {
                ix[i] = 0.5 * (wgx[i] + cgx[i]);
                iy[i] = 0.5 * (wgy[i] + cgy[i]);
                it[i] = warped.data[i] - cur.data[i];
            }
        }
        let u0 = u.to_vec();
        let v0 = v.to_vec();
        for _ in 0..params.iters_per_level {
            neighbour_average(u, w, h, &mut ubar);
            neighbour_average(v, w, h, &mut vbar);
            for i in 0..n {
                let du = ubar[i] - u0[i];
                let dv = vbar[i] - v0[i];
                let r = (ix[i] * du + iy[i] * dv + it[i]) / (alpha2 + ix[i] * ix[i] + iy[i] * iy[i]);
                u[i] = ubar[i] - ix[i] * r;
                v[i] = vbar[i] - iy[i] * r;
            }
        }
    }
}

fn upsample_flow(field: &[f64], cw: usize, ch: usize, fw: usize, fh: usize, scale: f64) -> Vec<f64> {
    let img = GrayImage::new(cw, ch, field.iter().map(|&f| f * scale).collect());
    resize(&img, fw, fh).data
}

/// Backward flow from `current` to `previous`.
pub fn compute_backward_flow(current: &Frame, previous: &Frame, params: &FlowParams) -> Result<FlowField> {
    params.validate()?;
    if current.width() != previous.width() || current.height() != previous.height() {
        return Err(Error::Contract(format!(
            "flow frames differ in size: {}x{} vs {}x{}",
            current.width(),
            current.height(),
            previous.width(),
            previous.height()
        )));
    }
    let cur_pyr = build_pyramid(current.to_gray(), params);
    let prev_pyr = build_pyramid(previous.to_gray(), params);

    let coarsest = cur_pyr.len() - 1;
    let (mut lw, mut lh) = (cur_pyr[coarsest].width, cur_pyr[coarsest].height);
    let mut u = vec![0.0; lw * lh];
    let mut v = vec![0.0; lw * lh];
    for level in (0..=coarsest).rev() {
        let (cur, prev) = (&cur_pyr[level], &prev_pyr[level]);
        if cur.width != lw || cur.height != lh {
            let sx = cur.width as f64 / lw as f64;
            let sy = cur.height as f64 / lh as f64;
            u = upsample_flow(&u, lw, lh, cur.width, cur.height, sx);
            v = upsample_flow(&v, lw, lh, cur.width, cur.height, sy);
            lw = cur.width;
            lh = cur.height;
        }
        refine_level(cur, prev, &mut u, &mut v, params);
    }
    FlowField::new(
        lw,
        lh,
        u.iter().map(|&x| x as f32).collect(),
        v.iter().map(|&x| x as f32).collect(),
    )
}

/// One backward flow field per frame `t` in `1..len`. With `external_dir`,
/// fields are read from `external_dir/%05d.flo` (indexed by `t`) instead.
pub fn flow_for_sequence(
    seq: &FrameSequence,
    params: &FlowParams,
    external_dir: Option<&Path>,
) -> Result<Vec<FlowField>> {
    let t_range: Vec<usize> = (1..seq.len()).collect();
    match external_dir {
        Some(dir) => t_range
            .iter()
            .map(|&t| {
                let path = dir.join(flow_file_name(t));
                if !path.exists() {
                    return Err(Error::Missing(format!(
                        "external flow for pair ({t}, {}) not found at {}",
                        t - 1,
                        path.display()
                    )));
                }
                let flow = load_flow(&path)?;
                if flow.width() != seq.width() || flow.height() != seq.height() {
                    return Err(Error::Contract(format!(
                        "{} is {}x{}, frames are {}x{}",
                        path.display(),
                        flow.width(),
                        flow.height(),
                        seq.width(),
                        seq.height()
                    )));
                }
                Ok(flow)
            })
            .collect(),
        None => {
            params.validate()?;
            t_range
                .par_iter()
                .map(|&t| compute_backward_flow(seq.frame(t), seq.frame(t - 1), params))
                .collect()
        }
    }
}
