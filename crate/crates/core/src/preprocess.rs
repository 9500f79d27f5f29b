//! Edge-preserving bilateral smoothing.
//!
//! Direct evaluation over a `(2r+1)^2` window; the range kernel uses the joint
//! RGB Euclidean distance so an edge in any channel is preserved.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Frame, FrameSequence, Rgb};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralParams {
    sigma_spatial: f64,
    sigma_range: f64,
    radius: usize,
}

impl BilateralParams {
    pub fn new(sigma_spatial: f64, sigma_range: f64, radius: usize) -> Result<Self> {
        if !(sigma_spatial > 0.0 && sigma_spatial.is_finite()) {
            return Err(Error::Contract(format!("sigma_spatial must be > 0, got {sigma_spatial}")));
        }
        if !(sigma_range > 0.0 && sigma_range.is_finite()) {
            return Err(Error::Contract(format!("sigma_range must be > 0, got {sigma_range}")));
        }
        if radius == 0 {
            return Err(Error::Contract("radius must be >= 1".into()));
        }
        Ok(Self {
            sigma_spatial,
            sigma_range,
            radius,
        })
    }

    pub fn sigma_spatial(&self) -> f64 {
        self.sigma_spatial
    }

    pub fn sigma_range(&self) -> f64 {
        self.sigma_range
    }

    pub fn radius(&self) -> usize {
        self.radius
    }
}

impl Default for BilateralParams {
    fn default() -> Self {
        Self {
            sigma_spatial: 3.0,
            sigma_range: 25.0,
            radius: 6,
        }
    }
}

pub fn bilateral_filter(frame: &Frame, params: &BilateralParams) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let r = params.radius as isize;
    let side = 2 * params.radius + 1;
    let inv_s = 1.0 / (2.0 * params.sigma_spatial * params.sigma_spatial);
    let inv_r = 1.0 / (2.0 * params.sigma_range * params.sigma_range);
    let spatial: Vec<f64> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (-((dx * dx + dy * dy) as f64) * inv_s).exp()))
        .collect();
    let src = frame.pixels();

    let pixels: Vec<Rgb> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let spatial = &spatial;
            (0..w).map(move |x| {
                let c = src[y * w + x];
                let mut acc = [0.0f64; 3];
                let mut norm = 0.0f64;
                let y0 = (y as isize - r).max(0) as usize;
                let y1 = (y as isize + r).min(h as isize - 1) as usize;
                let x0 = (x as isize - r).max(0) as usize;
                let x1 = (x as isize + r).min(w as isize - 1) as usize;
                for yy in y0..=y1 {
                    let ky = (yy as isize - y as isize + r) as usize * side;
                    for xx in x0..=x1 {
                        let q = src[yy * w + xx];
                        let d2: f64 = (0..3)
                            .map(|ch| {
                                let d = f64::from(q[ch]) - f64::from(c[ch]);
                                d * d
                            })
                            .sum();
                        let wgt = spatial[ky + (xx as isize - x as isize + r) as usize] * (-d2 * inv_r).exp();
                        norm += wgt;
                        for ch in 0..3 {
                            acc[ch] += wgt * f64::from(q[ch]);
                        }
                    }
                }
                // The centre weight is 1, so norm >= 1.
                let mut out = [0u8; 3];
                for ch in 0..3 {
                    out[ch] = (acc[ch] / norm).round().clamp(0.0, 255.0) as u8;
                }
                out
            })
        })
        .collect();
    Frame::new(w, h, pixels).expect("same dimensions as input")
}

pub fn bilateral_filter_sequence(seq: &FrameSequence, params: &BilateralParams) -> FrameSequence {
    let frames = seq.frames().par_iter().map(|f| bilateral_filter(f, params)).collect();
    FrameSequence::new(frames).expect("filtering preserves dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straightforward double loop over the clipped window.
    fn reference(frame: &Frame, ss: f64, sr: f64, r: i64) -> Frame {
        let (w, h) = (frame.width() as i64, frame.height() as i64);
        Frame::from_fn(frame.width(), frame.height(), |x, y| {
            let (x, y) = (x as i64, y as i64);
            let c = frame.get(x as usize, y as usize);
            let mut sum = [0.0; 3];
            let mut norm = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (qx, qy) = (x + dx, y + dy);
                    if qx < 0 || qy < 0 || qx >= w || qy >= h {
                        continue;
                    }
                    let q = frame.get(qx as usize, qy as usize);
                    let dr2: f64 = (0..3).map(|k| (q[k] as f64 - c[k] as f64).powi(2)).sum();
                    let ds2 = (dx * dx + dy * dy) as f64;
                    let wgt = (-ds2 / (2.0 * ss * ss)).exp() * (-dr2 / (2.0 * sr * sr)).exp();
                    norm += wgt;
                    for k in 0..3 {
                        sum[k] += wgt * q[k] as f64;
                    }
                }
            }
            [0, 1, 2].map(|k| (sum[k] / norm).round() as u8)
        })
        .unwrap()
    }

    #[test]
    fn constant_frame_unchanged() {
        let f = Frame::filled(9, 7, [12, 200, 77]).unwrap();
        assert_eq!(bilateral_filter(&f, &BilateralParams::default()), f);
    }

    #[test]
    fn tiny_range_sigma_keeps_isolated_pixel() {
        let f = Frame::from_fn(7, 7, |x, y| if (x, y) == (3, 3) { [255; 3] } else { [0; 3] }).unwrap();
        let p = BilateralParams::new(2.0, 0.01, 3).unwrap();
        assert_eq!(bilateral_filter(&f, &p), f);
    }

    #[test]
    fn step_edge_matches_reference() {
        let f = Frame::from_fn(8, 8, |x, y| {
            if x < 4 {
                [20 + (y as u8) * 3, 40, 60]
            } else {
                [180, 150 + x as u8, 90]
            }
        })
        .unwrap();
        let p = BilateralParams::new(2.0, 30.0, 4).unwrap();
        assert_eq!(bilateral_filter(&f, &p), reference(&f, 2.0, 30.0, 4));
    }

    #[test]
    fn output_within_window_bounds() {
        let mut s = 17u64;
        let f = Frame::from_fn(12, 10, |_, _| {
            s = crate::rng::mix(s);
            [s as u8, (s >> 8) as u8, (s >> 16) as u8]
        })
        .unwrap();
        let p = BilateralParams::new(1.5, 40.0, 2).unwrap();
        let out = bilateral_filter(&f, &p);
        assert_eq!(out, reference(&f, 1.5, 40.0, 2));
        for y in 0..10usize {
            for x in 0..12usize {
                for ch in 0..3 {
                    let mut lo = 255u8;
                    let mut hi = 0u8;
                    for yy in y.saturating_sub(2)..=(y + 2).min(9) {
                        for xx in x.saturating_sub(2)..=(x + 2).min(11) {
                            lo = lo.min(f.get(xx, yy)[ch]);
                            hi = hi.max(f.get(xx, yy)[ch]);
                        }
                    }
                    let v = out.get(x, y)[ch];
                    assert!(v >= lo && v <= hi, "({x},{y}) ch{ch}: {v} not in [{lo},{hi}]");
                }
            }
        }
    }

    #[test]
    fn far_from_edge_regions_unchanged() {
        let f = Frame::from_fn(30, 10, |x, _| if x < 15 { [50; 3] } else { [200; 3] }).unwrap();
        let p = BilateralParams::new(3.0, 25.0, 4).unwrap();
        let out = bilateral_filter(&f, &p);
        for y in 0..10 {
            for x in (0..10).chain(20..30) {
                assert_eq!(out.get(x, y), f.get(x, y));
            }
        }
    }

    #[test]
    fn rejects_non_positive_params() {
        assert!(BilateralParams::new(0.0, 1.0, 1).is_err());
        assert!(BilateralParams::new(1.0, -1.0, 1).is_err());
        assert!(BilateralParams::new(1.0, 1.0, 0).is_err());
    }
}
