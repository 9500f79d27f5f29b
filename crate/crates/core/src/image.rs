//! Frames, grayscale images, flow fields and label volumes.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// One RGB frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Contract(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Contract(format!(
                "frame {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|&p| f64::from(luma(p))).collect(),
        }
    }
}

/// `round(0.299 r + 0.587 g + 0.114 b)`.
pub fn luma(p: Rgb) -> u8 {
    let y = 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]);
    y.round().clamp(0.0, 255.0) as u8
}

/// An ordered, non-empty list of equally sized frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Contract("frame sequence must not be empty".into()))?;
        let (w, h) = (first.width, first.height);
        if let Some((t, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width != w || f.height != h)
        {
            return Err(Error::Format(format!(
                "frame {t} is {}x{}, expected {w}x{h}",
                f.width, f.height
            )));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn frame(&self, t: usize) -> &Frame {
        &self.frames[t]
    }
}

/// Single-channel real-valued image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "gray image buffer size");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height])
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample with coordinates clamped to the image.
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        self.bilinear(x, y)
    }

    /// Bilinear sample, `None` when `(x, y)` falls outside `[0, w-1] x [0, h-1]`.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64) {
            return None;
        }
        Some(self.bilinear(x, y))
    }

    fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bottom = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Per-pixel backward displacement: `current(x, y) ~ previous(x + u, y + v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Contract(format!(
                "flow dimensions must be positive, got {width}x{height}"
            )));
        }
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::Contract(format!(
                "flow {width}x{height} needs {} entries per component",
                width * height
            )));
        }
        if let Some(i) = u.iter().zip(&v).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite flow at pixel ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Self { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn uniform(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }
}

/// Integer labels over a `width x height x depth` voxel grid, frame-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    width: usize,
    height: usize,
    depth: usize,
    labels: Vec<u32>,
}

impl LabelVolume {
    pub fn new(width: usize, height: usize, depth: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || depth == 0 {
            return Err(Error::Contract(format!(
                "label volume dimensions must be positive, got {width}x{height}x{depth}"
            )));
        }
        if labels.len() != width * height * depth {
            return Err(Error::Contract(format!(
                "label volume {width}x{height}x{depth} needs {} labels, got {}",
                width * height * depth,
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            depth,
            labels,
        })
    }

    pub fn constant(width: usize, height: usize, depth: usize, label: u32) -> Result<Self> {
        Self::new(width, height, depth, vec![label; width * height * depth])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn frame_len(&self) -> usize {
        self.width * self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, t: usize) -> u32 {
        self.labels[(t * self.height + y) * self.width + x]
    }

    pub fn frame(&self, t: usize) -> &[u32] {
        let n = self.frame_len();
        &self.labels[t * n..(t + 1) * n]
    }

    pub fn same_shape(&self, other: &LabelVolume) -> bool {
        self.width == other.width && self.height == other.height && self.depth == other.depth
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Number of distinct labels.
    pub fn num_labels(&self) -> usize {
        let mut seen: Vec<u32> = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// True when the labels are exactly `0..=max`.
    pub fn is_dense(&self) -> bool {
        self.num_labels() == self.max_label() as usize + 1
    }

    /// Relabels to `0..n` in order of first appearance.
    pub fn compacted(&self) -> LabelVolume {
        let mut map: HashMap<u32, u32> = HashMap::new();
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                let next = map.len() as u32;
                *map.entry(l).or_insert(next)
            })
            .collect();
        LabelVolume {
            labels,
            ..*self
        }
    }

    /// Extracts frames `start..end` as a new volume.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<LabelVolume> {
        if start >= end || end > self.depth {
            return Err(Error::Contract(format!(
                "frame range {start}..{end} invalid for depth {}",
                self.depth
            )));
        }
        let n = self.frame_len();
        LabelVolume::new(
            self.width,
            self.height,
            end - start,
            self.labels[start * n..end * n].to_vec(),
        )
    }
}
