//! Synthetic videos with exact ground-truth labels and backward flow.
//!
//! Every layer (background and each object) carries a constant affine
//! backward-flow model `w`. A pixel `p` of frame `t` came from `p + w(p)` in
//! frame `t-1`, so the layer's reference coordinates of `p` are
//! `M^t(p)` with `M(p) = p + w(p)`. Shapes and textures are defined in those
//! reference coordinates, which makes the rendered frames, labels and flow
//! mutually exact.
//!
//! Scene files are flat `key = value` text:
//!
//! ```text
//! width = 64
//! height = 64
//! frames = 10
//! seed = 7
//! noise_sigma = 2
//! texture_amplitude = 40
//! texture_scale = 6
//! # static <r> <g> <b> <texture-seed>
//! # pan    <r> <g> <b> <texture-seed> <a1> .. <a6>
//! background = pan 110 120 100 1 0.5 0 0 0 0 0
//! # rect    <cx> <cy> <half-w> <half-h> <r> <g> <b> <texture-seed> <a1> .. <a6>
//! # ellipse <cx> <cy> <rx> <ry>         <r> <g> <b> <texture-seed> <a1> .. <a6>
//! object = rect 20 30 8 6 200 60 40 2 -1 0 0 0 0 0
//! ```

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{FlowField, Frame, FrameSequence, LabelVolume, Rgb};
use crate::motionlayers::AffineModel;
use crate::rng::{mix, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Rect { cx: f64, cy: f64, half_w: f64, half_h: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { cx, cy, half_w, half_h } => (x - cx).abs() <= half_w && (y - cy).abs() <= half_h,
            Shape::Ellipse { cx, cy, rx, ry } => {
                let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
                dx * dx + dy * dy <= 1.0
            }
        }
    }

    fn outline(&self) -> Vec<(f64, f64)> {
        match *self {
            Shape::Rect { cx, cy, half_w, half_h } => vec![
                (cx - half_w, cy - half_h),
                (cx + half_w, cy - half_h),
                (cx + half_w, cy + half_h),
                (cx - half_w, cy + half_h),
            ],
            Shape::Ellipse { cx, cy, rx, ry } => (0..72)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::TAU / 72.0;
                    (cx + rx * a.cos(), cy + ry * a.sin())
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub base: Rgb,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Background {
    Static(Texture),
    Pan(Texture, AffineModel),
}

impl Background {
    fn texture(&self) -> Texture {
        match *self {
            Background::Static(t) | Background::Pan(t, _) => t,
        }
    }

    fn motion(&self) -> AffineModel {
        match *self {
            Background::Static(_) => AffineModel::ZERO,
            Background::Pan(_, m) => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub shape: Shape,
    pub texture: Texture,
    /// Backward flow model applied on every frame pair.
    pub motion: AffineModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    pub background: Background,
    pub objects: Vec<SceneObject>,
    /// Standard deviation of additive Gaussian pixel noise, gray levels.
    pub noise_sigma: f64,
    /// Peak amplitude of the value-noise texture, gray levels.
    pub texture_amplitude: f64,
    /// Lattice spacing of the coarse texture octave, pixels.
    pub texture_scale: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, num_frames: usize, background: Background) -> Self {
        Self {
            width,
            height,
            num_frames,
            background,
            objects: Vec::new(),
            noise_sigma: 0.0,
            texture_amplitude: 40.0,
            texture_scale: 6.0,
            seed: 0,
        }
    }

    pub fn with_object(mut self, object: SceneObject) -> Self {
        self.objects.push(object);
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut width = None;
        let mut height = None;
        let mut frames = None;
        let mut background = None;
        let mut spec_objects = Vec::new();
        let mut seed = 0u64;
        let mut noise = 0.0;
        let mut amplitude = 40.0;
        let mut scale = 6.0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| Error::Spec(format!("line {}: {m}", lineno + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected 'key = value'"))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(&format!("bad number '{v}'")));
            let int = |v: &str| v.parse::<usize>().map_err(|_| err(&format!("bad integer '{v}'")));
            match key {
                "width" => width = Some(int(value)?),
                "height" => height = Some(int(value)?),
                "frames" => frames = Some(int(value)?),
                "seed" => seed = value.parse().map_err(|_| err("bad seed"))?,
                "noise_sigma" => noise = num(value)?,
                "texture_amplitude" => amplitude = num(value)?,
                "texture_scale" => scale = num(value)?,
                "background" | "object" => {
                    let toks: Vec<&str> = value.split_whitespace().collect();
                    let nums = toks[1..].iter().map(|t| num(t)).collect::<Result<Vec<f64>>>()?;
                    let color = |n: &[f64]| -> Result<Rgb> {
                        let c = |v: f64| {
                            if (0.0..=255.0).contains(&v) {
                                Ok(v as u8)
                            } else {
                                Err(err("color channel out of range"))
                            }
                        };
                        Ok([c(n[0])?, c(n[1])?, c(n[2])?])
                    };
                    let model = |n: &[f64]| AffineModel::new(n[0], n[1], n[2], n[3], n[4], n[5]);
                    if key == "background" {
                        background = Some(match (toks.first().copied(), nums.len()) {
                            (Some("static"), 4) => Background::Static(Texture {
                                base: color(&nums)?,
                                seed: nums[3] as u64,
                            }),
                            (Some("pan"), 10) => Background::Pan(
                                Texture {
                                    base: color(&nums)?,
                                    seed: nums[3] as u64,
                                },
                                model(&nums[4..]),
                            ),
                            _ => return Err(err("background must be 'static r g b seed' or 'pan r g b seed a1..a6'")),
                        });
                    } else {
                        if nums.len() != 14 {
                            return Err(err("object needs shape, 4 geometry values, r g b, seed, a1..a6"));
                        }
                        let shape = match toks[0] {
                            "rect" => Shape::Rect {
                                cx: nums[0],
                                cy: nums[1],
                                half_w: nums[2],
                                half_h: nums[3],
                            },
                            "ellipse" => Shape::Ellipse {
                                cx: nums[0],
                                cy: nums[1],
                                rx: nums[2],
                                ry: nums[3],
                            },
                            other => return Err(err(&format!("unknown shape '{other}'"))),
                        };
                        spec_objects.push(SceneObject {
                            shape,
                            texture: Texture {
                                base: color(&nums[4..7])?,
                                seed: nums[7] as u64,
                            },
                            motion: model(&nums[8..]),
                        });
                    }
                }
                other => return Err(err(&format!("unknown key '{other}'"))),
            }
        }
        let missing = |k: &str| Error::Spec(format!("missing required key '{k}'"));
        Ok(Self {
            width: width.ok_or_else(|| missing("width"))?,
            height: height.ok_or_else(|| missing("height"))?,
            num_frames: frames.ok_or_else(|| missing("frames"))?,
            background: background.ok_or_else(|| missing("background"))?,
            objects: spec_objects,
            noise_sigma: noise,
            texture_amplitude: amplitude,
            texture_scale: scale,
            seed,
        })
    }

    pub fn to_text(&self) -> String {
        let model = |m: &AffineModel| m.a.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ");
        let mut s = format!(
            "width = {}\nheight = {}\nframes = {}\nseed = {}\nnoise_sigma = {}\ntexture_amplitude = {}\ntexture_scale = {}\n",
            self.width, self.height, self.num_frames, self.seed, self.noise_sigma, self.texture_amplitude, self.texture_scale
        );
        match self.background {
            Background::Static(t) => s += &format!(
                "background = static {} {} {} {}\n",
                t.base[0], t.base[1], t.base[2], t.seed
            ),
            Background::Pan(t, m) => s += &format!(
                "background = pan {} {} {} {} {}\n",
                t.base[0],
                t.base[1],
                t.base[2],
                t.seed,
                model(&m)
            ),
        }
        for o in &self.objects {
            let (kind, g) = match o.shape {
                Shape::Rect { cx, cy, half_w, half_h } => ("rect", [cx, cy, half_w, half_h]),
                Shape::Ellipse { cx, cy, rx, ry } => ("ellipse", [cx, cy, rx, ry]),
            };
            s += &format!(
                "object = {kind} {} {} {} {} {} {} {} {} {}\n",
                g[0],
                g[1],
                g[2],
                g[3],
                o.texture.base[0],
                o.texture.base[1],
                o.texture.base[2],
                o.texture.seed,
                model(&o.motion)
            );
        }
        s
    }
}

/// Affine point map `p -> A p + b`.
#[derive(Debug, Clone, Copy)]
struct PointMap {
    a: [f64; 4],
    b: [f64; 2],
}

impl PointMap {
    const IDENTITY: PointMap = PointMap {
        a: [1.0, 0.0, 0.0, 1.0],
        b: [0.0, 0.0],
    };

    fn from_model(m: &AffineModel) -> Self {
        let (a, b) = m.point_map();
        Self { a, b }
    }

    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a[0] * x + self.a[1] * y + self.b[0],
            self.a[2] * x + self.a[3] * y + self.b[1],
        )
    }

    /// `self ∘ other`.
    fn after(&self, other: &PointMap) -> PointMap {
        let (s, o) = (&self.a, &other.a);
        PointMap {
            a: [
                s[0] * o[0] + s[1] * o[2],
                s[0] * o[1] + s[1] * o[3],
                s[2] * o[0] + s[3] * o[2],
                s[2] * o[1] + s[3] * o[3],
            ],
            b: [
                s[0] * other.b[0] + s[1] * other.b[1] + self.b[0],
                s[2] * other.b[0] + s[3] * other.b[1] + self.b[1],
            ],
        }
    }

    fn inverse(&self) -> Option<PointMap> {
        let a = &self.a;
        let det = a[0] * a[3] - a[1] * a[2];
        if det.abs() < 1e-9 {
            return None;
        }
        let inv = [a[3] / det, -a[1] / det, -a[2] / det, a[0] / det];
        Some(PointMap {
            a: inv,
            b: [
                -(inv[0] * self.b[0] + inv[1] * self.b[1]),
                -(inv[2] * self.b[0] + inv[3] * self.b[1]),
            ],
        })
    }
}

/// Reference-coordinate maps `M^t` for `t in 0..frames`.
fn reference_maps(model: &AffineModel, frames: usize) -> Vec<PointMap> {
    let step = PointMap::from_model(model);
    let mut maps = vec![PointMap::IDENTITY];
    for t in 1..frames {
        maps.push(maps[t - 1].after(&step));
    }
    maps
}

fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    let h = mix(seed ^ mix((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (j as u64).rotate_left(29)));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, x: f64, y: f64, spacing: f64) -> f64 {
    let (gx, gy) = (x / spacing, y / spacing);
    let (i, j) = (gx.floor(), gy.floor());
    let (fx, fy) = (smooth(gx - i), smooth(gy - j));
    let (i, j) = (i as i64, j as i64);
    let top = lattice(seed, i, j) * (1.0 - fx) + lattice(seed, i + 1, j) * fx;
    let bottom = lattice(seed, i, j + 1) * (1.0 - fx) + lattice(seed, i + 1, j + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Two-octave value noise in `[-1, 1]`.
fn texture_value(seed: u64, x: f64, y: f64, spacing: f64) -> f64 {
    0.65 * value_noise(seed, x, y, spacing) + 0.35 * value_noise(mix(seed ^ 0xA5A5), x, y, spacing * 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub frames: FrameSequence,
    pub gt_labels: LabelVolume,
    /// Backward flow of frames `1..num_frames`.
    pub gt_flows: Vec<FlowField>,
}

fn validate(spec: &SceneSpec, object_maps: &[Vec<PointMap>]) -> Result<()> {
    if spec.width < 3 || spec.height < 3 || spec.num_frames == 0 {
        return Err(Error::Spec(format!(
            "scene must be at least 3x3 with one frame, got {}x{}x{}",
            spec.width, spec.height, spec.num_frames
        )));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::Spec(format!("noise_sigma must be >= 0, got {}", spec.noise_sigma)));
    }
    if !(spec.texture_scale > 0.0) {
        return Err(Error::Spec("texture_scale must be > 0".into()));
    }
    let models = std::iter::once(spec.background.motion()).chain(spec.objects.iter().map(|o| o.motion));
    if models.clone().any(|m| !m.is_finite()) {
        return Err(Error::Spec("motion parameters must be finite".into()));
    }
    let (xmax, ymax) = ((spec.width - 2) as f64, (spec.height - 2) as f64);
    for (k, (obj, maps)) in spec.objects.iter().zip(object_maps).enumerate() {
        for (t, map) in maps.iter().enumerate() {
            let inv = map
                .inverse()
                .ok_or_else(|| Error::Spec(format!("object {} motion is singular at frame {t}", k + 1)))?;
            for (px, py) in obj.shape.outline() {
                let (x, y) = inv.apply(px, py);
                if !(x >= 1.0 && y >= 1.0 && x <= xmax && y <= ymax) {
                    return Err(Error::Spec(format!(
                        "object {} leaves the frame interior at frame {t} (outline point at ({x:.2}, {y:.2}))",
                        k + 1
                    )));
                }
            }
        }
    }
    Ok(())
}

pub fn generate(spec: &SceneSpec) -> Result<SynthOutput> {
    let object_maps: Vec<Vec<PointMap>> = spec
        .objects
        .iter()
        .map(|o| reference_maps(&o.motion, spec.num_frames))
        .collect();
    validate(spec, &object_maps)?;
    let bg_maps = reference_maps(&spec.background.motion(), spec.num_frames);
    let (w, h) = (spec.width, spec.height);

    let rendered: Vec<(Frame, Vec<u32>, Option<FlowField>)> = (0..spec.num_frames)
        .into_par_iter()
        .map(|t| {
            let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("sigma >= 0");
            let mut rng = SplitMix64::derive(spec.seed, t as u64);
            let mut pixels = Vec::with_capacity(w * h);
            let mut labels = Vec::with_capacity(w * h);
            let mut u = Vec::with_capacity(w * h);
            let mut v = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let (px, py) = (x as f64, y as f64);
                    let owner = spec
                        .objects
                        .iter()
                        .enumerate()
                        .rev()
                        .find(|(k, o)| {
                            let (rx, ry) = object_maps[*k][t].apply(px, py);
                            o.shape.contains(rx, ry)
                        })
                        .map(|(k, _)| k);
                    let (texture, map, motion, label) = match owner {
                        Some(k) => {
                            let o = &spec.objects[k];
                            (o.texture, &object_maps[k][t], o.motion, k as u32 + 1)
                        }
                        None => (spec.background.texture(), &bg_maps[t], spec.background.motion(), 0),
                    };
                    let (rx, ry) = map.apply(px, py);
                    let n = spec.texture_amplitude * texture_value(texture.seed, rx, ry, spec.texture_scale);
                    let grain = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    let c = texture.base.map(|b| (f64::from(b) + n + grain).round().clamp(0.0, 255.0) as u8);
                    pixels.push(c);
                    labels.push(label);
                    let (fu, fv) = motion.flow_at(px, py);
                    u.push(fu as f32);
                    v.push(fv as f32);
                }
            }
            let frame = Frame::new(w, h, pixels).expect("dims");
            let flow = (t > 0).then(|| FlowField::new(w, h, u, v).expect("finite flow"));
            (frame, labels, flow)
        })
        .collect();

    let mut frames = Vec::with_capacity(spec.num_frames);
    let mut labels = Vec::with_capacity(spec.num_frames * w * h);
    let mut flows = Vec::with_capacity(spec.num_frames.saturating_sub(1));
    for (f, l, fl) in rendered {
        frames.push(f);
        labels.extend(l);
        flows.extend(fl);
    }
    Ok(SynthOutput {
        frames: FrameSequence::new(frames)?,
        gt_labels: LabelVolume::new(w, h, spec.num_frames, labels)?,
        gt_flows: flows,
    })
}

/// Ready-made scenes used by tests and examples.
pub mod presets {
    use super::*;

    fn tex(base: Rgb, seed: u64) -> Texture {
        Texture { base, seed }
    }

    /// Two static textured objects on a static background.
    pub fn static_two_objects(width: usize, height: usize, frames: usize, seed: u64) -> SceneSpec {
        let (w, h) = (width as f64, height as f64);
        let mut spec = SceneSpec::new(width, height, frames, Background::Static(tex([60, 140, 70], seed ^ 1)))
            .with_object(SceneObject {
                shape: Shape::Rect {
                    cx: w * 0.3,
                    cy: h * 0.5,
                    half_w: w * 0.14,
                    half_h: h * 0.22,
                },
                texture: tex([210, 60, 50], seed ^ 2),
                motion: AffineModel::ZERO,
            })
            .with_object(SceneObject {
                shape: Shape::Ellipse {
                    cx: w * 0.7,
                    cy: h * 0.5,
                    rx: w * 0.15,
                    ry: h * 0.2,
                },
                texture: tex([50, 70, 220], seed ^ 3),
                motion: AffineModel::ZERO,
            });
        spec.seed = seed;
        spec
    }

    /// Panning background plus two objects with distinct affine motions.
    pub fn pan_two_objects(width: usize, height: usize, frames: usize, seed: u64) -> SceneSpec {
        let (w, h) = (width as f64, height as f64);
        let mut spec = SceneSpec::new(
            width,
            height,
            frames,
            Background::Pan(tex([110, 120, 100], seed ^ 1), AffineModel::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)),
        )
        .with_object(SceneObject {
            shape: Shape::Rect {
                cx: w * 0.3,
                cy: h * 0.35,
                half_w: w * 0.13,
                half_h: h * 0.13,
            },
            texture: tex([200, 70, 60], seed ^ 2),
            motion: AffineModel::new(-1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        })
        .with_object(SceneObject {
            shape: Shape::Ellipse {
                cx: w * 0.68,
                cy: h * 0.65,
                rx: w * 0.14,
                ry: h * 0.14,
            },
            texture: tex([70, 80, 210], seed ^ 3),
            motion: AffineModel::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0),
        });
        spec.seed = seed;
        spec
    }

    /// Random scene: static or panning background and one to three moving
    /// objects with small translations, placed so they stay inside the frame.
    pub fn random_moving(width: usize, height: usize, frames: usize, seed: u64) -> SceneSpec {
        let mut rng = SplitMix64::new(mix(seed ^ 0x5EED));
        let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng.unit_f64();
        let (w, h) = (width as f64, height as f64);
        let t = frames.saturating_sub(1) as f64;
        let background = if uniform(0.0, 1.0) < 0.5 {
            Background::Static(tex([uniform(40.0, 200.0) as u8, uniform(40.0, 200.0) as u8, uniform(40.0, 200.0) as u8], seed ^ 11))
        } else {
            Background::Pan(
                tex([uniform(40.0, 200.0) as u8, uniform(40.0, 200.0) as u8, uniform(40.0, 200.0) as u8], seed ^ 11),
                AffineModel::translation(uniform(-1.0, 1.0), uniform(-1.0, 1.0)),
            )
        };
        let mut spec = SceneSpec::new(width, height, frames, background);
        let count = 1 + (uniform(0.0, 3.0) as usize).min(2);
        for k in 0..count {
            let (du, dv) = (uniform(-1.5, 1.5), uniform(-1.5, 1.5));
            let (rx, ry) = (uniform(0.1, 0.18) * w, uniform(0.1, 0.18) * h);
            // Reference position must stay inside after t steps of -d drift.
            let margin_x = rx + 2.0 + du.abs() * t;
            let margin_y = ry + 2.0 + dv.abs() * t;
            let cx = uniform(margin_x.min(w / 2.0), (w - margin_x).max(w / 2.0));
            let cy = uniform(margin_y.min(h / 2.0), (h - margin_y).max(h / 2.0));
            let shape = if k % 2 == 0 {
                Shape::Rect {
                    cx,
                    cy,
                    half_w: rx,
                    half_h: ry,
                }
            } else {
                Shape::Ellipse { cx, cy, rx, ry }
            };
            spec.objects.push(SceneObject {
                shape,
                texture: tex(
                    [uniform(20.0, 235.0) as u8, uniform(20.0, 235.0) as u8, uniform(20.0, 235.0) as u8],
                    seed ^ (20 + k as u64),
                ),
                motion: AffineModel::translation(du, dv),
            });
        }
        spec.noise_sigma = 4.0;
        spec.seed = seed;
        spec
    }
}
