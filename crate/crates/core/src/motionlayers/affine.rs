//! Six-parameter affine flow and its robust estimation from a dense field.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::image::FlowField;
use crate::rng::SplitMix64;

/// `u(x, y) = a1 + a2 x + a3 y`, `v(x, y) = a4 + a5 x + a6 y`, pixel
/// coordinates relative to the frame origin. Describes backward flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineModel {
    pub a: [f64; 6],
}

impl AffineModel {
    pub const ZERO: AffineModel = AffineModel { a: [0.0; 6] };

    pub fn new(a1: f64, a2: f64, a3: f64, a4: f64, a5: f64, a6: f64) -> Self {
        Self {
            a: [a1, a2, a3, a4, a5, a6],
        }
    }

    pub fn translation(u: f64, v: f64) -> Self {
        Self::new(u, 0.0, 0.0, v, 0.0, 0.0)
    }

    #[inline]
    pub fn flow_at(&self, x: f64, y: f64) -> (f64, f64) {
        let a = &self.a;
        (a[0] + a[1] * x + a[2] * y, a[3] + a[4] * x + a[5] * y)
    }

    /// `(x, y) + flow(x, y)`.
    #[inline]
    pub fn displace(&self, x: f64, y: f64) -> (f64, f64) {
        let (u, v) = self.flow_at(x, y);
        (x + u, y + v)
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|v| v.is_finite())
    }

    /// The point map `p -> p + flow(p)` as `(A, b)` with `A` row-major 2x2.
    pub fn point_map(&self) -> ([f64; 4], [f64; 2]) {
        let a = &self.a;
        ([1.0 + a[1], a[2], a[4], 1.0 + a[5]], [a[0], a[3]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Inlier threshold on the flow residual norm, pixels.
    pub inlier_tol: f64,
    pub iterations: usize,
    /// Regions smaller than this get a translation-only model.
    pub min_pixels: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_tol: 0.5,
            iterations: 200,
            min_pixels: 12,
        }
    }
}

struct Sample {
    x: f64,
    y: f64,
    u: f64,
    v: f64,
}

/// Least-squares affine fit in coordinates centred on the sample mean.
fn least_squares(samples: &[Sample], idx: impl Iterator<Item = usize> + Clone) -> Option<AffineModel> {
    let n = idx.clone().count();
    if n < 3 {
        return None;
    }
    let (mut mx, mut my) = (0.0, 0.0);
    for i in idx.clone() {
        mx += samples[i].x;
        my += samples[i].y;
    }
    mx /= n as f64;
    my /= n as f64;
    let mut ata = Matrix3::<f64>::zeros();
    let mut atu = Vector3::<f64>::zeros();
    let mut atv = Vector3::<f64>::zeros();
    for i in idx {
        let s = &samples[i];
        let row = Vector3::new(1.0, s.x - mx, s.y - my);
        ata += row * row.transpose();
        atu += row * s.u;
        atv += row * s.v;
    }
    let chol = ata.cholesky()?;
    let pu = chol.solve(&atu);
    let pv = chol.solve(&atv);
    // Undo the centring: a1 = c0 - c1*mx - c2*my.
    let model = AffineModel::new(
        pu[0] - pu[1] * mx - pu[2] * my,
        pu[1],
        pu[2],
        pv[0] - pv[1] * mx - pv[2] * my,
        pv[1],
        pv[2],
    );
    model.is_finite().then_some(model)
}

/// Exact fit through three points; `None` when they are (near) collinear.
fn exact_three(p: [&Sample; 3]) -> Option<AffineModel> {
    let m = Matrix3::new(
        1.0, p[0].x, p[0].y, //
        1.0, p[1].x, p[1].y, //
        1.0, p[2].x, p[2].y,
    );
    // Twice the triangle area; below half a pixel^2 the solve is unreliable.
    if m.determinant().abs() < 0.5 {
        return None;
    }
    let inv = m.try_inverse()?;
    let pu = inv * Vector3::new(p[0].u, p[1].u, p[2].u);
    let pv = inv * Vector3::new(p[0].v, p[1].v, p[2].v);
    Some(AffineModel::new(pu[0], pu[1], pu[2], pv[0], pv[1], pv[2]))
}

fn mean_translation(samples: &[Sample]) -> AffineModel {
    let n = samples.len() as f64;
    let u = samples.iter().map(|s| s.u).sum::<f64>() / n;
    let v = samples.iter().map(|s| s.v).sum::<f64>() / n;
    AffineModel::translation(u, v)
}

/// RANSAC affine fit of `flow` over `region` pixels.
pub fn fit_affine_ransac(
    region: &[(u32, u32)],
    flow: &FlowField,
    seed: u64,
    params: &RansacParams,
) -> Result<AffineModel> {
    if region.is_empty() {
        return Err(Error::Contract("cannot fit a motion model to an empty region".into()));
    }
    let samples: Vec<Sample> = region
        .iter()
        .map(|&(x, y)| {
            let (u, v) = flow.at(x as usize, y as usize);
            Sample {
                x: f64::from(x),
                y: f64::from(y),
                u: f64::from(u),
                v: f64::from(v),
            }
        })
        .collect();
    if samples.len() < params.min_pixels.max(3) {
        return Ok(mean_translation(&samples));
    }

    let tol2 = params.inlier_tol * params.inlier_tol;
    let residual_ok = |m: &AffineModel, s: &Sample| {
        let (mu, mv) = m.flow_at(s.x, s.y);
        let (du, dv) = (mu - s.u, mv - s.v);
        du * du + dv * dv <= tol2
    };
    let n = samples.len() as u64;
    let mut rng = SplitMix64::new(seed);
    let mut best: Option<(usize, AffineModel)> = None;
    for _ in 0..params.iterations {
        let i = rng.below(n) as usize;
        let mut j = rng.below(n - 1) as usize;
        if j >= i {
            j += 1;
        }
        let mut k = rng.below(n - 2) as usize;
        let (lo, hi) = (i.min(j), i.max(j));
        if k >= lo {
            k += 1;
        }
        if k >= hi {
            k += 1;
        }
        let Some(model) = exact_three([&samples[i], &samples[j], &samples[k]]) else {
            continue;
        };
        let count = samples.iter().filter(|s| residual_ok(&model, s)).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, model));
        }
    }

    let all = || 0..samples.len();
    let refined = match best {
        Some((count, model)) if count >= 3 => {
            let inliers: Vec<usize> = all().filter(|&i| residual_ok(&model, &samples[i])).collect();
            least_squares(&samples, inliers.iter().copied()).unwrap_or(model)
        }
        _ => least_squares(&samples, all()).unwrap_or_else(|| mean_translation(&samples)),
    };
    Ok(refined)
}
