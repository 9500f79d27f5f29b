//! Supervoxel benchmark metrics.
//!
//! All metrics compare a predicted [`LabelVolume`] with a ground-truth one of
//! the same shape. Label values only name segments; every metric is invariant
//! to relabelling either volume.
//!
//! - Boundary recall (2D and 3D): a boundary element sits between two
//!   6-adjacent voxels with different labels. A ground-truth element is
//!   recalled when a predicted element of the same orientation lies within
//!   Chebyshev distance `tol` in the same frame (or frame pair).
//! - Explained variation: `sum (mu_s(i) - mu)^2 / sum (x_i - mu)^2` over luma.
//! - Accuracy: each supervoxel is assigned to the ground-truth segment it
//!   overlaps most (lower label on ties); a segment's score is the share of
//!   it covered by supervoxels assigned to it.
//! - Under-segmentation error: for each ground-truth segment `g`,
//!   `(sum of |s| over supervoxels s meeting g - |g|) / |g|`. This is the
//!   plain set-sum variant, without a minimum-overlap clamp.
//!
//! 2D variants evaluate each frame separately and average over frames.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{luma, FrameSequence, LabelVolume};
use crate::streamseg::SegmentationHierarchy;

pub const CSV_HEADER: &str = "level,num_supervoxels,br2d,br3d,ev,acc2d,acc3d,ue2d,ue3d";

/// Default boundary tolerance, pixels.
pub const DEFAULT_TOLERANCE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub num_supervoxels: usize,
    pub br2d: f64,
    pub br3d: f64,
    pub ev: f64,
    pub acc2d: f64,
    pub acc3d: f64,
    pub ue2d: f64,
    pub ue3d: f64,
}

fn check_shapes(pred: &LabelVolume, gt: &LabelVolume) -> Result<()> {
    if pred.same_shape(gt) {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "label volumes differ in shape: {}x{}x{} vs {}x{}x{}",
            pred.width(),
            pred.height(),
            pred.depth(),
            gt.width(),
            gt.height(),
            gt.depth()
        )))
    }
}

#[derive(Clone, Copy)]
enum Orientation {
    X,
    Y,
}

/// Boundary bitmap of one frame: element at `(x, y)` between `(x, y)` and
/// its `+x` or `+y` neighbour.
fn frame_boundaries(labels: &[u32], w: usize, h: usize, o: Orientation) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            out[k] = match o {
                Orientation::X => x + 1 < w && labels[k] != labels[k + 1],
                Orientation::Y => y + 1 < h && labels[k] != labels[k + w],
            };
        }
    }
    out
}

/// Boundary bitmap between frames `t` and `t + 1`.
fn pair_boundaries(a: &[u32], b: &[u32]) -> Vec<bool> {
    a.iter().zip(b).map(|(p, q)| p != q).collect()
}

/// `(recalled, total)` for one bitmap pair.
fn recall_counts(gt: &[bool], pred: &[bool], w: usize, h: usize, tol: usize) -> (usize, usize) {
    // summed-area table of pred for box queries
    let mut sat = vec![0usize; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] =
                usize::from(pred[y * w + x]) + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
        }
    }
    let mut recalled = 0;
    let mut total = 0;
    for y in 0..h {
        for x in 0..w {
            if !gt[y * w + x] {
                continue;
            }
            total += 1;
            let (x0, y0) = (x.saturating_sub(tol), y.saturating_sub(tol));
            let (x1, y1) = ((x + tol + 1).min(w), (y + tol + 1).min(h));
            let count = sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0];
            if count > 0 {
                recalled += 1;
            }
        }
    }
    (recalled, total)
}

fn frame_recall(pred: &[u32], gt: &[u32], w: usize, h: usize, tol: usize) -> (usize, usize) {
    let mut acc = (0, 0);
    for o in [Orientation::X, Orientation::Y] {
        let (r, n) = recall_counts(
            &frame_boundaries(gt, w, h, o),
            &frame_boundaries(pred, w, h, o),
            w,
            h,
            tol,
        );
        acc = (acc.0 + r, acc.1 + n);
    }
    acc
}

pub fn boundary_recall_3d(pred: &LabelVolume, gt: &LabelVolume, tol: usize) -> Result<f64> {
    check_shapes(pred, gt)?;
    let (w, h, d) = (gt.width(), gt.height(), gt.depth());
    let (mut recalled, mut total) = (0, 0);
    for t in 0..d {
        let (r, n) = frame_recall(pred.frame(t), gt.frame(t), w, h, tol);
        recalled += r;
        total += n;
        if t + 1 < d {
            let (r, n) = recall_counts(
                &pair_boundaries(gt.frame(t), gt.frame(t + 1)),
                &pair_boundaries(pred.frame(t), pred.frame(t + 1)),
                w,
                h,
                tol,
            );
            recalled += r;
            total += n;
        }
    }
    Ok(if total == 0 { 1.0 } else { recalled as f64 / total as f64 })
}

pub fn boundary_recall_2d(pred: &LabelVolume, gt: &LabelVolume, tol: usize) -> Result<f64> {
    check_shapes(pred, gt)?;
    let (w, h) = (gt.width(), gt.height());
    let mut sum = 0.0;
    let mut frames = 0;
    for t in 0..gt.depth() {
        let (r, n) = frame_recall(pred.frame(t), gt.frame(t), w, h, tol);
        if n > 0 {
            sum += r as f64 / n as f64;
            frames += 1;
        }
    }
    Ok(if frames == 0 { 1.0 } else { sum / frames as f64 })
}

/// Explained variation over luma; 1 for a constant video.
pub fn explained_variation(pred: &LabelVolume, video: &FrameSequence) -> Result<f64> {
    if pred.width() != video.width() || pred.height() != video.height() || pred.depth() != video.len() {
        return Err(Error::Contract("label volume and video differ in shape".into()));
    }
    let values: Vec<f64> = video
        .frames()
        .iter()
        .flat_map(|f| f.pixels().iter().map(|&p| f64::from(luma(p))))
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (&l, &v) in pred.labels().iter().zip(&values) {
        let e = sums.entry(l).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let means: BTreeMap<u32, f64> = sums.into_iter().map(|(l, (s, c))| (l, s / c as f64)).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for (&l, &v) in pred.labels().iter().zip(&values) {
        num += (means[&l] - mean).powi(2);
        den += (v - mean).powi(2);
    }
    Ok(if den == 0.0 { 1.0 } else { num / den })
}

/// Overlap counts `(pred, gt) -> voxels` plus segment sizes.
struct Overlaps {
    pairs: BTreeMap<(u32, u32), usize>,
    pred_size: BTreeMap<u32, usize>,
    gt_size: BTreeMap<u32, usize>,
}

fn overlaps(pred: &[u32], gt: &[u32]) -> Overlaps {
    let mut o = Overlaps {
        pairs: BTreeMap::new(),
        pred_size: BTreeMap::new(),
        gt_size: BTreeMap::new(),
    };
    for (&p, &g) in pred.iter().zip(gt) {
        *o.pairs.entry((p, g)).or_default() += 1;
        *o.pred_size.entry(p).or_default() += 1;
        *o.gt_size.entry(g).or_default() += 1;
    }
    o
}

fn accuracy_of(pred: &[u32], gt: &[u32]) -> f64 {
    let o = overlaps(pred, gt);
    // pairs are ordered by (pred, gt): a strict improvement keeps the lower gt
    let mut assigned: BTreeMap<u32, (u32, usize)> = BTreeMap::new();
    for (&(p, g), &n) in &o.pairs {
        if assigned.get(&p).is_none_or(|&(_, m)| n > m) {
            assigned.insert(p, (g, n));
        }
    }
    let mut covered: BTreeMap<u32, usize> = BTreeMap::new();
    for &(g, n) in assigned.values() {
        *covered.entry(g).or_default() += n;
    }
    let sum: f64 = o
        .gt_size
        .iter()
        .map(|(g, &size)| covered.get(g).copied().unwrap_or(0) as f64 / size as f64)
        .sum();
    sum / o.gt_size.len() as f64
}

fn undersegmentation_of(pred: &[u32], gt: &[u32]) -> f64 {
    let o = overlaps(pred, gt);
    let mut spill: BTreeMap<u32, usize> = BTreeMap::new();
    for &(p, g) in o.pairs.keys() {
        *spill.entry(g).or_default() += o.pred_size[&p];
    }
    let sum: f64 = o
        .gt_size
        .iter()
        .map(|(g, &size)| (spill[g] - size) as f64 / size as f64)
        .sum();
    sum / o.gt_size.len() as f64
}

pub fn accuracy_3d(pred: &LabelVolume, gt: &LabelVolume) -> Result<f64> {
    check_shapes(pred, gt)?;
    Ok(accuracy_of(pred.labels(), gt.labels()))
}

pub fn accuracy_2d(pred: &LabelVolume, gt: &LabelVolume) -> Result<f64> {
    check_shapes(pred, gt)?;
    let sum: f64 = (0..gt.depth()).map(|t| accuracy_of(pred.frame(t), gt.frame(t))).sum();
    Ok(sum / gt.depth() as f64)
}

pub fn undersegmentation_error_3d(pred: &LabelVolume, gt: &LabelVolume) -> Result<f64> {
    check_shapes(pred, gt)?;
    Ok(undersegmentation_of(pred.labels(), gt.labels()))
}

pub fn undersegmentation_error_2d(pred: &LabelVolume, gt: &LabelVolume) -> Result<f64> {
    check_shapes(pred, gt)?;
    let sum: f64 = (0..gt.depth()).map(|t| undersegmentation_of(pred.frame(t), gt.frame(t))).sum();
    Ok(sum / gt.depth() as f64)
}

/// All metrics of one predicted volume.
pub fn evaluate_volume(pred: &LabelVolume, gt: &LabelVolume, video: &FrameSequence, tol: usize) -> Result<MetricsReport> {
    Ok(MetricsReport {
        num_supervoxels: pred.num_labels(),
        br2d: boundary_recall_2d(pred, gt, tol)?,
        br3d: boundary_recall_3d(pred, gt, tol)?,
        ev: explained_variation(pred, video)?,
        acc2d: accuracy_2d(pred, gt)?,
        acc3d: accuracy_3d(pred, gt)?,
        ue2d: undersegmentation_error_2d(pred, gt)?,
        ue3d: undersegmentation_error_3d(pred, gt)?,
    })
}

/// One report per hierarchy level.
pub fn evaluate(
    hierarchy: &SegmentationHierarchy,
    gt: &LabelVolume,
    video: &FrameSequence,
    tol: usize,
) -> Result<Vec<MetricsReport>> {
    evaluate_levels(&hierarchy.levels, gt, video, tol)
}

pub fn evaluate_levels(levels: &[LabelVolume], gt: &LabelVolume, video: &FrameSequence, tol: usize) -> Result<Vec<MetricsReport>> {
    levels.par_iter().map(|l| evaluate_volume(l, gt, video, tol)).collect()
}

pub fn metrics_csv(reports: &[MetricsReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for (level, r) in reports.iter().enumerate() {
        s += &format!(
            "{level},{},{},{},{},{},{},{},{}\n",
            r.num_supervoxels, r.br2d, r.br3d, r.ev, r.acc2d, r.acc3d, r.ue2d, r.ue3d
        );
    }
    s
}

/// Parses text produced by [`metrics_csv`]; rows must be in level order.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsReport>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "metrics CSV must start with '{CSV_HEADER}', found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    lines
        .enumerate()
        .map(|(row, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Format(format!("metrics CSV row {}: '{line}'", row + 1));
            if fields.len() != 9 || fields[0].parse::<usize>().ok() != Some(row) {
                return Err(bad());
            }
            let f = |i: usize| fields[i].parse::<f64>().map_err(|_| bad());
            Ok(MetricsReport {
                num_supervoxels: fields[1].parse().map_err(|_| bad())?,
                br2d: f(2)?,
                br3d: f(3)?,
                ev: f(4)?,
                acc2d: f(5)?,
                acc3d: f(6)?,
                ue2d: f(7)?,
                ue3d: f(8)?,
            })
        })
        .collect()
}
