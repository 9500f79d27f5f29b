//! Region descriptors: per-channel color histograms over the whole region and
//! per-frame histograms of the horizontal and vertical backward flow.

use std::collections::{BTreeMap, BTreeSet};

use super::config::StreamConfig;
use crate::error::{Error, Result};
use crate::image::{FlowField, Frame, LabelVolume};

const CHI2_EPS: f64 = 1e-12;

/// Normalized histograms of the two flow components in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowHist {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionRecord {
    pub id: u32,
    /// Voxel count.
    pub size: u64,
    /// One normalized histogram per RGB channel.
    pub color_hist: [Vec<f64>; 3],
    /// Keyed by frame index; frame 0 of the slice has no backward flow.
    pub flow_hists: BTreeMap<usize, FlowHist>,
    pub frames_present: BTreeSet<usize>,
}

#[inline]
pub(crate) fn color_bin(value: u8, bins: usize) -> usize {
    (usize::from(value) * bins / 256).min(bins - 1)
}

#[inline]
pub(crate) fn flow_bin(value: f32, range: f64, bins: usize) -> usize {
    let c = f64::from(value).clamp(-range, range);
    let b = ((c + range) / (2.0 * range) * bins as f64).floor() as usize;
    b.min(bins - 1)
}

fn normalize(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

struct Accumulator {
    size: u64,
    color: [Vec<u64>; 3],
    flow: BTreeMap<usize, (Vec<u64>, Vec<u64>)>,
    frames: BTreeSet<usize>,
}

/// Descriptors for every label of `labels`, sorted by label. `flows[t - 1]`
/// is the backward flow of frame `t`; a shorter (e.g. empty) flow list simply
/// leaves the uncovered frames without flow histograms.
pub fn extract_region_features(
    labels: &LabelVolume,
    frames: &[Frame],
    flows: &[FlowField],
    config: &StreamConfig,
) -> Vec<RegionRecord> {
    assert_eq!(labels.depth(), frames.len(), "label depth must match frame count");
    let cb = config.color_bins;
    let fb = config.flow_bins;
    let plane = labels.frame_len();
    let mut acc: BTreeMap<u32, Accumulator> = BTreeMap::new();
    for (t, frame) in frames.iter().enumerate() {
        let lab = labels.frame(t);
        let flow = if t > 0 { flows.get(t - 1) } else { None };
        for i in 0..plane {
            let a = acc.entry(lab[i]).or_insert_with(|| Accumulator {
                size: 0,
                color: [vec![0; cb], vec![0; cb], vec![0; cb]],
                flow: BTreeMap::new(),
                frames: BTreeSet::new(),
            });
            a.size += 1;
            a.frames.insert(t);
            let p = frame.pixels()[i];
            for c in 0..3 {
                a.color[c][color_bin(p[c], cb)] += 1;
            }
            if let Some(f) = flow {
                let (u, v) = (f.u()[i], f.v()[i]);
                let (hu, hv) = a.flow.entry(t).or_insert_with(|| (vec![0; fb], vec![0; fb]));
                hu[flow_bin(u, config.flow_range, fb)] += 1;
                hv[flow_bin(v, config.flow_range, fb)] += 1;
            }
        }
    }
    acc.into_iter()
        .map(|(id, a)| RegionRecord {
            id,
            size: a.size,
            color_hist: [normalize(&a.color[0]), normalize(&a.color[1]), normalize(&a.color[2])],
            flow_hists: a
                .flow
                .into_iter()
                .map(|(t, (u, v))| {
                    (
                        t,
                        FlowHist {
                            u: normalize(&u),
                            v: normalize(&v),
                        },
                    )
                })
                .collect(),
            frames_present: a.frames,
        })
        .collect()
}

/// `0.5 * sum (h - g)^2 / (h + g + eps)`, in `[0, 1]` for normalized inputs.
pub fn chi2_distance(h: &[f64], g: &[f64]) -> Result<f64> {
    if h.len() != g.len() {
        return Err(Error::Contract(format!(
            "histogram lengths differ: {} vs {}",
            h.len(),
            g.len()
        )));
    }
    Ok(chi2(h, g))
}

#[inline]
pub(crate) fn chi2(h: &[f64], g: &[f64]) -> f64 {
    let s: f64 = h
        .iter()
        .zip(g)
        .map(|(&a, &b)| {
            let d = a - b;
            d * d / (a + b + CHI2_EPS)
        })
        .sum();
    (0.5 * s).clamp(0.0, 1.0)
}

/// Mean of the three per-channel chi-squared distances.
pub fn color_distance(a: &RegionRecord, b: &RegionRecord) -> f64 {
    (0..3).map(|c| chi2(&a.color_hist[c], &b.color_hist[c])).sum::<f64>() / 3.0
}

/// Per-frame flow distance averaged over frames where both regions carry
/// flow histograms; 0 when they share none.
pub fn flow_distance(a: &RegionRecord, b: &RegionRecord) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (t, fa) in &a.flow_hists {
        if let Some(fb) = b.flow_hists.get(t) {
            sum += 0.5 * (chi2(&fa.u, &fb.u) + chi2(&fa.v, &fb.v));
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Fuses color and flow distances: `(1 - (1 - d_c)(1 - d_f))^2`.
pub fn combine_distance(d_c: f64, d_f: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&d_c) || !(0.0..=1.0).contains(&d_f) {
        return Err(Error::Contract(format!(
            "distances must lie in [0,1], got ({d_c}, {d_f})"
        )));
    }
    Ok(combine(d_c, d_f))
}

#[inline]
pub(crate) fn combine(d_c: f64, d_f: f64) -> f64 {
    let s = 1.0 - (1.0 - d_c) * (1.0 - d_f);
    s * s
}
