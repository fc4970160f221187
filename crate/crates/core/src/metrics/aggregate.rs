//! Dataset-level summaries.
//!
//! Sums sort their terms before a compensated accumulation, so a summary does
//! not depend on the order records arrive in.

use serde::{Deserialize, Serialize};

use super::image::{AccEntry, DepthMetrics, NormalMetrics};
use super::temporal::PairMetrics;
use crate::error::{Error, Result};

/// Neumaier-compensated sum of the terms in ascending order.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in v {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn stable_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    stable_sum(v.iter().copied()) / v.len() as f64
}

/// `sum w*v / sum w`, or 0 when the weights vanish.
fn weighted_mean(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let v: Vec<(f64, f64)> = pairs.into_iter().collect();
    let w = stable_sum(v.iter().map(|p| p.0));
    if w == 0.0 {
        return 0.0;
    }
    stable_sum(v.iter().map(|p| p.0 * p.1)) / w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Every image counts once.
    #[default]
    PerImage,
    /// Images are weighted by their evaluated pixel counts.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub frame: usize,
    pub depth: DepthMetrics,
    pub normal: NormalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub aggregation: Aggregation,
    pub images: usize,
    pub rmse: f64,
    pub absrel: f64,
    pub mean_deg: f64,
    pub median_deg: f64,
    pub acc: Vec<AccEntry>,
    pub depth_pixels: usize,
    pub normal_pixels: usize,
}

/// Summarizes per-image records.
///
/// In pooled mode RMSE, AbsRel, mean angle, and `Acc` equal their values over
/// the union of all evaluated pixels; the median is the pixel-weighted mean of
/// per-image medians.
pub fn aggregate_images(records: &[ImageRecord], mode: Aggregation) -> Result<ImageSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::Empty("aggregate_images: no records".into()))?;
    let thresholds: Vec<f64> = first.normal.acc.iter().map(|e| e.threshold_deg).collect();
    for r in records {
        let t: Vec<f64> = r.normal.acc.iter().map(|e| e.threshold_deg).collect();
        if t != thresholds {
            return Err(Error::InvalidArgument(format!(
                "frame {} uses thresholds {t:?}, expected {thresholds:?}",
                r.frame
            )));
        }
    }
    let per = |f: &dyn Fn(&ImageRecord) -> f64, w: &dyn Fn(&ImageRecord) -> f64| match mode {
        Aggregation::PerImage => stable_mean(records.iter().map(f)),
        Aggregation::Pooled => weighted_mean(records.iter().map(|r| (w(r), f(r)))),
    };
    let dpx = |r: &ImageRecord| r.depth.pixel_count as f64;
    let npx = |r: &ImageRecord| r.normal.pixel_count as f64;
    let rmse = match mode {
        Aggregation::PerImage => stable_mean(records.iter().map(|r| r.depth.rmse)),
        Aggregation::Pooled => weighted_mean(
            records
                .iter()
                .map(|r| (dpx(r), r.depth.rmse * r.depth.rmse)),
        )
        .sqrt(),
    };
    let acc = thresholds
        .iter()
        .enumerate()
        .map(|(j, &t)| AccEntry {
            threshold_deg: t,
            fraction: per(&|r| r.normal.acc[j].fraction, &npx),
        })
        .collect();
    Ok(ImageSummary {
        aggregation: mode,
        images: records.len(),
        rmse,
        absrel: per(&|r| r.depth.absrel, &|r| r.depth.absrel_count as f64),
        mean_deg: per(&|r| r.normal.mean_deg, &npx),
        median_deg: per(&|r| r.normal.median_deg, &npx),
        acc,
        depth_pixels: records.iter().map(|r| r.depth.pixel_count).sum(),
        normal_pixels: records.iter().map(|r| r.normal.pixel_count).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub pairs: usize,
    pub opw: f64,
    pub tc_rmse: f64,
    pub opw_normal: f64,
    pub tc_mean_deg: f64,
    pub tc_abs_deg: f64,
    pub depth_pixels: usize,
    pub normal_pixels: usize,
}

/// Unweighted mean over adjacent pairs.
pub fn aggregate_pairs(records: &[PairMetrics]) -> Result<VideoSummary> {
    if records.is_empty() {
        return Err(Error::Empty("aggregate_pairs: no records".into()));
    }
    let m = |f: fn(&PairMetrics) -> f64| stable_mean(records.iter().map(f));
    Ok(VideoSummary {
        pairs: records.len(),
        opw: m(|r| r.opw),
        tc_rmse: m(|r| r.tc_rmse),
        opw_normal: m(|r| r.opw_normal),
        tc_mean_deg: m(|r| r.tc_mean_deg),
        tc_abs_deg: m(|r| r.tc_abs_deg),
        depth_pixels: records.iter().map(|r| r.depth_pixels).sum(),
        normal_pixels: records.iter().map(|r| r.normal_pixels).sum(),
    })
}
