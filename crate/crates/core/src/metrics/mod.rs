//! Evaluation metrics: per-image depth and normal errors, flow-based temporal
//! consistency, and dataset summaries. Angles are reported in degrees.

pub mod aggregate;
pub mod image;
pub mod temporal;

pub use aggregate::{
    aggregate_images, aggregate_pairs, stable_sum, Aggregation, ImageRecord, ImageSummary,
    VideoSummary,
};
pub use image::{
    angle_deg, check_thresholds, depth_errors, depth_metrics, lower_median, normal_metrics,
    AccEntry, DepthMetrics, NormalMetrics, DEFAULT_THRESHOLDS,
};
pub use temporal::{
    opw_depth, opw_normal, pair_metrics, tc_abs, tc_mean, tc_rmse, FramePairRef, PairMetrics,
};
