//! Training losses, evaluated rather than differentiated.

pub mod config;
pub mod objective;
pub mod spatial;
pub mod stencil;
pub mod temporal;

pub use config::LossConfig;
pub use objective::{
    pair_temporal_terms, stage1_loss, stage2_loss, FlowPair, FramePrediction, FrameTruth,
    LossBreakdown,
};
pub use spatial::{
    depth_loss, edge_weight, normal_base_loss, normal_reg_losses, seg_bce_loss, DepthLoss,
    MaskedMean, BCE_EPS,
};
pub use stencil::{dilate, laplacian, sobel_gradients, sobel_magnitude};
pub use temporal::{
    cycle_mask, depth_edge_mask, flow_aligned, round_trip_error, temporal_depth_loss,
    temporal_normal_loss, warp, PairMasks, TemporalLoss,
};
