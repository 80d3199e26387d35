//! Attention adapter blocks and the vision-branch feature constructions.

mod block;
mod fusion;
mod geometry;
mod vision;

pub use block::{
    bottleneck_width, AdapterBlock, Attention, AttentionVars, BlockKind, BlockVars, ADAPTER_HEADS,
};
pub use fusion::{
    image_fusion_forward, interleave_pairs, pair_fusion_var, pair_mean_var, pair_pooling,
    pair_rows, prior_fusion_forward, prior_fusion_var, text_fusion_forward, weight_adapter_forward,
    weight_adapter_var,
};
pub use geometry::{iou, spatial_descriptor, BoundingBox, SPATIAL_DESCRIPTOR_LEN};
pub use vision::{
    build_ho_token, region_features, roi_pool_weights, spatial_feature, EncoderOutput, FeatureGrid,
    PairInstance, SpatialMlp, SpatialMlpVars, ToyEncoder, ENCODER_BRANCH_SCALE, ROI_BINS,
    SPATIAL_HIDDEN,
};
