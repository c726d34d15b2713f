//! Temporal graph convolutional video encoder over the 75-keypoint skeleton.

mod encoder;
mod graph;

pub use encoder::{
    video_encode, GcnBlock, InputNorm, TemporalMixing, VideoCache, VideoEncoder, VideoEncoderConfig, INPUT_CHANNELS,
};
pub use graph::{build_skeleton_graph, skeleton_graph, SkeletonGraph};
