//! Multi-view pedestrian detection on a ground-plane occupancy grid.
//!
//! Per-camera feature maps are warped onto the Z = 0 plane through each
//! camera's ground homography, averaged across views (so any number of
//! cameras in any order is accepted), and decoded by a small dilated
//! convolution head into a per-cell occupancy probability. The crate also
//! carries the training objective, decoding, CLEAR-style detection
//! metrics, a synthetic multi-camera scene generator, on-disk formats and
//! a generalization benchmark harness.
//!
//! Tensor math is generic over [`Scalar`] (`f32` or `f64`); geometry is
//! always `f64`. Concrete aliases for both precisions live at the root.

pub mod aggregate;
pub mod autonet;
pub mod calib;
pub mod bench;
pub mod decode;
pub mod error;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod sceneio;
pub mod synthgen;
pub mod tensor;
pub mod warp;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use aggregate::GroundFeatures;
pub use autonet::model::{Model, ModelConfig};
pub use autonet::train::TrainConfig;
pub use decode::{DecoderConfig, Detection};
pub use geometry::{Camera, CameraExtrinsics, CameraIntrinsics, GroundGrid, ProjectionMatrix};
pub use loss::{LossKind, OccupancyMap};
pub use metrics::{MatchResult, MetricReport};
pub use pipeline::Detector;
pub use sceneio::Dataset;
pub use tensor::Tensor;
pub use warp::{ProjectedFeatureMap, ViewFeatureMap, WarpTable};

/// Single-precision tensor, the default for training and inference.
pub type Tensor32 = Tensor<f32>;
/// Double-precision tensor, used by gradient checks.
pub type Tensor64 = Tensor<f64>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
pub type Detector32 = Detector<f32>;
pub type Detector64 = Detector<f64>;
pub type OccupancyMap32 = OccupancyMap<f32>;
pub type OccupancyMap64 = OccupancyMap<f64>;
