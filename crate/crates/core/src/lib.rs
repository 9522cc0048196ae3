//! Software model of a streaming fixed-point ORB feature extractor, with a
//! floating-point reference, descriptor matching, motion-only bundle adjustment
//! and trajectory evaluation.

pub mod brief;
pub mod error;
pub mod fast;
pub mod image;
pub mod matcher;
pub mod oracle;
pub mod orient;
pub mod pipeline;
pub mod pose;
pub mod pyramid;
pub mod smooth;
pub mod synth;

pub use brief::{BriefPattern, Descriptor256};
pub use error::{Error, Result};
pub use image::{load_pgm, GrayImage};
pub use pipeline::{Extractor, FrameOutput, Keypoint, PipelineConfig, PipelineStats};
pub use pose::{Intrinsics, PoseSE3, Trajectory};
