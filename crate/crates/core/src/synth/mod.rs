//! Synthetic depth data: camera model, rasterizer, parameter sampling and
//! dataset writing.

pub mod camera;
pub mod dataset;
pub mod io;
pub mod raster;
pub mod sample;

pub use camera::{diagonal_focal, project, CameraIntrinsics, Projection};
pub use dataset::{generate_dataset, render_params, write_depth, write_mask, Manifest, SampleFiles};
pub use raster::{render_depth, DepthFrame, GroundTruth};
pub use sample::{sample, Sample, SampleConfig};
