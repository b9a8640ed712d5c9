//! Mesh and UV machinery: a synthetic morphable model, landmark fitting,
//! rasterised rendering and unwrapping of images into partial UV textures.

mod camera;
mod fit;
mod image;
mod mesh;
mod model;
mod pipeline;
mod raster;

pub use camera::{rotation_ypr, Camera, Mat3, IDENTITY};
pub use fit::{fit_morphable, FitResult, FIT_TOLERANCE, MAX_FIT_ITERS};
pub use image::Image;
pub use mesh::Mesh;
pub use model::{MorphableModel, SyntheticModelConfig};
pub use pipeline::{project_landmarks, reconstruct, Pose, ReconstructConfig, Reconstruction};
pub use raster::{erode, rasterize, render, unwrap, Raster, Unwrapped, DEPTH_TOLERANCE, NO_FACE};
