use super::camera::{rotation_ypr, Camera};
use super::fit::{fit_morphable, FitResult};
use super::image::Image;
use super::mesh::Mesh;
use super::model::MorphableModel;
use super::raster::{unwrap, Unwrapped};
use crate::denoiser::EpsModel;
use crate::diffusion::NoiseSchedule;
use crate::inpaint::{inpaint, InpaintConfig, InpaintResult};
use crate::synthdata::{ChannelLayout, ReflectanceQuad};
use crate::Result;

/// Head pose in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Pose {
    pub const fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    /// Camera centred on a `width x height` image with the model's unit
    /// radius spanning about a third of the frame height.
    pub fn camera(&self, width: usize, height: usize) -> Camera {
        let rot = rotation_ypr(self.yaw.to_radians(), self.pitch.to_radians(), self.roll.to_radians());
        Camera {
            scale: 0.32 * height.min(width) as f64,
            rotation: rot,
            translation: [0.5 * width as f64, 0.5 * height as f64],
        }
    }
}

/// Projected landmark vertices of `mesh`.
pub fn project_landmarks(mesh: &Mesh, camera: &Camera, landmarks: &[usize]) -> Vec<[f64; 2]> {
    landmarks
        .iter()
        .map(|&v| {
            let p = camera.project(mesh.vertices[v]);
            [p[0], p[1]]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructConfig {
    pub resolution: usize,
    pub ridge: f64,
    pub layout: ChannelLayout,
    pub inpaint: InpaintConfig,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            ridge: 1e-3,
            layout: ChannelLayout::default(),
            inpaint: InpaintConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub fit: FitResult,
    pub mesh: Mesh,
    pub unwrapped: Unwrapped,
    pub result: InpaintResult<f32>,
    pub quad: ReflectanceQuad,
}

/// Fit, instantiate, unwrap and complete.
pub fn reconstruct<M: EpsModel<f32> + ?Sized>(
    image: &Image,
    landmarks: &[[f64; 2]],
    model: &MorphableModel,
    denoiser: &M,
    schedule: &NoiseSchedule,
    cfg: &ReconstructConfig,
) -> Result<Reconstruction> {
    let fit = fit_morphable(landmarks, model, cfg.ridge)?;
    let mesh = model.instantiate(&fit.p_s, &fit.p_e)?;
    let unwrapped = unwrap(image, &mesh, &fit.camera, cfg.resolution)?;
    let obs = unwrapped.observation::<f32>(cfg.layout)?;
    let result = inpaint(denoiser, &obs, schedule, &cfg.inpaint)?;
    let quad = result.quad(cfg.layout)?;
    Ok(Reconstruction {
        fit,
        mesh,
        unwrapped,
        result,
        quad,
    })
}
