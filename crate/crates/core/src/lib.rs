//! Diffusion-model guided completion of coupled texture and reflectance UV maps.
//!
//! The crate is organised bottom-up:
//!
//! * [`ndtensor`]: dense tensors with a reverse-mode tape.
//! * [`diffusion`]: noise schedule, forward process, DDPM/DDIM steps and training.
//! * [`denoiser`]: the time-conditioned U-Net `eps(x_t, t)`.
//! * [`synthdata`]: procedural reflectance maps, Blinn-Phong UV shading and datasets.
//! * [`uvgeom`]: morphable model, landmark fitting, rasterization and UV unwrapping.
//! * [`inpaint`]: Score-SDE, RePaint, MCG and MCG+DDIM completion samplers.
//! * [`harness`]: PSNR/SSIM, the frozen benchmark and reports.

pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod inpaint;
pub mod ndtensor;
pub mod synthdata;
pub mod uvgeom;

pub use error::{Error, Result};
