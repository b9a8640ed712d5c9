//! Noise schedule, forward process, reverse steps and the training loop.
//!
//! Timesteps are 1-based (`t` in `1..=T`) everywhere in the public API;
//! schedule arrays are stored 0-based, so `beta(t)` reads `betas[t - 1]`.
//! `alpha_bar(0)` is defined as 1 (the clean sample).

mod checkpoint;
mod sampler;
mod schedule;
mod train;

pub use checkpoint::{Checkpoint, DEFAULT_X0_CLIP};
pub use sampler::{
    ddim_step, ddim_step_with_eps, ddim_timesteps, ddpm_step, ddpm_step_with_eps, forward_sample, predict_x0,
    sample_ddim, sample_ddpm,
};
pub use schedule::NoiseSchedule;
pub use train::{train, training_loss, Dataset, TrainConfig, TrainReport};
