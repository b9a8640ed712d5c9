use std::path::Path;

use super::NoiseSchedule;
use crate::denoiser::{Denoiser, DenoiserConfig};
use crate::ndtensor::Archive;
use crate::{Error, Result};

/// Clamp applied when a checkpoint does not record one: stacks live in
/// `[-1, 1]`.
pub const DEFAULT_X0_CLIP: f64 = 1.0;

/// Trained parameters with the schedule and configuration they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Denoiser<f32>,
    pub schedule: NoiseSchedule,
    /// Optimizer steps taken to produce `model`.
    pub step: usize,
    pub seed: u64,
    /// Mean training loss over the final logging window, if recorded.
    pub final_loss: Option<f64>,
}

impl Checkpoint {
    pub fn to_archive(&self) -> Archive<f32> {
        let mut a = Archive::new();
        let c = self.model.config();
        a.set("kind", "checkpoint");
        a.set("schedule.steps", self.schedule.steps());
        a.set("schedule.beta_start", self.schedule.beta_start());
        a.set("schedule.beta_end", self.schedule.beta_end());
        a.set(
            "schedule.x0_clip",
            self.schedule.x0_clip().map_or("none".to_string(), |c| c.to_string()),
        );
        a.set("model.in_channels", c.in_channels);
        a.set("model.base_width", c.base_width);
        a.set("model.depth", c.depth);
        a.set("model.time_dim", c.time_dim);
        a.set("train.step", self.step);
        a.set("train.seed", self.seed);
        if let Some(l) = self.final_loss {
            a.set("train.final_loss", l);
        }
        for (name, t) in self.model.named() {
            a.push(name, t);
        }
        a
    }

    pub fn from_archive(a: &Archive<f32>) -> Result<Self> {
        if a.get("kind")? != "checkpoint" {
            return Err(Error::Format("archive is not a checkpoint".into()));
        }
        let config = DenoiserConfig {
            in_channels: a.parse("model.in_channels")?,
            base_width: a.parse("model.base_width")?,
            depth: a.parse("model.depth")?,
            time_dim: a.parse("model.time_dim")?,
        };
        let schedule = NoiseSchedule::linear(
            a.parse("schedule.steps")?,
            a.parse("schedule.beta_start")?,
            a.parse("schedule.beta_end")?,
        )?
        .with_x0_clip(match a.header.get("schedule.x0_clip").map(String::as_str) {
            None => Some(DEFAULT_X0_CLIP),
            Some("none") => None,
            Some(_) => Some(a.parse("schedule.x0_clip")?),
        })?;
        Ok(Self {
            model: Denoiser::from_named(config, &a.entries)?,
            schedule,
            step: a.parse("train.step")?,
            seed: a.parse("train.seed")?,
            final_loss: a.header.get("train.final_loss").and_then(|v| v.parse().ok()),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}
