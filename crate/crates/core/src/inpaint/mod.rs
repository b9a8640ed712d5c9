//! Texture-masked completion samplers.
//!
//! The visibility mask applies to the texture channels only. Every
//! reflectance channel is treated as unknown and is inferred jointly through
//! the learned prior over the stacked maps.

mod samplers;

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use samplers::{inpaint, mcg, mcg_ddim, repaint, score_sde};

use crate::ndtensor::{kernels, Real, Tensor};
use crate::synthdata::{ChannelLayout, ReflectanceQuad};
use crate::{Error, Result};

/// Binary UV mask, `1` where the texture was observed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VisibilityMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl VisibilityMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width || height == 0 || width == 0 {
            return Err(Error::invalid_shape(
                "VisibilityMask",
                format!("{height}x{width} with {} values", data.len()),
            ));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width) as u8).collect();
        Self { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |_, _| false)
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |_, _| true)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] == 1
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.data.len() == other.data.len() && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ScoreSde,
    Repaint,
    Mcg,
    McgDdim,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::ScoreSde,
        Algorithm::Repaint,
        Algorithm::Mcg,
        Algorithm::McgDdim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::ScoreSde => "score_sde",
            Algorithm::Repaint => "repaint",
            Algorithm::Mcg => "mcg",
            Algorithm::McgDdim => "mcg_ddim",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_").to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintConfig {
    pub algorithm: Algorithm,
    /// DDIM subsequence length for `McgDdim`; the full schedule otherwise.
    pub ddim_steps: usize,
    pub ddim_eta: f64,
    pub repaint_n: usize,
    /// Step along the unit-norm data-consistency gradient.
    pub mcg_scale: f64,
    pub seed: u64,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Mcg,
            ddim_steps: 200,
            ddim_eta: 0.0,
            repaint_n: 10,
            mcg_scale: 1.0,
            seed: 0,
        }
    }
}

impl InpaintConfig {
    pub fn validate(&self, total_steps: usize) -> Result<()> {
        if self.repaint_n == 0 {
            return Err(Error::InvalidArgument("repaint_n must be >= 1".into()));
        }
        if self.algorithm == Algorithm::McgDdim && (self.ddim_steps == 0 || self.ddim_steps > total_steps) {
            return Err(Error::InvalidArgument(format!(
                "ddim_steps {} must be in 1..={total_steps}",
                self.ddim_steps
            )));
        }
        if !(self.mcg_scale >= 0.0) {
            return Err(Error::InvalidArgument("mcg_scale must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.ddim_eta) {
            return Err(Error::InvalidArgument("ddim_eta must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Analytic `(forward, backward)` model passes for a schedule of
    /// `total_steps`.
    pub fn expected_calls(&self, total_steps: usize) -> CallCounts {
        let (forward, backward) = match self.algorithm {
            Algorithm::ScoreSde => (total_steps, 0),
            Algorithm::Repaint => (self.repaint_n * total_steps, 0),
            Algorithm::Mcg => (total_steps, total_steps),
            Algorithm::McgDdim => (self.ddim_steps, self.ddim_steps),
        };
        CallCounts { forward, backward }
    }
}

/// Model evaluations performed by a sampler run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CallCounts {
    pub forward: usize,
    pub backward: usize,
}

impl CallCounts {
    pub fn total(&self) -> usize {
        self.forward + self.backward
    }
}

/// Known texture plus its mask. Only the texture channels of `x0_known` are
/// ever read.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<F: Real = f32> {
    pub layout: ChannelLayout,
    pub x0_known: Tensor<F>,
    pub mask: VisibilityMask,
}

impl<F: Real> Observation<F> {
    /// `x0_known` is `1 x C x H x W` in the `[-1, 1]` working range.
    pub fn new(layout: ChannelLayout, x0_known: Tensor<F>, mask: VisibilityMask) -> Result<Self> {
        layout.validate()?;
        let shape = x0_known.shape();
        if shape.len() != 4 || shape[0] != 1 || shape[1] != layout.total() {
            return Err(Error::invalid_shape(
                "Observation",
                format!("{shape:?} for layout {layout:?}"),
            ));
        }
        if shape[2] != mask.height() || shape[3] != mask.width() {
            return Err(Error::shape("Observation", shape, &[mask.height(), mask.width()]));
        }
        let obs = Self { layout, x0_known, mask };
        let texture = obs.texture();
        let px = obs.mask.data().len();
        for (i, v) in texture.data().iter().enumerate() {
            let v = v.to_f64c();
            if obs.mask.data()[i % px] == 1 && !(-1.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "observed texture value {v} outside [-1, 1]"
                )));
            }
        }
        Ok(obs)
    }

    /// Builds the observation from a `[0, 1]` planar RGB texture.
    pub fn from_texture(layout: ChannelLayout, texture: &[f64], mask: VisibilityMask) -> Result<Self> {
        let (h, w) = (mask.height(), mask.width());
        if texture.len() != layout.texture * h * w {
            return Err(Error::invalid_shape(
                "Observation",
                format!("{} texture values for {h}x{w}", texture.len()),
            ));
        }
        let mut data = vec![F::zero(); layout.total() * h * w];
        for (d, &v) in data.iter_mut().zip(texture) {
            *d = F::from_f64c(2.0 * v.clamp(0.0, 1.0) - 1.0);
        }
        Self::new(layout, Tensor::new(&[1, layout.total(), h, w], data)?, mask)
    }

    pub fn from_quad(quad: &ReflectanceQuad, mask: VisibilityMask) -> Result<Self> {
        Self::from_texture(quad.layout, &quad.texture, mask)
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    /// Texture channels, `1 x 3 x H x W`.
    pub fn texture(&self) -> Tensor<F> {
        let r = self.layout.texture_range();
        kernels::slice(&self.x0_known, 1, r.start, r.end).expect("texture slice")
    }

    /// Hash over the observed texels and the mask; unobserved texels and
    /// reflectance channels do not contribute.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.layout.hash(&mut h);
        self.mask.hash(&mut h);
        let px = self.mask.data().len();
        for (i, v) in self.texture().data().iter().enumerate() {
            if self.mask.data()[i % px] == 1 {
                v.to_f64c().to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Sampler output: the completed `1 x C x H x W` stack and its call counts.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintResult<F: Real = f32> {
    pub stack: Tensor<F>,
    pub calls: CallCounts,
}

impl<F: Real> InpaintResult<F> {
    pub fn quad(&self, layout: ChannelLayout) -> Result<ReflectanceQuad> {
        ReflectanceQuad::from_stack(&self.stack, layout)
    }
}
