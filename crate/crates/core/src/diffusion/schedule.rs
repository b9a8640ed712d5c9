use crate::{Error, Result};

/// Linear beta schedule with derived `alpha` and cumulative `alpha_bar` tables.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta_start: f64,
    beta_end: f64,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    x0_clip: Option<f64>,
}

impl NoiseSchedule {
    /// `steps` betas linearly spaced from `beta_start` to `beta_end` inclusive.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidArgument(format!("schedule needs T >= 2, got {steps}")));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
            .collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            beta_start,
            beta_end,
            betas,
            alphas,
            alpha_bars,
            x0_clip: None,
        })
    }

    /// Reverse steps clamp their clean-sample estimate to `[-c, c]`.
    pub fn with_x0_clip(mut self, clip: Option<f64>) -> Result<Self> {
        if let Some(c) = clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidArgument(format!("x0 clip must be positive, got {c}")));
            }
        }
        self.x0_clip = clip;
        Ok(self)
    }

    pub fn x0_clip(&self) -> Option<f64> {
        self.x0_clip
    }

    /// The default DDPM schedule: T = 1000, beta 1e-4 -> 0.02.
    pub fn standard() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("valid default schedule")
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::TimestepOutOfRange { t, max: self.steps() });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// Cumulative product up to `t`; 1 at `t = 0`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }
}
