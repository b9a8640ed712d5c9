use std::ops::Range;

use super::{Algorithm, CallCounts, InpaintConfig, InpaintResult, Observation};
use crate::denoiser::EpsModel;
use crate::diffusion::{ddim_step_with_eps, ddim_timesteps, ddpm_step_with_eps, forward_sample, NoiseSchedule};
use crate::ndtensor::{Real, Stream, StreamId, Tape, Tensor};
use crate::{Error, Result};

/// Per-run state shared by the samplers: the known texture, its mask as a
/// tensor, and the observation noise stream.
struct Known<'a, F: Real> {
    s: &'a NoiseSchedule,
    texture: Tensor<F>,
    mask: Tensor<F>,
    bits: &'a [u8],
    range: Range<usize>,
    rng: Stream,
}

impl<'a, F: Real> Known<'a, F> {
    fn new(obs: &'a Observation<F>, s: &'a NoiseSchedule, seed: u64) -> Self {
        let texture = obs.texture();
        let px = obs.mask.data().len();
        let mask_data: Vec<F> = (0..texture.len())
            .map(|i| {
                if obs.mask.data()[i % px] == 1 {
                    F::one()
                } else {
                    F::zero()
                }
            })
            .collect();
        Self {
            s,
            mask: Tensor::new(texture.shape(), mask_data).expect("mask shape"),
            texture,
            bits: obs.mask.data(),
            range: obs.layout.texture_range(),
            rng: Stream::new(seed, StreamId::Observation),
        }
    }

    /// Known texture diffused to level `t` (`t = 0` is the observation).
    fn at(&mut self, t: usize) -> Result<Tensor<F>> {
        if t == 0 {
            return Ok(self.texture.clone());
        }
        let eps = self.rng.normal_tensor::<F>(self.texture.shape());
        forward_sample(&self.texture, t, &eps, self.s)
    }

    /// Overwrites the observed texels of `x` with the observation at `t`.
    fn apply(&mut self, x: &mut Tensor<F>, t: usize) -> Result<()> {
        let known = self.at(t)?;
        self.replace(x, &known);
        Ok(())
    }

    fn replace(&self, x: &mut Tensor<F>, known: &Tensor<F>) {
        let px = self.bits.len();
        let offset = self.range.start * px;
        let dst = &mut x.data_mut()[offset..offset + known.len()];
        for (i, (d, &k)) in dst.iter_mut().zip(known.data()).enumerate() {
            if self.bits[i % px] == 1 {
                *d = k;
            }
        }
    }

    /// Runs a taped forward pass at `x`, returning the noise prediction and
    /// the unit-norm gradient of the known-texture loss on the clean
    /// estimate (None when the gradient vanishes).
    fn guided_eps<M: EpsModel<F> + ?Sized>(
        &self,
        model: &M,
        x: &Tensor<F>,
        t: usize,
    ) -> Result<(Tensor<F>, Option<Tensor<F>>)> {
        let ab = self.s.alpha_bar(t);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let ev = model.predict_on(&mut tape, xv, &[t])?;
        let scaled = tape.scale(ev, F::from_f64c((1.0 - ab).sqrt()))?;
        let diff = tape.sub(xv, scaled)?;
        let x0 = tape.scale(diff, F::from_f64c(1.0 / ab.sqrt()))?;
        let tex = tape.slice(x0, 1, self.range.start, self.range.end)?;
        let target = tape.constant(self.texture.clone());
        let mask = tape.constant(self.mask.clone());
        let resid = tape.sub(target, tex)?;
        let masked = tape.mul(resid, mask)?;
        let sq = tape.mul(masked, masked)?;
        let loss = tape.sum(sq)?;
        let eps = tape.value(ev).clone();
        let grads = tape.backward(loss)?;
        let Some(g) = grads.get(xv)? else {
            return Ok((eps, None));
        };
        let norm = g.data().iter().map(|v| v.to_f64c().powi(2)).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFiniteState(t));
        }
        if norm < 1e-12 {
            return Ok((eps, None));
        }
        let inv = F::from_f64c(1.0 / norm);
        Ok((eps, Some(g.map(|v| v * inv))))
    }
}

fn check<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    obs: &Observation<F>,
    s: &NoiseSchedule,
    cfg: &InpaintConfig,
) -> Result<()> {
    cfg.validate(s.steps())?;
    if model.channels() != obs.layout.total() {
        return Err(Error::InvalidArgument(format!(
            "model has {} channels, observation {}",
            model.channels(),
            obs.layout.total()
        )));
    }
    let m = model.size_multiple();
    if obs.height() % m != 0 || obs.width() % m != 0 {
        return Err(Error::InvalidArgument(format!(
            "resolution {}x{} is not a multiple of {m}",
            obs.height(),
            obs.width()
        )));
    }
    Ok(())
}

fn finite<F: Real>(x: &Tensor<F>, t: usize) -> Result<()> {
    if x.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteState(t))
    }
}

fn descend<F: Real>(x: Tensor<F>, g: Option<Tensor<F>>, scale: f64) -> Result<Tensor<F>> {
    match g {
        Some(g) if scale > 0.0 => {
            let k = F::from_f64c(scale);
            x.zip_map(&g, "mcg", |v, d| v - k * d)
        }
        _ => Ok(x),
    }
}

fn start<F: Real>(obs: &Observation<F>, seed: u64) -> (Stream, Tensor<F>) {
    let mut rng = Stream::new(seed, StreamId::Reverse);
    let x = rng.normal_tensor::<F>(obs.x0_known.shape());
    (rng, x)
}

/// Reverse diffusion with the known texture overwritten by its diffused
/// observation after every step.
pub fn score_sde<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    obs: &Observation<F>,
    s: &NoiseSchedule,
    cfg: &InpaintConfig,
) -> Result<InpaintResult<F>> {
    repaint_with(model, obs, s, cfg, 1)
}

/// Score-SDE replacement repeated `repaint_n` times per timestep, re-noising
/// `t - 1 -> t` between repetitions.
pub fn repaint<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    obs: &Observation<F>,
    s: &NoiseSchedule,
    cfg: &InpaintConfig,
) -> Result<InpaintResult<F>> {
    repaint_with(model, obs, s, cfg, cfg.repaint_n)
}

fn repaint_with<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    obs: &Observation<F>,
    s: &NoiseSchedule,
    cfg: &InpaintConfig,
    n: usize,
) -> Result<InpaintResult<F>> {
    check(model, obs, s, cfg)?;
    let mut known = Known::new(obs, s, cfg.seed);
    let mut resample = Stream::new(cfg.seed, StreamId::Resample);
    let (mut rng, mut x) = start(obs, cfg.seed);
    let mut calls = CallCounts::default();
    for t in (1..=s.steps()).rev() {
        let (a, b) = (F::from_f64c(s.alpha(t).sqrt()), F::from_f64c(s.beta(t).sqrt()));
        for r in 0..n {
            let eps = model.predict(&x, &[t])?;
            calls.forward += 1;
            let mut next = ddpm_step_with_eps(&x, &eps, t, s, &mut rng)?;
            known.apply(&mut next, t - 1)?;
            finite(&next, t)?;
            x = if r + 1 < n {
                let z = resample.normal_tensor::<F>(next.shape());
                next.zip_map(&z, "repaint", |v, e| a * v + b * e)?
            } else {
                next
            };
        }
    }
    Ok(InpaintResult { stack: x, calls })
}

/// Replacement plus a unit-norm step along the gradient of the known-texture
/// error of the clean estimate.
pub fn mcg<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    obs: &Observation<F>,
    s: &NoiseSchedule,
    cfg: &InpaintConfig,
) -> Result<InpaintResult<F>> {
    check(model, obs, s, cfg)?;
    let mut known = Known::new(obs, s, cfg.seed);
    let (mut rng, mut x) = start(obs, cfg.seed);
    let mut calls = CallCounts::default();
    for t in (1..=s.steps()).rev() {
        let (eps, g) = known.guided_eps(model, &x, t)?;
        calls.forward += 1;
        calls.backward += 1;
        let proposal = ddpm_step_with_eps(&x, &eps, t, s, &mut rng)?;
        let mut next = descend(proposal, g, cfg.mcg_scale)?;
        known.apply(&mut next, t - 1)?;
        finite(&next, t)?;
        x = next;
    }
    Ok(InpaintResult { stack: x, calls })
}

/// MCG over the uniform DDIM subsequence of length `ddim_steps`.
pub fn mcg_ddim<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    obs: &Observation<F>,
    s: &NoiseSchedule,
    cfg: &InpaintConfig,
) -> Result<InpaintResult<F>> {
    check(model, obs, s, cfg)?;
    let taus = ddim_timesteps(s.steps(), cfg.ddim_steps)?;
    let mut known = Known::new(obs, s, cfg.seed);
    let (mut rng, mut x) = start(obs, cfg.seed);
    let mut calls = CallCounts::default();
    for i in (0..taus.len()).rev() {
        let (t, prev) = (taus[i], if i == 0 { 0 } else { taus[i - 1] });
        let (eps, g) = known.guided_eps(model, &x, t)?;
        calls.forward += 1;
        calls.backward += 1;
        let proposal = ddim_step_with_eps(&x, &eps, t, prev, cfg.ddim_eta, s, &mut rng)?;
        let mut next = descend(proposal, g, cfg.mcg_scale)?;
        known.apply(&mut next, prev)?;
        finite(&next, t)?;
        x = next;
    }
    Ok(InpaintResult { stack: x, calls })
}

/// Runs the sampler selected by `cfg.algorithm`.
pub fn inpaint<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    obs: &Observation<F>,
    s: &NoiseSchedule,
    cfg: &InpaintConfig,
) -> Result<InpaintResult<F>> {
    match cfg.algorithm {
        Algorithm::ScoreSde => score_sde(model, obs, s, cfg),
        Algorithm::Repaint => repaint(model, obs, s, cfg),
        Algorithm::Mcg => mcg(model, obs, s, cfg),
        Algorithm::McgDdim => mcg_ddim(model, obs, s, cfg),
    }
}
