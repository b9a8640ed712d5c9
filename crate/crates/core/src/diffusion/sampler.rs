use super::NoiseSchedule;
use crate::denoiser::EpsModel;
use crate::ndtensor::{Real, Stream, StreamId, Tensor};
use crate::{Error, Result};

/// `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`. `t = 0` returns `x0`.
pub fn forward_sample<F: Real>(x0: &Tensor<F>, t: usize, eps: &Tensor<F>, s: &NoiseSchedule) -> Result<Tensor<F>> {
    if t != 0 {
        s.check(t)?;
    }
    let ab = s.alpha_bar(t);
    let (a, b) = (F::from_f64c(ab.sqrt()), F::from_f64c((1.0 - ab).sqrt()));
    x0.zip_map(eps, "forward_sample", |x, e| a * x + b * e)
}

/// Clean-sample estimate `(x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)`.
pub fn predict_x0<F: Real>(x_t: &Tensor<F>, eps_hat: &Tensor<F>, t: usize, s: &NoiseSchedule) -> Result<Tensor<F>> {
    s.check(t)?;
    let ab = s.alpha_bar(t);
    let (c, d) = (F::from_f64c((1.0 - ab).sqrt()), F::from_f64c(ab.sqrt()));
    x_t.zip_map(eps_hat, "predict_x0", |x, e| (x - c * e) / d)
}

fn clipped_x0<F: Real>(x_t: &Tensor<F>, eps: &Tensor<F>, t: usize, s: &NoiseSchedule) -> Result<Tensor<F>> {
    let x0 = predict_x0(x_t, eps, t, s)?;
    Ok(match s.x0_clip() {
        Some(c) => {
            let c = F::from_f64c(c);
            x0.map(|v| v.max(-c).min(c))
        }
        None => x0,
    })
}

/// Ancestral step from a given noise prediction: the posterior mean plus
/// `sqrt(beta_t) z`, with no noise at `t = 1`. Without an x0 clip the mean is
/// written directly in terms of `eps`; with one it is taken from the clamped
/// clean-sample estimate.
pub fn ddpm_step_with_eps<F: Real>(
    x_t: &Tensor<F>,
    eps: &Tensor<F>,
    t: usize,
    s: &NoiseSchedule,
    rng: &mut Stream,
) -> Result<Tensor<F>> {
    s.check(t)?;
    let mean = if s.x0_clip().is_some() {
        let (ab, ab_prev) = (s.alpha_bar(t), s.alpha_bar(t - 1));
        let c0 = F::from_f64c(ab_prev.sqrt() * s.beta(t) / (1.0 - ab));
        let ct = F::from_f64c(s.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab));
        clipped_x0(x_t, eps, t, s)?.zip_map(x_t, "ddpm_step", |x0, x| c0 * x0 + ct * x)?
    } else {
        let inv_sqrt_alpha = F::from_f64c(1.0 / s.alpha(t).sqrt());
        let coef = F::from_f64c(s.beta(t) / (1.0 - s.alpha_bar(t)).sqrt());
        x_t.zip_map(eps, "ddpm_step", |x, e| (x - coef * e) * inv_sqrt_alpha)?
    };
    if t == 1 {
        return Ok(mean);
    }
    let sigma = F::from_f64c(s.beta(t).sqrt());
    let z = rng.normal_tensor::<F>(x_t.shape());
    mean.zip_map(&z, "ddpm_step", |m, n| m + sigma * n)
}

pub fn ddpm_step<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    x_t: &Tensor<F>,
    t: usize,
    s: &NoiseSchedule,
    rng: &mut Stream,
) -> Result<Tensor<F>> {
    s.check(t)?;
    let eps = model.predict(x_t, &[t])?;
    ddpm_step_with_eps(x_t, &eps, t, s, rng)
}

/// Generalised DDIM update from `t` to `t_prev < t` (`t_prev = 0` is the
/// clean sample). `eta = 0` is deterministic; `eta = 1` uses the DDPM
/// posterior variance.
pub fn ddim_step_with_eps<F: Real>(
    x_t: &Tensor<F>,
    eps: &Tensor<F>,
    t: usize,
    t_prev: usize,
    eta: f64,
    s: &NoiseSchedule,
    rng: &mut Stream,
) -> Result<Tensor<F>> {
    s.check(t)?;
    if t_prev >= t {
        return Err(Error::InvalidArgument(format!(
            "DDIM needs t_prev < t, got {t_prev} >= {t}"
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("eta {eta} outside [0, 1]")));
    }
    let (ab, ab_prev) = (s.alpha_bar(t), s.alpha_bar(t_prev));
    let var = (1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev);
    let sigma = eta * var.max(0.0).sqrt();
    let x0 = clipped_x0(x_t, eps, t, s)?;
    let a = F::from_f64c(ab_prev.sqrt());
    let d = F::from_f64c((1.0 - ab_prev - sigma * sigma).max(0.0).sqrt());
    let out = x0.zip_map(eps, "ddim_step", |x, e| a * x + d * e)?;
    if sigma > 0.0 {
        let sg = F::from_f64c(sigma);
        let z = rng.normal_tensor::<F>(x_t.shape());
        return out.zip_map(&z, "ddim_step", |o, n| o + sg * n);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn ddim_step<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    x_t: &Tensor<F>,
    t: usize,
    t_prev: usize,
    eta: f64,
    s: &NoiseSchedule,
    rng: &mut Stream,
) -> Result<Tensor<F>> {
    s.check(t)?;
    let eps = model.predict(x_t, &[t])?;
    ddim_step_with_eps(x_t, &eps, t, t_prev, eta, s, rng)
}

/// Uniform subsequence `tau_i = floor(i T / N)`, `i = 1..=N`, ascending.
pub fn ddim_timesteps(total: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > total {
        return Err(Error::InvalidArgument(format!(
            "DDIM length {n} must be in 1..={total}"
        )));
    }
    Ok((1..=n).map(|i| i * total / n).collect())
}

/// Unconditional ancestral sampling from `x_T ~ N(0, I)` drawn on the
/// `Reverse` stream of `seed`.
pub fn sample_ddpm<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    shape: &[usize],
    s: &NoiseSchedule,
    seed: u64,
) -> Result<Tensor<F>> {
    let mut rng = Stream::new(seed, StreamId::Reverse);
    let mut x = rng.normal_tensor::<F>(shape);
    for t in (1..=s.steps()).rev() {
        x = ddpm_step(model, &x, t, s, &mut rng)?;
        if !x.all_finite() {
            return Err(Error::NonFiniteState(t));
        }
    }
    Ok(x)
}

/// Unconditional DDIM sampling over the uniform `n`-step subsequence.
pub fn sample_ddim<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    shape: &[usize],
    s: &NoiseSchedule,
    n: usize,
    eta: f64,
    seed: u64,
) -> Result<Tensor<F>> {
    let taus = ddim_timesteps(s.steps(), n)?;
    let mut rng = Stream::new(seed, StreamId::Reverse);
    let mut x = rng.normal_tensor::<F>(shape);
    for i in (0..taus.len()).rev() {
        let prev = if i == 0 { 0 } else { taus[i - 1] };
        x = ddim_step(model, &x, taus[i], prev, eta, s, &mut rng)?;
        if !x.all_finite() {
            return Err(Error::NonFiniteState(taus[i]));
        }
    }
    Ok(x)
}
