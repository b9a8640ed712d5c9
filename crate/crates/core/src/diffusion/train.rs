use std::path::PathBuf;

use log::info;

use super::{forward_sample, Checkpoint, NoiseSchedule};
use crate::denoiser::{Denoiser, EpsModel};
use crate::ndtensor::{Real, Stream, StreamId, Tape, Tensor, Var};
use crate::{Error, Result};

/// In-memory training set: `N x C x H x W` items in the `[-1, 1]` range.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F: Real = f32> {
    items: Tensor<F>,
}

impl<F: Real> Dataset<F> {
    pub fn new(items: Tensor<F>) -> Result<Self> {
        if items.rank() != 4 {
            return Err(Error::invalid_shape("dataset", format!("{:?}", items.shape())));
        }
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn item_shape(&self) -> [usize; 3] {
        let s = self.items.shape();
        [s[1], s[2], s[3]]
    }

    pub fn items(&self) -> &Tensor<F> {
        &self.items
    }

    /// Item `i` as a `1 x C x H x W` tensor.
    pub fn item(&self, i: usize) -> Tensor<F> {
        self.items.batch_item(i).expect("index in range")
    }
}

fn mse_on_tape<F: Real>(tape: &mut Tape<F>, pred: Var, target: Tensor<F>) -> Result<Var> {
    let target = tape.constant(target);
    let d = tape.sub(target, pred)?;
    let d2 = tape.mul(d, d)?;
    tape.mean(d2)
}

fn noised_batch<F: Real>(x0: &Tensor<F>, t: &[usize], eps: &Tensor<F>, s: &NoiseSchedule) -> Result<Tensor<F>> {
    let b = x0.shape()[0];
    if t.len() != b && t.len() != 1 {
        return Err(Error::invalid_shape(
            "training_loss",
            format!("{} timesteps for batch {b}", t.len()),
        ));
    }
    if x0.shape() != eps.shape() {
        return Err(Error::shape("training_loss", x0.shape(), eps.shape()));
    }
    let items = (0..b)
        .map(|i| {
            let ti = if t.len() == 1 { t[0] } else { t[i] };
            forward_sample(&x0.batch_item(i)?, ti, &eps.batch_item(i)?, s)
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack_batch(&items)
}

/// `mean((eps - eps_theta(x_t, t))^2)` with `x_t` from the forward process.
pub fn training_loss<F: Real, M: EpsModel<F> + ?Sized>(
    model: &M,
    x0: &Tensor<F>,
    t: &[usize],
    eps: &Tensor<F>,
    s: &NoiseSchedule,
) -> Result<F> {
    for &ti in t {
        s.check(ti)?;
    }
    let x_t = noised_batch(x0, t, eps, s)?;
    let mut tape = Tape::no_grad();
    let xv = tape.constant(x_t);
    let pred = model.predict_on(&mut tape, xv, t)?;
    let l = mse_on_tape(&mut tape, pred, eps.clone())?;
    Ok(tape.value(l).item())
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub log_every: usize,
    /// Write the running checkpoint every this many steps (0 = never).
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch: 8,
            lr: 1e-4,
            seed: 0,
            grad_clip: Some(1.0),
            log_every: 100,
            checkpoint_every: 0,
            checkpoint_path: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Loss of every optimizer step.
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Mean of the losses in `range` of steps.
    pub fn window_mean(&self, range: std::ops::Range<usize>) -> f64 {
        let w = &self.losses[range];
        w.iter().sum::<f64>() / w.len() as f64
    }
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &[Tensor<f32>]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [Tensor<f32>], grads: &[Tensor<f32>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        let step_size = (lr * c2.sqrt() / c1) as f32;
        let (b1, b2, eps) = (Self::B1 as f32, Self::B2 as f32, (Self::EPS * c2.sqrt()) as f32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                *w -= step_size * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

/// Adam on the noise-prediction loss with per-example uniform timesteps.
pub fn train(
    mut model: Denoiser<f32>,
    data: &Dataset<f32>,
    s: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, TrainReport)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.item_shape()[0] != model.config().in_channels {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} channels, model expects {}",
            data.item_shape()[0],
            model.config().in_channels
        )));
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidArgument("batch must be >= 1".into()));
    }
    let mut rng = Stream::new(cfg.seed, StreamId::Training);
    let mut adam = Adam::new(model.params());
    let mut report = TrainReport::default();
    let [c, h, w] = data.item_shape();
    let shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.shape().to_vec()).collect();

    let checkpoint = |model: &Denoiser<f32>, step: usize, report: &TrainReport| Checkpoint {
        model: model.clone(),
        schedule: s.clone(),
        step,
        seed: cfg.seed,
        final_loss: (!report.losses.is_empty()).then(|| {
            let n = report.losses.len();
            report.window_mean(n.saturating_sub(cfg.log_every.max(1))..n)
        }),
    };

    for step in 0..cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.below(data.len())).collect();
        let ts: Vec<usize> = (0..cfg.batch).map(|_| 1 + rng.below(s.steps())).collect();
        let eps = rng.normal_tensor::<f32>(&[cfg.batch, c, h, w]);
        let x0 = Tensor::stack_batch(&idx.iter().map(|&i| data.item(i)).collect::<Vec<_>>())?;
        let x_t = noised_batch(&x0, &ts, &eps, s)?;

        let mut tape = Tape::new();
        let pvars = model.bind(&mut tape, true);
        let xv = tape.constant(x_t);
        let pred = model.forward(&mut tape, &pvars, xv, &ts)?;
        let loss = mse_on_tape(&mut tape, pred, eps)?;
        let lval = tape.value(loss).item() as f64;
        if !lval.is_finite() {
            log::error!("training loss became {lval} at step {step}");
            return Err(Error::NonFiniteLoss(step));
        }
        let mut grads = tape.backward(loss)?;
        let mut gs = pvars
            .iter()
            .zip(&shapes)
            .map(|(&v, sh)| grads.take_or_zeros(v, sh))
            .collect::<Result<Vec<_>>>()?;
        drop(tape);
        if let Some(clip) = cfg.grad_clip {
            let norm = gs.iter().map(|g| g.sq_norm() as f64).sum::<f64>().sqrt();
            if norm > clip {
                let k = (clip / norm) as f32;
                for g in &mut gs {
                    g.data_mut().iter_mut().for_each(|v| *v *= k);
                }
            }
        }
        adam.update(model.params_mut(), &gs, cfg.lr);
        report.losses.push(lval);

        let done = step + 1;
        if cfg.log_every > 0 && done % cfg.log_every == 0 {
            let n = report.losses.len();
            info!("step {done}: loss {:.5}", report.window_mean(n - cfg.log_every..n));
        }
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
            if let Some(path) = &cfg.checkpoint_path {
                checkpoint(&model, done, &report).save(path)?;
            }
        }
    }
    let ck = checkpoint(&model, cfg.steps, &report);
    Ok((ck, report))
}
