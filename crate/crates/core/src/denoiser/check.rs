use super::{Denoiser, DenoiserConfig};
use crate::ndtensor::gradcheck::{fd_grad, rel_err, weighted_sum, FD_STEP};
use crate::ndtensor::{Stream, StreamId, Tape, Tensor, Var};
use crate::Result;

/// Small f64 U-Net (8x8 input, 2x2 bottleneck) with every parameter moved
/// off its initialisation, so zero heads and unit gains are exercised too.
pub fn perturbed_denoiser(seed: u64) -> Result<Denoiser<f64>> {
    let config = DenoiserConfig {
        in_channels: 10,
        base_width: 8,
        depth: 2,
        time_dim: 16,
    };
    let mut rng = Stream::new(seed, StreamId::Init);
    let mut m = Denoiser::<f64>::init(config, &mut rng)?;
    for p in m.params_mut() {
        let n = rng.normal_tensor::<f64>(p.shape());
        let std = (p.sq_norm() / p.len() as f64).sqrt().max(0.1);
        p.data_mut()
            .iter_mut()
            .zip(n.data())
            .for_each(|(v, z)| *v += 0.3 * std * z);
    }
    Ok(m)
}

fn loss(m: &Denoiser<f64>, t: &mut Tape<f64>, params: &[Var], x: Var) -> Result<Var> {
    let out = m.forward(t, params, x, &[7, 640])?;
    weighted_sum(t, out, 41)
}

/// Relative errors `(input, parameters)` of the full forward pass; the input
/// is checked on every element, the parameters on `per_tensor` random
/// entries of each tensor.
pub fn gradcheck_end_to_end(seed: u64, per_tensor: usize) -> Result<(f64, f64)> {
    let m = perturbed_denoiser(seed)?;
    let mut rng = Stream::new(seed, StreamId::Custom(0));
    let x0 = rng.normal_tensor::<f64>(&[2, 10, 8, 8]);
    let mut tape = Tape::new();
    let params = m.bind(&mut tape, true);
    let xv = tape.leaf(x0.clone());
    let l = loss(&m, &mut tape, &params, xv)?;
    let mut grads = tape.backward(l)?;
    let eval = |m: &Denoiser<f64>, x: &Tensor<f64>| {
        let mut t = Tape::no_grad();
        let ps = m.bind(&mut t, false);
        let xv = t.constant(x.clone());
        let l = loss(m, &mut t, &ps, xv).expect("forward succeeded once");
        t.value(l).item()
    };

    let gx = grads.take_or_zeros(xv, x0.shape())?;
    let input_err = rel_err(gx.data(), &fd_grad(&x0, &|x| eval(&m, x)));

    let (mut ad, mut num) = (Vec::new(), Vec::new());
    for (k, spec) in m.specs().iter().enumerate() {
        let g = grads.take_or_zeros(params[k], &spec.shape)?;
        for _ in 0..per_tensor {
            let i = rng.below(g.len());
            let mut p = m.clone();
            p.params_mut()[k].data_mut()[i] += FD_STEP;
            let mut q = m.clone();
            q.params_mut()[k].data_mut()[i] -= FD_STEP;
            ad.push(g.data()[i]);
            num.push((eval(&p, &x0) - eval(&q, &x0)) / (2.0 * FD_STEP));
        }
    }
    Ok((input_err, rel_err(&ad, &num)))
}
