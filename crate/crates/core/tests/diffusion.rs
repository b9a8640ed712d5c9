use uvdiff::denoiser::EpsModel;
use uvdiff::denoiser::{Denoiser, DenoiserConfig};
use uvdiff::diffusion::{
    ddim_step_with_eps, ddpm_step_with_eps, forward_sample, sample_ddim, sample_ddpm, Checkpoint, NoiseSchedule,
};
use uvdiff::ndtensor::{Stream, StreamId, Tape, Tensor, Var};
use uvdiff::synthdata::make_item;
use uvdiff::Result;

/// Exact noise predictor for data distributed as independent `N(mu, s^2)`.
struct GaussianOracle<'a> {
    s: &'a NoiseSchedule,
    mu: f64,
    var: f64,
}

impl EpsModel<f64> for GaussianOracle<'_> {
    fn channels(&self) -> usize {
        10
    }

    fn size_multiple(&self) -> usize {
        1
    }

    fn predict(&self, x: &Tensor<f64>, t: &[usize]) -> Result<Tensor<f64>> {
        let ab = self.s.alpha_bar(t[0]);
        let k = (1.0 - ab).sqrt() / (ab * self.var + 1.0 - ab);
        Ok(x.map(|v| k * (v - ab.sqrt() * self.mu)))
    }

    fn predict_on(&self, tape: &mut Tape<f64>, x: Var, t: &[usize]) -> Result<Var> {
        let out = self.predict(tape.value(x), t)?;
        Ok(tape.constant(out))
    }
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
}

#[test]
fn forward_marginals_match_closed_form() {
    let s = NoiseSchedule::standard();
    let (quad, _) = make_item(3, 0, 8).unwrap();
    let x0: Tensor<f64> = quad.to_stack();
    let draws = 10_000;
    let mut rng = Stream::new(5, StreamId::Custom(1));
    for t in [10, 500, 1000] {
        let ab = s.alpha_bar(t);
        let mut sum = vec![0.0; x0.len()];
        let mut resid = Vec::with_capacity(draws * x0.len());
        for _ in 0..draws {
            let eps = rng.normal_tensor::<f64>(x0.shape());
            let xt = forward_sample(&x0, t, &eps, &s).unwrap();
            for (i, (&v, &m)) in xt.data().iter().zip(x0.data()).enumerate() {
                sum[i] += v;
                resid.push(v - ab.sqrt() * m);
            }
        }
        let (_, var) = moments(&resid);
        assert!(
            (var / (1.0 - ab) - 1.0).abs() < 0.02,
            "t={t}: variance {var} vs {}",
            1.0 - ab
        );
        let k = x0.len() as f64;
        let mean_err = (sum
            .iter()
            .zip(x0.data())
            .map(|(&a, &m)| (a / draws as f64 - ab.sqrt() * m).powi(2))
            .sum::<f64>()
            / k)
            .sqrt();
        let scale = ((x0.sq_norm() / k) * ab).sqrt().max((1.0 - ab).sqrt());
        assert!(
            mean_err < 0.02 * scale,
            "t={t}: mean rms error {mean_err} vs scale {scale}"
        );
    }
}

/// Output std of a DDIM chain driven by `GaussianOracle` with zero-mean data:
/// every step is linear in `x`, so the variance follows a scalar recursion.
fn ddim_std_oracle(s: &NoiseSchedule, var: f64, n: usize, eta: f64) -> f64 {
    let total = s.steps();
    let taus: Vec<usize> = (1..=n).map(|i| i * total / n).collect();
    let mut v = 1.0;
    for i in (0..n).rev() {
        let (a, ap) = (
            s.alpha_bar(taus[i]),
            if i == 0 { 1.0 } else { s.alpha_bar(taus[i - 1]) },
        );
        let k = (1.0 - a).sqrt() / (a * var + 1.0 - a);
        let c0 = (1.0 - (1.0 - a).sqrt() * k) / a.sqrt();
        let s2 = eta * eta * (1.0 - ap) / (1.0 - a) * (1.0 - a / ap);
        let c = ap.sqrt() * c0 + (1.0 - ap - s2).max(0.0).sqrt() * k;
        v = c * c * v + s2;
    }
    v.sqrt()
}

#[test]
fn samplers_recover_gaussian_data_with_exact_scores() {
    let s = NoiseSchedule::standard();
    let (mu, var) = (0.3, 0.25);
    let oracle = GaussianOracle { s: &s, mu, var };
    let shape = [1, 10, 32, 32];
    let runs: Vec<(&str, Tensor<f64>, f64)> = vec![
        ("ddpm", sample_ddpm(&oracle, &shape, &s, 1).unwrap(), var.sqrt()),
        (
            "ddim full",
            sample_ddim(&oracle, &shape, &s, 1000, 0.0, 1).unwrap(),
            var.sqrt(),
        ),
        (
            "ddim 100 eta 0",
            sample_ddim(&oracle, &shape, &s, 100, 0.0, 1).unwrap(),
            ddim_std_oracle(&s, var, 100, 0.0),
        ),
        (
            "ddim 100 eta 1",
            sample_ddim(&oracle, &shape, &s, 100, 1.0, 1).unwrap(),
            ddim_std_oracle(&s, var, 100, 1.0),
        ),
    ];
    for (name, x, std) in runs {
        let (m, v) = moments(x.data());
        assert!((m - mu).abs() < 0.03, "{name}: mean {m}");
        assert!((v.sqrt() / std - 1.0).abs() < 0.03, "{name}: std {} vs {std}", v.sqrt());
    }
}

#[test]
fn point_mass_chain_lands_on_the_point() {
    struct Point<'a>(&'a NoiseSchedule, Tensor<f64>);
    impl EpsModel<f64> for Point<'_> {
        fn channels(&self) -> usize {
            10
        }
        fn size_multiple(&self) -> usize {
            1
        }
        fn predict(&self, x: &Tensor<f64>, t: &[usize]) -> Result<Tensor<f64>> {
            let ab = self.0.alpha_bar(t[0]);
            x.zip_map(&self.1, "oracle", |v, p| (v - ab.sqrt() * p) / (1.0 - ab).sqrt())
        }
        fn predict_on(&self, tape: &mut Tape<f64>, x: Var, t: &[usize]) -> Result<Var> {
            let out = self.predict(tape.value(x), t)?;
            Ok(tape.constant(out))
        }
    }
    let s = NoiseSchedule::standard();
    let (quad, _) = make_item(4, 0, 8).unwrap();
    let x0: Tensor<f64> = quad.to_stack();
    let oracle = Point(&s, x0.clone());
    for x in [
        sample_ddpm(&oracle, x0.shape(), &s, 2).unwrap(),
        sample_ddim(&oracle, x0.shape(), &s, 50, 0.0, 2).unwrap(),
    ] {
        let err = x
            .data()
            .iter()
            .zip(x0.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "max error {err}");
    }
}

struct Zero;

impl EpsModel<f64> for Zero {
    fn channels(&self) -> usize {
        10
    }
    fn size_multiple(&self) -> usize {
        1
    }
    fn predict(&self, x: &Tensor<f64>, _: &[usize]) -> Result<Tensor<f64>> {
        Ok(Tensor::zeros(x.shape()))
    }
    fn predict_on(&self, tape: &mut Tape<f64>, x: Var, t: &[usize]) -> Result<Var> {
        let out = self.predict(tape.value(x), t)?;
        Ok(tape.constant(out))
    }
}

#[test]
fn clip_is_inactive_inside_the_data_range() {
    let plain = NoiseSchedule::standard();
    let clipped = plain.clone().with_x0_clip(Some(1.0)).unwrap();
    let (quad, _) = make_item(6, 0, 8).unwrap();
    let x0: Tensor<f64> = quad.to_stack::<f64>().map(|v| 0.95 * v);
    let mut rng = Stream::new(2, StreamId::Custom(2));
    for t in [1, 2, 40, 600, 1000] {
        let eps = rng.normal_tensor::<f64>(x0.shape());
        let xt = forward_sample(&x0, t, &eps, &plain).unwrap();
        let a = ddpm_step_with_eps(&xt, &eps, t, &plain, &mut Stream::new(1, StreamId::Reverse)).unwrap();
        let b = ddpm_step_with_eps(&xt, &eps, t, &clipped, &mut Stream::new(1, StreamId::Reverse)).unwrap();
        let err = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "ddpm t={t}: {err}");
        let a = ddim_step_with_eps(&xt, &eps, t, t / 2, 0.5, &plain, &mut Stream::new(1, StreamId::Reverse)).unwrap();
        let b = ddim_step_with_eps(
            &xt,
            &eps,
            t,
            t / 2,
            0.5,
            &clipped,
            &mut Stream::new(1, StreamId::Reverse),
        )
        .unwrap();
        assert_eq!(a, b, "ddim t={t}");
    }
}

#[test]
fn clip_bounds_a_chain_driven_by_a_poor_model() {
    let plain = NoiseSchedule::standard();
    let clipped = plain.clone().with_x0_clip(Some(1.0)).unwrap();
    let shape = [1, 10, 8, 8];
    let max_abs = |x: &Tensor<f64>| x.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max_abs(&sample_ddpm(&Zero, &shape, &plain, 0).unwrap()) > 10.0);
    assert!(max_abs(&sample_ddpm(&Zero, &shape, &clipped, 0).unwrap()) <= 1.0 + 1e-12);
    assert!(max_abs(&sample_ddim(&Zero, &shape, &clipped, 50, 0.0, 0).unwrap()) <= 1.0 + 1e-12);
}

#[test]
fn checkpoint_keeps_the_clip_setting() {
    let config = DenoiserConfig {
        in_channels: 10,
        base_width: 8,
        depth: 1,
        time_dim: 16,
    };
    let model = Denoiser::init(config, &mut Stream::new(0, StreamId::Init)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for clip in [None, Some(1.0), Some(2.5)] {
        let ck = Checkpoint {
            model: model.clone(),
            schedule: NoiseSchedule::linear(50, 1e-4, 0.02)
                .unwrap()
                .with_x0_clip(clip)
                .unwrap(),
            step: 3,
            seed: 4,
            final_loss: Some(0.5),
        };
        let path = dir.path().join("c.ckpt");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }
    assert!(NoiseSchedule::standard().with_x0_clip(Some(0.0)).is_err());
}
