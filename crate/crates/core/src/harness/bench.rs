use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{psnr_capped, ssim};
use super::report::{Report, RunRecord};
use crate::denoiser::EpsModel;
use crate::diffusion::Checkpoint;
use crate::inpaint::{inpaint, Algorithm, InpaintConfig, Observation};
use crate::ndtensor::{Stream, StreamId};
use crate::synthdata::{make_item, ChannelLayout, LightSpec, MapKind, ReflectanceQuad};
use crate::uvgeom::{
    fit_morphable, project_landmarks, render, unwrap, FitResult, Image, MorphableModel, Pose, SyntheticModelConfig,
    Unwrapped,
};
use crate::{Error, Result};

/// The frozen sampler comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub seeds: Vec<u64>,
    /// Generator seed for the held-out quads (distinct from training data).
    pub dataset_seed: u64,
    /// Seed of the synthetic morphable model.
    pub model_seed: u64,
    /// `(yaw, pitch, roll)` in degrees, cycled over the seeds.
    pub poses: Vec<[f64; 3]>,
    pub algorithms: Vec<Algorithm>,
    pub resolution: usize,
    pub image_size: usize,
    /// Standard deviation of the landmark detections in pixels.
    pub landmark_noise: f64,
    pub ridge: f64,
    pub ddim_steps: usize,
    pub ddim_eta: f64,
    pub repaint_n: usize,
    pub mcg_scale: f64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

pub const STANDARD_POSES: [[f64; 3]; 3] = [[0.0, 0.0, 0.0], [55.0, -10.0, 0.0], [-85.0, 12.0, 5.0]];

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            seeds: (0..20).map(|i| 1009 + 7919 * i).collect(),
            dataset_seed: 0x5eed_0be7,
            model_seed: 0,
            poses: STANDARD_POSES.to_vec(),
            algorithms: Algorithm::ALL.to_vec(),
            resolution: 32,
            image_size: 128,
            landmark_noise: 0.5,
            ridge: 1e-3,
            ddim_steps: 200,
            ddim_eta: 0.0,
            repaint_n: 10,
            mcg_scale: 1.0,
            threads: 1,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() || s.is_empty() {
            return Err(Error::InvalidArgument(
                "benchmark seeds must be distinct and non-empty".into(),
            ));
        }
        if self.poses.is_empty() || self.algorithms.is_empty() {
            return Err(Error::InvalidArgument("benchmark needs poses and algorithms".into()));
        }
        Ok(())
    }

    pub fn pose(&self, index: usize) -> Pose {
        let [y, p, r] = self.poses[index % self.poses.len()];
        Pose::new(y, p, r)
    }

    pub fn inpaint_config(&self, algorithm: Algorithm, seed: u64) -> InpaintConfig {
        InpaintConfig {
            algorithm,
            ddim_steps: self.ddim_steps,
            ddim_eta: self.ddim_eta,
            repaint_n: self.repaint_n,
            mcg_scale: self.mcg_scale,
            seed,
        }
    }

    pub fn morphable_model(&self) -> Result<MorphableModel> {
        MorphableModel::synthetic(
            &mut Stream::new(self.model_seed, StreamId::Custom(10)),
            &SyntheticModelConfig::default(),
        )
    }
}

/// One benchmark input: ground truth, its rendering and the recovered
/// observation.
#[derive(Debug, Clone)]
pub struct Case {
    pub index: usize,
    pub seed: u64,
    pub pose: usize,
    pub truth: ReflectanceQuad,
    pub light: LightSpec,
    pub image: Image,
    pub landmarks: Vec<[f64; 2]>,
    pub fit: FitResult,
    pub unwrapped: Unwrapped,
    pub observation: Observation<f32>,
}

/// Renders the `index`-th held-out quad on a random face and recovers its
/// partial texture through landmark fitting and unwrapping.
pub fn prepare_case(spec: &BenchmarkSpec, model: &MorphableModel, index: usize) -> Result<Case> {
    let seed = spec.seeds[index];
    let (truth, light) = make_item(spec.dataset_seed, index, spec.resolution)?;
    let mut rng = Stream::new(seed, StreamId::Custom(11));
    let (ps, pe) = model.sample_coefficients(&mut rng, 1.5, 0.8);
    let mesh = model.instantiate(&ps, &pe)?;
    let pose = index % spec.poses.len();
    let camera = spec.pose(pose).camera(spec.image_size, spec.image_size);
    let image = render(
        &mesh,
        &camera,
        &truth,
        &light,
        spec.image_size,
        spec.image_size,
        [0.0; 3],
    )?;
    let mut landmarks = project_landmarks(&mesh, &camera, &model.landmarks);
    for p in &mut landmarks {
        p[0] += spec.landmark_noise * rng.normal();
        p[1] += spec.landmark_noise * rng.normal();
    }
    let fit = fit_morphable(&landmarks, model, spec.ridge)?;
    let fitted = model.instantiate(&fit.p_s, &fit.p_e)?;
    let unwrapped = unwrap(&image, &fitted, &fit.camera, spec.resolution)?;
    let observation = unwrapped.observation(truth.layout)?;
    Ok(Case {
        index,
        seed,
        pose,
        truth,
        light,
        image,
        landmarks,
        fit,
        unwrapped,
        observation,
    })
}

/// `(PSNR, SSIM)` of every map of `pred` against `truth`.
pub fn score_maps(pred: &ReflectanceQuad, truth: &ReflectanceQuad) -> Result<Vec<(MapKind, f64, f64)>> {
    MapKind::ALL
        .iter()
        .map(|&m| {
            let (c, a) = pred.map_image(m);
            let (_, b) = truth.map_image(m);
            let r = truth.resolution();
            let p = psnr_capped(&a, &b, 1.0)?;
            let s = ssim(&Image::new(c, r, r, a)?, &Image::new(c, r, r, b)?)?;
            Ok((m, p, s))
        })
        .collect()
}

pub fn run_case<M: EpsModel<f32> + ?Sized>(
    spec: &BenchmarkSpec,
    model: &M,
    checkpoint: &Checkpoint,
    case: &Case,
    algorithm: Algorithm,
) -> Result<RunRecord> {
    let cfg = spec.inpaint_config(algorithm, case.seed);
    let start = Instant::now();
    let out = inpaint(model, &case.observation, &checkpoint.schedule, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let expected = cfg.expected_calls(checkpoint.schedule.steps());
    if out.calls != expected {
        return Err(Error::InvalidArgument(format!(
            "{algorithm}: {:?} model calls, expected {expected:?}",
            out.calls
        )));
    }
    let pred = out.quad(case.truth.layout)?;
    let scores = score_maps(&pred, &case.truth)?;
    info!(
        "seed {} pose {} {algorithm}: diffuse {:.2} dB in {wall:.1}s",
        case.seed, case.pose, scores[1].1
    );
    Ok(RunRecord {
        seed: case.seed,
        pose: case.pose,
        algorithm,
        mask_fraction: case.observation.mask.fraction(),
        observation_hash: format!("{:016x}", case.observation.fingerprint()),
        psnr: scores.iter().map(|&(m, p, _)| (m.name().to_string(), p)).collect(),
        ssim: scores.iter().map(|&(m, _, s)| (m.name().to_string(), s)).collect(),
        wall_seconds: wall,
        forward_calls: out.calls.forward,
        backward_calls: out.calls.backward,
    })
}

/// Runs every algorithm on every seed of `spec` with the checkpoint's
/// denoiser and schedule. `indices` restricts the seeds (all when None).
pub fn run_benchmark_subset(
    spec: &BenchmarkSpec,
    checkpoint: &Checkpoint,
    indices: Option<&[usize]>,
) -> Result<Report> {
    spec.validate()?;
    let layout = ChannelLayout::default();
    let denoiser = &checkpoint.model;
    if denoiser.channels() != layout.total() {
        return Err(Error::InvalidArgument(format!(
            "checkpoint has {} channels, benchmark layout {}",
            denoiser.channels(),
            layout.total()
        )));
    }
    if spec.resolution % denoiser.size_multiple() != 0 {
        return Err(Error::InvalidArgument(format!(
            "resolution {} is not a multiple of {}",
            spec.resolution,
            denoiser.size_multiple()
        )));
    }
    let model = spec.morphable_model()?;
    let all: Vec<usize> = (0..spec.seeds.len()).collect();
    let indices = indices.unwrap_or(&all);
    let cases = indices
        .iter()
        .map(|&i| prepare_case(spec, &model, i))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(&Case, Algorithm)> = cases
        .iter()
        .flat_map(|c| spec.algorithms.iter().map(move |&a| (c, a)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let records = pool.install(|| {
        jobs.par_iter()
            .map(|&(case, alg)| run_case(spec, denoiser, checkpoint, case, alg))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Report::new(spec.clone(), checkpoint, records))
}

pub fn run_benchmark(spec: &BenchmarkSpec, checkpoint: &Checkpoint) -> Result<Report> {
    run_benchmark_subset(spec, checkpoint, None)
}
