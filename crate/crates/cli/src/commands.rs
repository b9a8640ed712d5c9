use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use log::info;

use uvdiff::denoiser::{Denoiser, DenoiserConfig, EpsModel};
use uvdiff::diffusion::{self, Checkpoint, NoiseSchedule, TrainConfig};
use uvdiff::harness::{self, BenchmarkSpec, Report};
use uvdiff::inpaint::{self as completion, Algorithm, InpaintConfig, Observation, VisibilityMask};
use uvdiff::ndtensor::{read_ndt, write_ndt, Stream, StreamId, Tensor};
use uvdiff::synthdata::{self, ChannelLayout, MapKind, ReflectanceQuad};
use uvdiff::uvgeom::{self, Image, MorphableModel, ReconstructConfig};

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 2048)]
    count: usize,
    #[arg(long, default_value_t = 32)]
    resolution: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let d = synthdata::make_dataset(a.count, a.resolution, a.seed)?;
    synthdata::write_dataset(&a.out, &d).with_context(|| format!("writing {}", a.out.display()))?;
    info!(
        "wrote {} items at {}x{} to {}",
        d.len(),
        a.resolution,
        a.resolution,
        a.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20000)]
    steps: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    base_width: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 64)]
    time_dim: usize,
    #[arg(long, default_value_t = 1000)]
    timesteps: usize,
    #[arg(long, default_value_t = 1e-4)]
    beta_start: f64,
    #[arg(long, default_value_t = 0.02)]
    beta_end: f64,
    /// Sampling clamp on the clean-sample estimate; 0 disables.
    #[arg(long, default_value_t = 1.0)]
    x0_clip: f64,
    /// Global gradient-norm clip; 0 disables.
    #[arg(long, default_value_t = 1.0)]
    grad_clip: f64,
    #[arg(long, default_value_t = 100)]
    log_every: usize,
    #[arg(long, default_value_t = 1000)]
    checkpoint_every: usize,
    /// Optional CSV of per-step losses.
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let data = synthdata::read_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let schedule = NoiseSchedule::linear(a.timesteps, a.beta_start, a.beta_end)?
        .with_x0_clip((a.x0_clip > 0.0).then_some(a.x0_clip))?;
    let config = DenoiserConfig {
        in_channels: data.layout.total(),
        base_width: a.base_width,
        depth: a.depth,
        time_dim: a.time_dim,
    };
    if data.resolution % config.size_multiple() != 0 {
        bail!(
            "resolution {} is not a multiple of {}",
            data.resolution,
            config.size_multiple()
        );
    }
    let model = Denoiser::init(config, &mut Stream::new(a.seed, StreamId::Init))?;
    info!("denoiser with {} parameters, {} items", model.param_count(), data.len());
    let cfg = TrainConfig {
        steps: a.steps,
        batch: a.batch,
        lr: a.lr,
        seed: a.seed,
        grad_clip: (a.grad_clip > 0.0).then_some(a.grad_clip),
        log_every: a.log_every,
        checkpoint_every: a.checkpoint_every,
        checkpoint_path: Some(a.out.clone()),
    };
    let (ck, report) = diffusion::train(model, &data.to_dataset()?, &schedule, &cfg)?;
    ck.save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(path) = &a.loss_log {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "step,loss")?;
        for (i, l) in report.losses.iter().enumerate() {
            writeln!(f, "{},{l}", i + 1)?;
        }
    }
    info!("final loss {:.5}", ck.final_loss.unwrap_or(f64::NAN));
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn check_model(ck: &Checkpoint, layout: ChannelLayout, resolution: usize) -> Result<()> {
    if ck.model.channels() != layout.total() {
        bail!(
            "checkpoint has {} channels, layout {} needs {}",
            ck.model.channels(),
            layout.describe(),
            layout.total()
        );
    }
    if resolution % ck.model.size_multiple() != 0 {
        bail!(
            "resolution {resolution} is not a multiple of {}",
            ck.model.size_multiple()
        );
    }
    Ok(())
}

/// Writes `<prefix>texture.png`, `diffuse`, `specular` and `normal` into `dir`.
fn write_maps(dir: &Path, prefix: &str, quad: &ReflectanceQuad) -> Result<()> {
    let r = quad.resolution();
    for m in MapKind::ALL {
        let (c, data) = quad.map_image(m);
        let path = dir.join(format!("{prefix}{}.png", m.name()));
        Image::new(c, r, r, data)?
            .save_png(&path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn write_stack(path: &Path, t: &Tensor<f32>) -> Result<()> {
    write_ndt(path, t).with_context(|| format!("writing {}", path.display()))
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 32)]
    resolution: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reverse steps: the full schedule when 0, otherwise a DDIM subsequence.
    #[arg(long, default_value_t = 0)]
    steps: usize,
    #[arg(long, default_value_t = 0.0)]
    ddim_eta: f64,
}

pub fn sample(a: SampleArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let layout = ChannelLayout::default();
    check_model(&ck, layout, a.resolution)?;
    if a.count == 0 {
        bail!("count must be >= 1");
    }
    std::fs::create_dir_all(&a.out)?;
    let shape = [1, layout.total(), a.resolution, a.resolution];
    let mut items = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let seed = a.seed.wrapping_add(i as u64);
        let x = if a.steps == 0 {
            diffusion::sample_ddpm(&ck.model, &shape, &ck.schedule, seed)?
        } else {
            diffusion::sample_ddim(&ck.model, &shape, &ck.schedule, a.steps, a.ddim_eta, seed)?
        };
        write_maps(
            &a.out,
            &format!("sample_{i:03}_"),
            &ReflectanceQuad::from_stack(&x, layout)?,
        )?;
        info!("sample {i} done (seed {seed})");
        items.push(x);
    }
    write_stack(&a.out.join("samples.ndt"), &Tensor::stack_batch(&items)?)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct SamplerArgs {
    #[arg(long, default_value = "mcg")]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    ddim_steps: usize,
    #[arg(long, default_value_t = 0.0)]
    ddim_eta: f64,
    #[arg(long, default_value_t = 10)]
    repaint_n: usize,
    #[arg(long, default_value_t = 1.0)]
    mcg_scale: f64,
}

impl SamplerArgs {
    fn config(&self) -> InpaintConfig {
        InpaintConfig {
            algorithm: self.algorithm,
            ddim_steps: self.ddim_steps,
            ddim_eta: self.ddim_eta,
            repaint_n: self.repaint_n,
            mcg_scale: self.mcg_scale,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
pub struct InpaintArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Partial UV texture (RGB PNG).
    #[arg(long)]
    texture: PathBuf,
    /// Visibility mask PNG; texels brighter than half are observed.
    #[arg(long)]
    mask: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
}

fn load_mask(path: &Path) -> Result<VisibilityMask> {
    let img = Image::load_png(path).with_context(|| format!("reading {}", path.display()))?;
    let px = img.height * img.width;
    let data = (0..px)
        .map(|i| {
            let v = (0..img.channels).map(|c| img.data[c * px + i]).sum::<f64>() / img.channels as f64;
            (v > 0.5) as u8
        })
        .collect();
    Ok(VisibilityMask::new(img.height, img.width, data)?)
}

pub fn inpaint(a: InpaintArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let layout = ChannelLayout::default();
    let tex = Image::load_png(&a.texture).with_context(|| format!("reading {}", a.texture.display()))?;
    let mask = load_mask(&a.mask)?;
    if tex.channels != 3 || tex.height != mask.height() || tex.width != mask.width() || tex.height != tex.width {
        bail!(
            "texture is {}x{}x{}, mask {}x{}; need a square RGB texture matching the mask",
            tex.channels,
            tex.height,
            tex.width,
            mask.height(),
            mask.width()
        );
    }
    check_model(&ck, layout, tex.height)?;
    let obs = Observation::<f32>::from_texture(layout, &tex.data, mask)?;
    let cfg = a.sampler.config();
    let out = completion::inpaint(&ck.model, &obs, &ck.schedule, &cfg)?;
    std::fs::create_dir_all(&a.out)?;
    write_stack(&a.out.join("stack.ndt"), &out.stack)?;
    write_maps(&a.out, "", &out.quad(layout)?)?;
    info!(
        "{}: {} forward and {} backward passes",
        cfg.algorithm, out.calls.forward, out.calls.backward
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Rendered face (PNG).
    #[arg(long)]
    image: PathBuf,
    /// `L x 2` tensor of `(col, row)` landmark detections.
    #[arg(long)]
    landmarks: PathBuf,
    /// Morphable model archive; the synthetic model of `model_seed` when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    #[arg(long, default_value_t = 32)]
    resolution: usize,
    #[arg(long, default_value_t = 1e-3)]
    ridge: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
}

fn morphable(path: Option<&Path>, seed: u64) -> Result<MorphableModel> {
    match path {
        Some(p) => MorphableModel::load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(BenchmarkSpec {
            model_seed: seed,
            ..BenchmarkSpec::default()
        }
        .morphable_model()?),
    }
}

pub fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let layout = ChannelLayout::default();
    check_model(&ck, layout, a.resolution)?;
    let image = Image::load_png(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
    let lm: Tensor<f64> = read_ndt(&a.landmarks).with_context(|| format!("reading {}", a.landmarks.display()))?;
    if lm.rank() != 2 || lm.shape()[1] != 2 {
        bail!("landmarks must be an L x 2 tensor, got {:?}", lm.shape());
    }
    let landmarks: Vec<[f64; 2]> = lm.data().chunks_exact(2).map(|p| [p[0], p[1]]).collect();
    let model = morphable(a.model.as_deref(), a.model_seed)?;
    let cfg = ReconstructConfig {
        resolution: a.resolution,
        ridge: a.ridge,
        layout,
        inpaint: a.sampler.config(),
    };
    let rec = uvgeom::reconstruct(&image, &landmarks, &model, &ck.model, &ck.schedule, &cfg)?;
    std::fs::create_dir_all(&a.out)?;
    write_stack(&a.out.join("stack.ndt"), &rec.result.stack)?;
    write_maps(&a.out, "", &rec.quad)?;
    let r = a.resolution;
    let mask: Vec<f64> = rec.unwrapped.mask.data().iter().map(|&v| v as f64).collect();
    Image::new(1, r, r, mask)?.save_png(a.out.join("mask.png"))?;
    rec.unwrapped.texture_image().save_png(a.out.join("unwrapped.png"))?;
    rec.mesh.save_obj(a.out.join("mesh.obj"))?;
    info!(
        "fit residual {:.4} px after {} iterations, {:.1}% of the texture visible",
        rec.fit.residual,
        rec.fit.history.len(),
        100.0 * rec.unwrapped.mask.fraction()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Report path stem; `.txt` and `.json` are appended.
    #[arg(long, default_value = "report")]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    num_seeds: usize,
    /// Comma-separated seed indices to run (all when absent).
    #[arg(long, value_delimiter = ',')]
    indices: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', default_value = "score_sde,repaint,mcg,mcg_ddim")]
    algorithms: Vec<Algorithm>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 32)]
    resolution: usize,
    #[arg(long, default_value_t = 128)]
    image_size: usize,
    #[arg(long, default_value_t = 0.5)]
    landmark_noise: f64,
    #[arg(long, default_value_t = 1e-3)]
    ridge: f64,
    #[arg(long, default_value_t = 200)]
    ddim_steps: usize,
    #[arg(long, default_value_t = 0.0)]
    ddim_eta: f64,
    #[arg(long, default_value_t = 10)]
    repaint_n: usize,
    #[arg(long, default_value_t = 1.0)]
    mcg_scale: f64,
    #[arg(long, default_value_t = 0x5eed_0be7)]
    dataset_seed: u64,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    /// Write the benchmark inputs (image, landmarks, truth) of each selected
    /// seed into this directory instead of running the samplers.
    #[arg(long)]
    export: Option<PathBuf>,
}

impl BenchArgs {
    fn spec(&self) -> BenchmarkSpec {
        let d = BenchmarkSpec::default();
        let seeds = (0..self.num_seeds as u64).map(|i| 1009 + 7919 * i).collect();
        BenchmarkSpec {
            seeds,
            dataset_seed: self.dataset_seed,
            model_seed: self.model_seed,
            algorithms: self.algorithms.clone(),
            resolution: self.resolution,
            image_size: self.image_size,
            landmark_noise: self.landmark_noise,
            ridge: self.ridge,
            ddim_steps: self.ddim_steps,
            ddim_eta: self.ddim_eta,
            repaint_n: self.repaint_n,
            mcg_scale: self.mcg_scale,
            threads: self.threads,
            ..d
        }
    }
}

fn export_cases(spec: &BenchmarkSpec, indices: &[usize], dir: &Path) -> Result<()> {
    let model = spec.morphable_model()?;
    for &i in indices {
        let case = harness::prepare_case(spec, &model, i)?;
        let d = dir.join(format!("case_{i:02}"));
        std::fs::create_dir_all(&d)?;
        case.image.save_png(d.join("image.png"))?;
        let lm: Vec<f64> = case.landmarks.iter().flatten().copied().collect();
        write_ndt(d.join("landmarks.ndt"), &Tensor::new(&[case.landmarks.len(), 2], lm)?)?;
        write_stack(&d.join("truth.ndt"), &case.truth.to_stack())?;
        write_maps(&d, "truth_", &case.truth)?;
        info!(
            "case {i}: seed {} pose {} exported to {}",
            case.seed,
            case.pose,
            d.display()
        );
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let spec = a.spec();
    spec.validate()?;
    let all: Vec<usize> = (0..spec.seeds.len()).collect();
    let indices = a.indices.clone().unwrap_or(all);
    if let Some(&bad) = indices.iter().find(|&&i| i >= spec.seeds.len()) {
        bail!("seed index {bad} out of range for {} seeds", spec.seeds.len());
    }
    if let Some(dir) = &a.export {
        return export_cases(&spec, &indices, dir);
    }
    let Some(path) = &a.checkpoint else {
        bail!("bench needs --checkpoint unless --export is given");
    };
    let ck = load_checkpoint(path)?;
    let report = harness::run_benchmark_subset(&spec, &ck, Some(&indices))?;
    report
        .save(&a.out)
        .with_context(|| format!("writing report {}", a.out.display()))?;
    print!("{}", report.to_text());
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predicted `1 x C x R x R` stack.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Ground-truth stack.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Print the tables of a saved benchmark report instead.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    if let Some(path) = &a.report {
        let report = Report::load(path).with_context(|| format!("reading report {}", path.display()))?;
        print!("{}", report.to_text());
        return Ok(());
    }
    let (Some(pred), Some(truth)) = (&a.pred, &a.truth) else {
        bail!("eval needs --pred and --truth, or --report");
    };
    let layout = ChannelLayout::default();
    let read = |p: &Path| -> Result<ReflectanceQuad> {
        let t: Tensor<f32> = read_ndt(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(ReflectanceQuad::from_stack(&t, layout)?)
    };
    let (p, t) = (read(pred)?, read(truth)?);
    if p.resolution() != t.resolution() {
        bail!("resolutions differ: {} vs {}", p.resolution(), t.resolution());
    }
    println!("{:<9} {:>8} {:>7}", "map", "PSNR", "SSIM");
    for (m, psnr, ssim) in harness::score_maps(&p, &t)? {
        println!("{:<9} {psnr:>8.3} {ssim:>7.4}", m.name());
    }
    Ok(())
}
