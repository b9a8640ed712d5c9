use std::collections::HashMap;

use super::{timestep_embedding, EpsModel};
use crate::ndtensor::{Real, Stream, Tape, Tensor, Var};
use crate::{Error, Result};

pub const NORM_GROUPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserConfig {
    pub in_channels: usize,
    pub base_width: usize,
    pub depth: usize,
    pub time_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            in_channels: 10,
            base_width: 32,
            depth: 3,
            time_dim: 64,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidArgument("denoiser depth must be >= 1".into()));
        }
        if self.base_width == 0 || self.base_width % NORM_GROUPS != 0 {
            return Err(Error::InvalidArgument(format!(
                "base width {} must be a positive multiple of {NORM_GROUPS}",
                self.base_width
            )));
        }
        if self.in_channels == 0 || self.time_dim < 2 || self.time_dim % 2 != 0 {
            return Err(Error::InvalidArgument("channels and even time_dim required".into()));
        }
        Ok(())
    }

    pub fn width(&self, level: usize) -> usize {
        self.base_width << level
    }

    /// Width of the hidden time-embedding MLP.
    pub fn temb_width(&self) -> usize {
        2 * self.time_dim
    }

    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    /// Normal with standard deviation `sqrt(1 / fan_in)`.
    FanIn(usize),
    Zero,
    One,
}

/// Name and shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    init: Init,
}

struct LayoutBuilder {
    specs: Vec<ParamSpec>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) {
        self.specs.push(ParamSpec { name, shape, init });
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, zero: bool) {
        let init = if zero { Init::Zero } else { Init::FanIn(cin * k * k) };
        self.add(format!("{name}.w"), vec![cout, cin, k, k], init);
        self.add(format!("{name}.b"), vec![cout], Init::Zero);
    }

    fn linear(&mut self, name: &str, fin: usize, fout: usize) {
        self.add(format!("{name}.w"), vec![fin, fout], Init::FanIn(fin));
        self.add(format!("{name}.b"), vec![fout], Init::Zero);
    }

    fn norm(&mut self, name: &str, c: usize) {
        self.add(format!("{name}.g"), vec![c], Init::One);
        self.add(format!("{name}.b"), vec![c], Init::Zero);
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize, temb: usize) {
        self.norm(&format!("{name}.n1"), cin);
        self.conv(&format!("{name}.c1"), cin, cout, 3, false);
        self.linear(&format!("{name}.t"), temb, cout);
        self.norm(&format!("{name}.n2"), cout);
        self.conv(&format!("{name}.c2"), cout, cout, 3, false);
        if cin != cout {
            self.conv(&format!("{name}.skip"), cin, cout, 1, false);
        }
    }
}

fn layout(cfg: &DenoiserConfig) -> Vec<ParamSpec> {
    let mut b = LayoutBuilder { specs: Vec::new() };
    let te = cfg.temb_width();
    b.linear("time.fc1", cfg.time_dim, te);
    b.linear("time.fc2", te, te);
    b.conv("stem", cfg.in_channels, cfg.width(0), 3, false);
    let mut cin = cfg.width(0);
    for l in 0..cfg.depth {
        let w = cfg.width(l);
        b.block(&format!("down{l}.b0"), cin, w, te);
        b.block(&format!("down{l}.b1"), w, w, te);
        b.conv(&format!("down{l}.ds"), w, w, 3, false);
        cin = w;
    }
    b.block("mid", cin, cin, te);
    for l in (0..cfg.depth).rev() {
        let w = cfg.width(l);
        b.block(&format!("up{l}.b0"), cin + w, w, te);
        b.block(&format!("up{l}.b1"), w, w, te);
        cin = w;
    }
    b.norm("head.n", cin);
    b.conv("head.c", cin, cfg.in_channels, 3, true);
    b.specs
}

/// U-Net parameters plus configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser<F: Real = f32> {
    config: DenoiserConfig,
    specs: Vec<ParamSpec>,
    params: Vec<Tensor<F>>,
    index: HashMap<String, usize>,
}

impl<F: Real> Denoiser<F> {
    /// Fan-in scaled normal weights, zero biases, unit norm gains and a
    /// zero head so the untrained network predicts exactly zero.
    pub fn init(config: DenoiserConfig, rng: &mut Stream) -> Result<Self> {
        config.validate()?;
        let specs = layout(&config);
        let params = specs
            .iter()
            .map(|s| match s.init {
                Init::Zero => Tensor::zeros(&s.shape),
                Init::One => Tensor::ones(&s.shape),
                Init::FanIn(fan) => {
                    let std = (1.0 / fan as f64).sqrt();
                    rng.normal_tensor::<F>(&s.shape).map(|v| v * F::from_f64c(std))
                }
            })
            .collect();
        Ok(Self::assemble(config, specs, params))
    }

    /// Rebuilds a network from named tensors (e.g. a checkpoint).
    pub fn from_named(config: DenoiserConfig, named: &[(String, Tensor<F>)]) -> Result<Self> {
        config.validate()?;
        let specs = layout(&config);
        let lookup: HashMap<&str, &Tensor<F>> = named.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut params = Vec::with_capacity(specs.len());
        for s in &specs {
            let t = lookup
                .get(s.name.as_str())
                .ok_or_else(|| Error::Format(format!("missing parameter `{}`", s.name)))?;
            if t.shape() != s.shape.as_slice() {
                return Err(Error::shape("parameter", t.shape(), &s.shape));
            }
            params.push((*t).clone());
        }
        Ok(Self::assemble(config, specs, params))
    }

    fn assemble(config: DenoiserConfig, specs: Vec<ParamSpec>, params: Vec<Tensor<F>>) -> Self {
        let index = specs.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        Self {
            config,
            specs,
            params,
            index,
        }
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[Tensor<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn named(&self) -> Vec<(String, Tensor<F>)> {
        self.specs
            .iter()
            .zip(&self.params)
            .map(|(s, p)| (s.name.clone(), p.clone()))
            .collect()
    }

    /// Pushes every parameter onto `tape`, as leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape<F>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect()
    }

    fn check_input(&self, shape: &[usize], t: &[usize]) -> Result<usize> {
        let &[b, c, h, w] = shape else {
            return Err(Error::invalid_shape(
                "eps_theta",
                format!("expected B x C x H x W, got {shape:?}"),
            ));
        };
        if c != self.config.in_channels {
            return Err(Error::invalid_shape(
                "eps_theta",
                format!("expected {} channels, got {c}", self.config.in_channels),
            ));
        }
        let m = self.config.size_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::invalid_shape(
                "eps_theta",
                format!("{h}x{w} not divisible by {m}"),
            ));
        }
        if t.len() != b && t.len() != 1 {
            return Err(Error::invalid_shape(
                "eps_theta",
                format!("{} timesteps for batch {b}", t.len()),
            ));
        }
        Ok(b)
    }

    /// Forward pass with explicitly bound parameter variables.
    pub fn forward(&self, tape: &mut Tape<F>, params: &[Var], x: Var, t: &[usize]) -> Result<Var> {
        let batch = self.check_input(tape.value(x).shape(), t)?;
        let ts: Vec<usize> = if t.len() == batch {
            t.to_vec()
        } else {
            vec![t[0]; batch]
        };
        let mut net = Net {
            tape,
            params,
            index: &self.index,
        };
        let cfg = &self.config;

        let code = net.tape.constant(timestep_embedding(&ts, cfg.time_dim));
        let h = net.linear("time.fc1", code)?;
        let h = net.tape.silu(h)?;
        let temb = net.linear("time.fc2", h)?;
        let temb = net.tape.silu(temb)?;

        let mut h = net.conv("stem", x, 1, 1)?;
        let mut skips = Vec::with_capacity(cfg.depth);
        for l in 0..cfg.depth {
            h = net.block(&format!("down{l}.b0"), h, temb)?;
            h = net.block(&format!("down{l}.b1"), h, temb)?;
            skips.push(h);
            h = net.conv(&format!("down{l}.ds"), h, 2, 1)?;
        }
        h = net.block("mid", h, temb)?;
        for l in (0..cfg.depth).rev() {
            h = net.tape.upsample2x(h)?;
            h = net.tape.concat(&[h, skips[l]], 1)?;
            h = net.block(&format!("up{l}.b0"), h, temb)?;
            h = net.block(&format!("up{l}.b1"), h, temb)?;
        }
        let h = net.norm("head.n", h)?;
        let h = net.tape.silu(h)?;
        net.conv("head.c", h, 1, 1)
    }
}

struct Net<'a, F: Real> {
    tape: &'a mut Tape<F>,
    params: &'a [Var],
    index: &'a HashMap<String, usize>,
}

impl<F: Real> Net<'_, F> {
    fn p(&self, name: &str) -> Var {
        self.params[self.index[name]]
    }

    fn has(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    fn linear(&mut self, name: &str, x: Var) -> Result<Var> {
        let (w, b) = (self.p(&format!("{name}.w")), self.p(&format!("{name}.b")));
        let y = self.tape.matmul(x, w)?;
        self.tape.add_channelwise(y, b, false)
    }

    fn conv(&mut self, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
        let (w, b) = (self.p(&format!("{name}.w")), self.p(&format!("{name}.b")));
        self.tape.conv2d(x, w, Some(b), stride, pad)
    }

    fn norm(&mut self, name: &str, x: Var) -> Result<Var> {
        let (g, b) = (self.p(&format!("{name}.g")), self.p(&format!("{name}.b")));
        self.tape.group_norm(x, NORM_GROUPS, g, b)
    }

    fn block(&mut self, name: &str, x: Var, temb: Var) -> Result<Var> {
        let h = self.norm(&format!("{name}.n1"), x)?;
        let h = self.tape.silu(h)?;
        let h = self.conv(&format!("{name}.c1"), h, 1, 1)?;
        let shift = self.linear(&format!("{name}.t"), temb)?;
        let h = self.tape.add_channelwise(h, shift, true)?;
        let h = self.norm(&format!("{name}.n2"), h)?;
        let h = self.tape.silu(h)?;
        let h = self.conv(&format!("{name}.c2"), h, 1, 1)?;
        let skip_name = format!("{name}.skip");
        let shortcut = if self.has(&format!("{skip_name}.w")) {
            self.conv(&skip_name, x, 1, 0)?
        } else {
            x
        };
        self.tape.add(h, shortcut)
    }
}

impl<F: Real> EpsModel<F> for Denoiser<F> {
    fn channels(&self) -> usize {
        self.config.in_channels
    }

    fn size_multiple(&self) -> usize {
        self.config.size_multiple()
    }

    fn predict_on(&self, tape: &mut Tape<F>, x: Var, t: &[usize]) -> Result<Var> {
        let params = self.bind(tape, false);
        self.forward(tape, &params, x, t)
    }
}
