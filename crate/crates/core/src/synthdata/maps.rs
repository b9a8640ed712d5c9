use std::ops::Range;

use super::noise::fractal_noise;
use super::shade::{normalize, shade_uv, LightSpec};
use crate::ndtensor::{Real, Stream, Tensor};
use crate::{Error, Result};

/// Channel counts of the stacked representation, in stacking order
/// `[texture, diffuse, specular, normal]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChannelLayout {
    pub texture: usize,
    pub diffuse: usize,
    pub specular: usize,
    pub normal: usize,
}

impl Default for ChannelLayout {
    fn default() -> Self {
        Self {
            texture: 3,
            diffuse: 3,
            specular: 1,
            normal: 3,
        }
    }
}

impl ChannelLayout {
    pub fn validate(&self) -> Result<()> {
        let ok =
            self.texture == 3 && self.normal == 3 && matches!(self.diffuse, 1 | 3) && matches!(self.specular, 1 | 3);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("unsupported channel layout {self:?}")))
        }
    }

    pub fn total(&self) -> usize {
        self.texture + self.diffuse + self.specular + self.normal
    }

    pub fn texture_range(&self) -> Range<usize> {
        0..self.texture
    }

    pub fn diffuse_range(&self) -> Range<usize> {
        self.texture..self.texture + self.diffuse
    }

    pub fn specular_range(&self) -> Range<usize> {
        let s = self.texture + self.diffuse;
        s..s + self.specular
    }

    pub fn normal_range(&self) -> Range<usize> {
        let s = self.texture + self.diffuse + self.specular;
        s..s + self.normal
    }

    /// `"3,3,1,3"`.
    pub fn describe(&self) -> String {
        format!("{},{},{},{}", self.texture, self.diffuse, self.specular, self.normal)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let v: Vec<usize> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad channel split `{s}`")))
            })
            .collect::<Result<_>>()?;
        let [texture, diffuse, specular, normal] = v[..] else {
            return Err(Error::Format(format!("bad channel split `{s}`")));
        };
        let l = Self {
            texture,
            diffuse,
            specular,
            normal,
        };
        l.validate()?;
        Ok(l)
    }
}

/// Reflectance maps, planar channel-major, values in `[0, 1]` except the
/// unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceMaps {
    pub resolution: usize,
    pub diffuse: Vec<f64>,
    pub specular: Vec<f64>,
    pub normals: Vec<f64>,
}

/// Texture plus reflectance maps. Channel stacking order is fixed:
/// `[T, A_d, A_s, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceQuad {
    pub layout: ChannelLayout,
    pub maps: ReflectanceMaps,
    pub texture: Vec<f64>,
}

impl ReflectanceMaps {
    pub fn shade(&self, light: &LightSpec) -> Result<Vec<f64>> {
        shade_uv(&self.diffuse, &self.specular, &self.normals, light, [0.0, 0.0, 1.0])
    }

    pub fn with_texture(self, layout: ChannelLayout, texture: Vec<f64>) -> ReflectanceQuad {
        ReflectanceQuad {
            layout,
            maps: self,
            texture,
        }
    }
}

fn planes<F: Real>(src: &[F], range: Range<usize>, px: usize) -> impl Iterator<Item = f64> + '_ {
    src[range.start * px..range.end * px].iter().map(|v| v.to_f64c())
}

impl ReflectanceQuad {
    pub fn resolution(&self) -> usize {
        self.maps.resolution
    }

    /// `1 x C x R x R` stack scaled to `[-1, 1]` (normals stored as-is).
    pub fn to_stack<F: Real>(&self) -> Tensor<F> {
        let r = self.resolution();
        let mut data = Vec::with_capacity(self.layout.total() * r * r);
        let to_unit = |v: f64| F::from_f64c(2.0 * v - 1.0);
        data.extend(self.texture.iter().map(|&v| to_unit(v)));
        data.extend(self.maps.diffuse.iter().map(|&v| to_unit(v)));
        data.extend(self.maps.specular.iter().map(|&v| to_unit(v)));
        data.extend(self.maps.normals.iter().map(|&v| F::from_f64c(v)));
        Tensor::new(&[1, self.layout.total(), r, r], data).expect("stack shape")
    }

    /// Decodes a `1 x C x R x R` (or `C x R x R`) stack: albedos and texture
    /// clamped to `[0, 1]`, normals renormalised to unit length with `z > 0`.
    pub fn from_stack<F: Real>(x: &Tensor<F>, layout: ChannelLayout) -> Result<Self> {
        layout.validate()?;
        let shape = x.shape();
        let (c, h, w) = match *shape {
            [1, c, h, w] | [c, h, w] => (c, h, w),
            _ => return Err(Error::invalid_shape("from_stack", format!("{shape:?}"))),
        };
        if c != layout.total() || h != w {
            return Err(Error::invalid_shape(
                "from_stack",
                format!("{shape:?} vs layout {layout:?}"),
            ));
        }
        let px = h * w;
        let d = x.data();
        let from_unit = |v: f64| ((v + 1.0) * 0.5).clamp(0.0, 1.0);
        let texture: Vec<f64> = planes(d, layout.texture_range(), px).map(from_unit).collect();
        let diffuse: Vec<f64> = planes(d, layout.diffuse_range(), px).map(from_unit).collect();
        let specular: Vec<f64> = planes(d, layout.specular_range(), px).map(from_unit).collect();
        let raw: Vec<f64> = planes(d, layout.normal_range(), px).collect();
        let mut normals = vec![0.0; 3 * px];
        for i in 0..px {
            let n = normalize([raw[i], raw[px + i], raw[2 * px + i].max(1e-3)]);
            for k in 0..3 {
                normals[k * px + i] = n[k];
            }
        }
        Ok(Self {
            layout,
            maps: ReflectanceMaps {
                resolution: h,
                diffuse,
                specular,
                normals,
            },
            texture,
        })
    }

    /// Channel planes of the named map as a `[0, 1]` image (normals encoded
    /// as `0.5 (n + 1)`).
    pub fn map_image(&self, map: MapKind) -> (usize, Vec<f64>) {
        match map {
            MapKind::Texture => (3, self.texture.clone()),
            MapKind::Diffuse => (self.layout.diffuse, self.maps.diffuse.clone()),
            MapKind::Specular => (self.layout.specular, self.maps.specular.clone()),
            MapKind::Normal => (3, self.maps.normals.iter().map(|v| 0.5 * (v + 1.0)).collect()),
        }
    }
}

/// One of the four maps in a quad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MapKind {
    Texture,
    Diffuse,
    Specular,
    Normal,
}

impl MapKind {
    pub const ALL: [MapKind; 4] = [MapKind::Texture, MapKind::Diffuse, MapKind::Specular, MapKind::Normal];

    pub fn name(self) -> &'static str {
        match self {
            MapKind::Texture => "texture",
            MapKind::Diffuse => "diffuse",
            MapKind::Specular => "specular",
            MapKind::Normal => "normal",
        }
    }
}

/// Random albedo, specular and normal maps for `seed`.
///
/// * diffuse: base colour plus 2-4 value-noise octaves per channel and a few
///   soft colour blotches, clamped to `[0, 1]`;
/// * specular: low-frequency field in `[0, 0.6]`;
/// * normals: `normalize(-h_x, -h_y, 1)` of a smooth random height field.
pub fn gen_reflectance(rng: &mut Stream, r: usize, layout: ChannelLayout) -> Result<ReflectanceMaps> {
    layout.validate()?;
    if r < 4 {
        return Err(Error::InvalidArgument(format!("resolution {r} too small")));
    }
    let px = r * r;
    let octaves = 2 + rng.below(3);
    let mut diffuse = Vec::with_capacity(layout.diffuse * px);
    let base: Vec<f64> = (0..layout.diffuse).map(|_| rng.uniform_in(0.25, 0.75)).collect();
    let amp = rng.uniform_in(0.15, 0.35);
    for &b in &base {
        let field = fractal_noise(rng, r, 2, octaves);
        diffuse.extend(field.iter().map(|v| b + amp * v));
    }
    for _ in 0..1 + rng.below(4) {
        let (cx, cy) = (rng.uniform() * r as f64, rng.uniform() * r as f64);
        let rad = rng.uniform_in(0.05, 0.15) * r as f64;
        let tint: Vec<f64> = (0..layout.diffuse).map(|_| rng.uniform_in(-0.3, 0.3)).collect();
        for y in 0..r {
            for x in 0..r {
                let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                let wgt = (-d2 / (2.0 * rad * rad)).exp();
                for (c, t) in tint.iter().enumerate() {
                    diffuse[c * px + y * r + x] += wgt * t;
                }
            }
        }
    }
    diffuse.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));

    let spec_base = rng.uniform_in(0.1, 0.4);
    let mut specular = Vec::with_capacity(layout.specular * px);
    for _ in 0..layout.specular {
        let f = fractal_noise(rng, r, 2, 2);
        specular.extend(f.iter().map(|v| (spec_base + 0.2 * v).clamp(0.0, 0.6)));
    }

    let strength = rng.uniform_in(1.0, 4.0);
    let height = fractal_noise(rng, r, 4, 2);
    let hgt = |x: usize, y: usize| height[y.min(r - 1) * r + x.min(r - 1)];
    let mut normals = vec![0.0; 3 * px];
    for y in 0..r {
        for x in 0..r {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(r - 1));
            let (yl, yr) = (y.saturating_sub(1), (y + 1).min(r - 1));
            let hx = (hgt(xr, y) - hgt(xl, y)) / (xr - xl) as f64;
            let hy = (hgt(x, yr) - hgt(x, yl)) / (yr - yl) as f64;
            let n = normalize([-strength * hx, -strength * hy, 1.0]);
            for k in 0..3 {
                normals[k * px + y * r + x] = n[k];
            }
        }
    }
    Ok(ReflectanceMaps {
        resolution: r,
        diffuse,
        specular,
        normals,
    })
}

/// Light from the upper hemisphere (`z >= 0.35`) with moderate intensities.
pub fn random_light(rng: &mut Stream) -> LightSpec {
    let z = rng.uniform_in(0.35, 1.0);
    let phi = rng.uniform_in(0.0, std::f64::consts::TAU);
    let rxy = (1.0 - z * z).sqrt();
    LightSpec::new(
        [rxy * phi.cos(), rxy * phi.sin(), z],
        rng.uniform_in(0.6, 1.1),
        rng.uniform_in(0.1, 0.35),
        rng.uniform_in(0.2, 1.0),
        rng.uniform_in(8.0, 48.0),
    )
    .expect("light within bounds")
}
