use std::path::Path;

use super::histogram::histogram_match;
use super::maps::{gen_reflectance, random_light, ChannelLayout, ReflectanceQuad};
use super::shade::LightSpec;
use crate::diffusion::Dataset;
use crate::ndtensor::{Archive, Stream, StreamId, Tensor};
use crate::{Error, Result};

pub const GENERATOR_VERSION: u32 = 1;

/// Probability that an item's diffuse albedo is histogram-matched to an
/// earlier item.
const MATCH_PROBABILITY: f64 = 0.3;

/// A generated dataset with its provenance header.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub seed: u64,
    pub resolution: usize,
    pub layout: ChannelLayout,
    /// `count x C x R x R`, scaled to `[-1, 1]`.
    pub items: Tensor<f32>,
    pub lights: Vec<LightSpec>,
}

impl DatasetFile {
    pub fn len(&self) -> usize {
        self.lights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lights.is_empty()
    }

    pub fn quad(&self, i: usize) -> Result<ReflectanceQuad> {
        ReflectanceQuad::from_stack(&self.items.batch_item(i)?, self.layout)
    }

    pub fn to_dataset(&self) -> Result<Dataset<f32>> {
        Dataset::new(self.items.clone())
    }
}

pub(crate) fn item_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser over (seed, index)
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates one item: reflectance, optional albedo augmentation against
/// `earlier` diffuse maps, a random light and the shaded texture. Maps are
/// passed through the stored `f32` representation before shading so the
/// stored texture is consistent with the stored maps.
pub(crate) fn gen_item(
    seed: u64,
    index: usize,
    r: usize,
    layout: ChannelLayout,
    earlier: &[Vec<f64>],
) -> Result<(ReflectanceQuad, LightSpec)> {
    let mut rng = Stream::new(item_seed(seed, index as u64), StreamId::Data);
    let mut maps = gen_reflectance(&mut rng, r, layout)?;
    if !earlier.is_empty() && rng.uniform() < MATCH_PROBABILITY {
        let j = rng.below(earlier.len());
        maps.diffuse = histogram_match(&maps.diffuse, &earlier[j], layout.diffuse)?;
    }
    let light = random_light(&mut rng);
    let blank = maps.with_texture(layout, vec![0.0; 3 * r * r]);
    let stored = ReflectanceQuad::from_stack(&blank.to_stack::<f32>(), layout)?;
    let texture = stored.maps.shade(&light)?;
    Ok((stored.maps.with_texture(layout, texture), light))
}

pub fn make_dataset(count: usize, r: usize, seed: u64) -> Result<DatasetFile> {
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let layout = ChannelLayout::default();
    let mut diffuse_maps: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut stacks = Vec::with_capacity(count);
    let mut lights = Vec::with_capacity(count);
    for i in 0..count {
        let (quad, light) = gen_item(seed, i, r, layout, &diffuse_maps)?;
        stacks.push(quad.to_stack::<f32>());
        diffuse_maps.push(quad.maps.diffuse);
        lights.push(light);
    }
    Ok(DatasetFile {
        seed,
        resolution: r,
        layout,
        items: Tensor::stack_batch(&stacks)?,
        lights,
    })
}

pub fn write_dataset(path: impl AsRef<Path>, d: &DatasetFile) -> Result<()> {
    let mut a = Archive::<f32>::new();
    a.set("kind", "dataset");
    a.set("count", d.len());
    a.set("resolution", d.resolution);
    a.set("channels", d.layout.describe());
    a.set("generator_version", GENERATOR_VERSION);
    a.set("seed", d.seed);
    for (i, l) in d.lights.iter().enumerate() {
        let v: Vec<String> = l.to_array()[..7].iter().map(|x| x.to_string()).collect();
        a.set(&format!("light.{i:06}"), v.join(" "));
    }
    a.push("items", d.items.clone());
    a.save(path)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<DatasetFile> {
    let a = Archive::<f32>::load(path)?;
    if a.get("kind")? != "dataset" {
        return Err(Error::Format("archive is not a dataset".into()));
    }
    let count: usize = a.parse("count")?;
    let layout = ChannelLayout::parse(a.get("channels")?)?;
    let items = a.tensor("items")?.clone();
    let lights = (0..count)
        .map(|i| {
            let v: Vec<f64> = a
                .get(&format!("light.{i:06}"))?
                .split(' ')
                .map(|x| x.parse().map_err(|_| Error::Format("bad light entry".into())))
                .collect::<Result<_>>()?;
            LightSpec::from_array(&v)
        })
        .collect::<Result<Vec<_>>>()?;
    if items.shape()[0] != count {
        return Err(Error::Format("item count does not match header".into()));
    }
    Ok(DatasetFile {
        seed: a.parse("seed")?,
        resolution: a.parse("resolution")?,
        layout,
        items,
        lights,
    })
}

/// A single item outside any dataset (no albedo augmentation), e.g. for
/// held-out evaluation.
pub fn make_item(seed: u64, index: usize, r: usize) -> Result<(ReflectanceQuad, LightSpec)> {
    gen_item(seed, index, r, ChannelLayout::default(), &[])
}
