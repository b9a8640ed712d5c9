//! Procedural reflectance maps, analytic UV-space shading and datasets.
//!
//! A sample is the channel stack `[T, A_d, A_s, N]`: shaded texture (3),
//! diffuse albedo (3), specular albedo (1) and unit normals (3). Stored
//! stacks are scaled to `[-1, 1]`; normal components are already in that
//! range and are stored as-is.

mod dataset;
mod histogram;
mod maps;
mod noise;
mod shade;

pub use dataset::{make_dataset, make_item, read_dataset, write_dataset, DatasetFile, GENERATOR_VERSION};
pub use histogram::histogram_match;
pub use maps::{gen_reflectance, random_light, ChannelLayout, MapKind, ReflectanceMaps, ReflectanceQuad};
pub use shade::{shade_pixel, shade_uv, LightSpec};
