use super::camera::Camera;
use super::image::{bilinear, Image};
use super::mesh::Mesh;
use crate::inpaint::{Observation, VisibilityMask};
use crate::ndtensor::Real;
use crate::synthdata::{shade_pixel, ChannelLayout, LightSpec, ReflectanceQuad};
use crate::{Error, Result};

pub const NO_FACE: u32 = u32::MAX;

/// Depth tolerance (model units) for the unwrap visibility test.
pub const DEPTH_TOLERANCE: f64 = 1e-2;

/// Per-pixel nearest front-facing triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub face: Vec<u32>,
    pub bary: Vec<[f64; 3]>,
}

impl Raster {
    pub fn covered(&self, i: usize) -> bool {
        self.face[i] != NO_FACE
    }

    pub fn coverage(&self) -> usize {
        self.face.iter().filter(|&&f| f != NO_FACE).count()
    }
}

/// Calls `f(index, barycentrics)` for every sample centre `(x + 0.5, y + 0.5)`
/// of a `w x h` grid inside the triangle `p` (edges inclusive).
fn scan_triangle(p: [[f64; 2]; 3], w: usize, h: usize, mut f: impl FnMut(usize, [f64; 3])) {
    let area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    if area.abs() < 1e-14 {
        return;
    }
    let lo = |k: usize| p.iter().map(|q| q[k]).fold(f64::INFINITY, f64::min);
    let hi = |k: usize| p.iter().map(|q| q[k]).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (lo(0) - 0.5).ceil().max(0.0) as usize;
    let y0 = (lo(1) - 0.5).ceil().max(0.0) as usize;
    let x1 = ((hi(0) - 0.5).floor() as i64).min(w as i64 - 1);
    let y1 = ((hi(1) - 0.5).floor() as i64).min(h as i64 - 1);
    if x1 < 0 || y1 < 0 {
        return;
    }
    let eps = -1e-9;
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            let (sx, sy) = (x as f64 + 0.5, y as f64 + 0.5);
            let edge = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (sy - a[1]) - (sx - a[0]) * (b[1] - a[1]);
            let b0 = edge(p[1], p[2]) / area;
            let b1 = edge(p[2], p[0]) / area;
            let b2 = edge(p[0], p[1]) / area;
            if b0 >= eps && b1 >= eps && b2 >= eps {
                f(y * w + x, [b0, b1, b2]);
            }
        }
    }
}

/// Depth of the plane through the projected triangle `p` with depths `z`,
/// evaluated at `pt`.
fn plane_depth(p: [[f64; 2]; 3], z: [f64; 3], pt: [f64; 2]) -> f64 {
    let area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let edge = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (pt[1] - a[1]) - (pt[0] - a[0]) * (b[1] - a[1]);
    (edge(p[1], p[2]) * z[0] + edge(p[2], p[0]) * z[1] + edge(p[0], p[1]) * z[2]) / area
}

fn front_facing(mesh: &Mesh, camera: &Camera, face: usize) -> bool {
    camera.rotate(mesh.face_normal(face))[2] > 0.0
}

/// Z-buffered rasterisation of the front-facing triangles.
pub fn rasterize(mesh: &Mesh, camera: &Camera, width: usize, height: usize) -> Result<Raster> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("viewport has zero area".into()));
    }
    camera.validate()?;
    let proj: Vec<[f64; 3]> = mesh.vertices.iter().map(|&v| camera.project(v)).collect();
    let px = width * height;
    let mut r = Raster {
        width,
        height,
        depth: vec![f64::NEG_INFINITY; px],
        face: vec![NO_FACE; px],
        bary: vec![[0.0; 3]; px],
    };
    for (fi, f) in mesh.faces.iter().enumerate() {
        if !front_facing(mesh, camera, fi) {
            continue;
        }
        let p = f.map(|v| [proj[v][0], proj[v][1]]);
        let z = f.map(|v| proj[v][2]);
        scan_triangle(p, width, height, |i, b| {
            let d = b[0] * z[0] + b[1] * z[1] + b[2] * z[2];
            if d > r.depth[i] {
                r.depth[i] = d;
                r.face[i] = fi as u32;
                r.bary[i] = b;
            }
        });
    }
    Ok(r)
}

fn interp<const N: usize>(vals: [[f64; N]; 3], b: [f64; 3]) -> [f64; N] {
    std::array::from_fn(|k| b[0] * vals[0][k] + b[1] * vals[1][k] + b[2] * vals[2][k])
}

/// Rasterised Blinn-Phong rendering of `quad`'s reflectance maps.
///
/// The light is attached to the surface frame: normal, light and view are
/// all carried by the camera rotation, so a rendered pixel reproduces the
/// UV texture shading at the sampled texel.
pub fn render(
    mesh: &Mesh,
    camera: &Camera,
    quad: &ReflectanceQuad,
    light: &LightSpec,
    width: usize,
    height: usize,
    clear: [f64; 3],
) -> Result<Image> {
    let raster = rasterize(mesh, camera, width, height)?;
    let res = quad.resolution();
    let maps = &quad.maps;
    let d_ch = quad.layout.diffuse;
    let lit = LightSpec {
        direction: camera.rotate(light.direction),
        ..light.clone()
    };
    let view = camera.rotate([0.0, 0.0, 1.0]);
    let px = width * height;
    let mut img = Image::filled(3, height, width, &clear)?;
    let (mut kd, mut ks, mut n) = ([0.0; 3], [0.0; 1], [0.0; 3]);
    for i in 0..px {
        if !raster.covered(i) {
            continue;
        }
        let f = mesh.faces[raster.face[i] as usize];
        let uv = interp(f.map(|v| mesh.uvs[v]), raster.bary[i]);
        let (col, row) = (uv[0] * res as f64, uv[1] * res as f64);
        bilinear(&maps.diffuse, d_ch, res, res, col, row, &mut kd);
        if d_ch == 1 {
            kd = [kd[0]; 3];
        }
        bilinear(&maps.specular, 1, res, res, col, row, &mut ks);
        bilinear(&maps.normals, 3, res, res, col, row, &mut n);
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt().max(1e-12);
        let nc = camera.rotate(n.map(|v| v / len));
        let rgb = shade_pixel(kd, ks[0], nc, &lit, view);
        for c in 0..3 {
            img.data[c * px + i] = rgb[c];
        }
    }
    Ok(img)
}

/// Partial UV texture recovered from an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Unwrapped {
    pub resolution: usize,
    /// `3 x R x R`, zero where unobserved.
    pub texture: Vec<f64>,
    pub raw_mask: VisibilityMask,
    pub mask: VisibilityMask,
}

impl Unwrapped {
    pub fn observation<F: Real>(&self, layout: ChannelLayout) -> Result<Observation<F>> {
        Observation::from_texture(layout, &self.texture, self.mask.clone())
    }

    pub fn texture_image(&self) -> Image {
        let r = self.resolution;
        Image::new(3, r, r, self.texture.clone()).expect("texture shape")
    }
}

/// Removes every texel with an unobserved neighbour in its 3x3
/// neighbourhood; neighbours outside the grid are ignored.
pub fn erode(mask: &VisibilityMask) -> VisibilityMask {
    let (h, w) = (mask.height(), mask.width());
    VisibilityMask::from_fn(h, w, |r, c| {
        if !mask.get(r, c) {
            return false;
        }
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && !mask.get(rr as usize, cc as usize) {
                    return false;
                }
            }
        }
        true
    })
}

/// Samples `image` into a UV texture of resolution `r` through the mesh and
/// camera. A texel is observed when its surface point is front-facing,
/// projects inside the image and passes the depth test.
pub fn unwrap(image: &Image, mesh: &Mesh, camera: &Camera, r: usize) -> Result<Unwrapped> {
    if image.channels != 3 {
        return Err(Error::InvalidArgument("unwrap expects an RGB image".into()));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("texture resolution must be positive".into()));
    }
    let zbuf = rasterize(mesh, camera, image.width, image.height)?;
    let proj: Vec<[f64; 3]> = mesh.vertices.iter().map(|&v| camera.project(v)).collect();
    let px = r * r;
    let mut face = vec![NO_FACE; px];
    let mut bary = vec![[0.0; 3]; px];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let p = f.map(|v| [mesh.uvs[v][0] * r as f64, mesh.uvs[v][1] * r as f64]);
        scan_triangle(p, r, r, |i, b| {
            if face[i] == NO_FACE {
                face[i] = fi as u32;
                bary[i] = b;
            }
        });
    }
    let mut texture = vec![0.0; 3 * px];
    let mut raw = vec![0u8; px];
    let mut rgb = [0.0; 3];
    for i in 0..px {
        if face[i] == NO_FACE || !front_facing(mesh, camera, face[i] as usize) {
            continue;
        }
        let f = mesh.faces[face[i] as usize];
        let x = interp(f.map(|v| mesh.vertices[v]), bary[i]);
        let [col, row, depth] = camera.project(x);
        if !(col >= 0.0 && row >= 0.0 && col < image.width as f64 && row < image.height as f64) {
            continue;
        }
        let pi = row as usize * image.width + col as usize;
        if !zbuf.covered(pi) {
            continue;
        }
        // Compare against the front-most surface's plane at the exact
        // projected point rather than at the pixel centre.
        let occluder = mesh.faces[zbuf.face[pi] as usize];
        let front = plane_depth(
            occluder.map(|v| [proj[v][0], proj[v][1]]),
            occluder.map(|v| proj[v][2]),
            [col, row],
        );
        if depth < front - DEPTH_TOLERANCE {
            continue;
        }
        image.sample(col, row, &mut rgb);
        for c in 0..3 {
            texture[c * px + i] = rgb[c];
        }
        raw[i] = 1;
    }
    let raw_mask = VisibilityMask::new(r, r, raw)?;
    let mask = erode(&raw_mask);
    if mask.count() == 0 {
        log::warn!("unwrap: no texel is visible from this camera");
    }
    for i in 0..px {
        if mask.data()[i] == 0 {
            for c in 0..3 {
                texture[c * px + i] = 0.0;
            }
        }
    }
    Ok(Unwrapped {
        resolution: r,
        texture,
        raw_mask,
        mask,
    })
}
