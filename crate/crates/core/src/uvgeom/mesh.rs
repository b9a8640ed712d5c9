use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Triangle mesh with one UV per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub uvs: Vec<[f64; 2]>,
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn uv_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>, uvs: Vec<[f64; 2]>) -> Result<Self> {
        let m = Self { vertices, faces, uvs };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.uvs.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} uvs for {n} vertices",
                self.uvs.len()
            )));
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::InvalidArgument(format!("face {i} indexes past {n} vertices")));
            }
            if uv_area(self.uvs[f[0]], self.uvs[f[1]], self.uvs[f[2]]).abs() < 1e-12 {
                return Err(Error::InvalidArgument(format!("face {i} has zero UV area")));
            }
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mesh vertices".into()));
        }
        Ok(())
    }

    /// Unnormalised geometric normal `(b - a) x (c - a)` of face `i`.
    pub fn face_normal(&self, i: usize) -> [f64; 3] {
        let [a, b, c] = self.faces[i].map(|v| self.vertices[v]);
        cross(sub(b, a), sub(c, a))
    }

    /// Same topology and UVs with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<[f64; 3]>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidArgument("vertex count changed".into()));
        }
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
            uvs: self.uvs.clone(),
        })
    }

    /// Axis-aligned square in the `z = 0` plane facing `+z`, UV `(0,0)` at
    /// the top-left corner `(-h, h)`.
    pub fn flat_quad(half: f64, cells: usize) -> Self {
        let n = cells + 1;
        let mut vertices = Vec::with_capacity(n * n);
        let mut uvs = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (u, v) = (c as f64 / cells as f64, r as f64 / cells as f64);
                vertices.push([half * (2.0 * u - 1.0), half * (1.0 - 2.0 * v), 0.0]);
                uvs.push([u, v]);
            }
        }
        let faces = grid_faces(n, n);
        let mut m = Self { vertices, faces, uvs };
        m.orient_outward(|_| [0.0, 0.0, 1.0]);
        m
    }

    /// Ellipsoid patch spanning azimuth `+-phi_max` about `+y` and elevation
    /// `+-theta_max`, facing `+z`, with cylindrical UVs (`u` from azimuth,
    /// `v` from height, top row first).
    pub fn ellipsoid_patch(radii: [f64; 3], phi_max: f64, theta_max: f64, cells: usize) -> Self {
        let n = cells + 1;
        let mut vertices = Vec::with_capacity(n * n);
        let mut uvs = Vec::with_capacity(n * n);
        for r in 0..n {
            let v = r as f64 / cells as f64;
            let theta = ((1.0 - 2.0 * v) * theta_max.sin()).asin();
            for c in 0..n {
                let u = c as f64 / cells as f64;
                let phi = (2.0 * u - 1.0) * phi_max;
                vertices.push([
                    radii[0] * theta.cos() * phi.sin(),
                    radii[1] * theta.sin(),
                    radii[2] * theta.cos() * phi.cos(),
                ]);
                uvs.push([u, v]);
            }
        }
        let mut m = Self {
            vertices,
            faces: grid_faces(n, n),
            uvs,
        };
        m.orient_outward(|p| {
            [
                p[0] / (radii[0] * radii[0]),
                p[1] / (radii[1] * radii[1]),
                p[2] / (radii[2] * radii[2]),
            ]
        });
        m
    }

    fn orient_outward(&mut self, outward: impl Fn([f64; 3]) -> [f64; 3]) {
        for i in 0..self.faces.len() {
            let f = self.faces[i];
            let centre =
                [0, 1, 2].map(|k| (self.vertices[f[0]][k] + self.vertices[f[1]][k] + self.vertices[f[2]][k]) / 3.0);
            let n = self.face_normal(i);
            let o = outward(centre);
            if n[0] * o[0] + n[1] * o[1] + n[2] * o[2] < 0.0 {
                self.faces[i] = [f[0], f[2], f[1]];
            }
        }
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
        }
        for t in &self.uvs {
            // OBJ texture coordinates have v pointing up.
            let _ = writeln!(s, "vt {} {}", t[0], 1.0 - t[1]);
        }
        for f in &self.faces {
            let [a, b, c] = f.map(|i| i + 1);
            let _ = writeln!(s, "f {a}/{a} {b}/{b} {c}/{c}");
        }
        s
    }

    /// Parses `v`, `vt` and triangular `f v/vt` records; every vertex must be
    /// paired with the texture coordinate of the same index.
    pub fn from_obj(text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::Format(format!("obj line {line}: {what}"));
        let mut vertices = Vec::new();
        let mut uvs = Vec::new();
        let mut faces = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let ln = ln + 1;
            let mut it = line.split_whitespace();
            let nums = |it: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
                it.map(|x| x.parse::<f64>().map_err(|_| bad(ln, "bad number")))
                    .collect()
            };
            match it.next() {
                Some("v") => {
                    let x = nums(it)?;
                    if x.len() < 3 {
                        return Err(bad(ln, "vertex needs 3 coordinates"));
                    }
                    vertices.push([x[0], x[1], x[2]]);
                }
                Some("vt") => {
                    let x = nums(it)?;
                    if x.len() < 2 {
                        return Err(bad(ln, "texture coordinate needs 2 values"));
                    }
                    uvs.push([x[0], 1.0 - x[1]]);
                }
                Some("f") => {
                    let mut idx = [0usize; 3];
                    let parts: Vec<&str> = it.collect();
                    if parts.len() != 3 {
                        return Err(bad(ln, "only triangles are supported"));
                    }
                    for (k, p) in parts.iter().enumerate() {
                        let mut s = p.split('/');
                        let v: usize = s
                            .next()
                            .and_then(|x| x.parse().ok())
                            .ok_or_else(|| bad(ln, "bad face index"))?;
                        let t: usize = s.next().and_then(|x| x.parse().ok()).unwrap_or(v);
                        if v != t || v == 0 {
                            return Err(bad(ln, "vertex and texture indices must match"));
                        }
                        idx[k] = v - 1;
                    }
                    faces.push(idx);
                }
                _ => {}
            }
        }
        Self::new(vertices, faces, uvs)
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_obj())?;
        Ok(())
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_obj(&std::fs::read_to_string(path)?)
    }
}

fn grid_faces(rows: usize, cols: usize) -> Vec<[usize; 3]> {
    let mut faces = Vec::with_capacity(2 * (rows - 1) * (cols - 1));
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let a = r * cols + c;
            let (b, d, e) = (a + 1, a + cols, a + cols + 1);
            faces.push([a, d, b]);
            faces.push([b, d, e]);
        }
    }
    faces
}
