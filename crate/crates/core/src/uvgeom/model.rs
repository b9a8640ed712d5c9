use std::f64::consts::PI;
use std::path::Path;

use super::mesh::{cross, Mesh};
use crate::ndtensor::{Archive, Stream, Tensor};
use crate::{Error, Result};

/// Linear shape and expression model over a fixed-topology mesh.
///
/// Bases are stored column-major: column `k` occupies
/// `basis[k * 3n .. (k + 1) * 3n]` in vertex-major `x, y, z` order.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    pub mean: Mesh,
    pub shape_basis: Vec<f64>,
    pub expr_basis: Vec<f64>,
    pub shape_size: usize,
    pub expr_size: usize,
    pub landmarks: Vec<usize>,
}

/// Parameters of the procedural model.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModelConfig {
    pub radii: [f64; 3],
    pub phi_max: f64,
    pub theta_max: f64,
    pub cells: usize,
    pub shape_size: usize,
    pub expr_size: usize,
    pub landmarks: usize,
}

impl Default for SyntheticModelConfig {
    fn default() -> Self {
        Self {
            radii: [1.0, 1.25, 0.85],
            phi_max: 100f64.to_radians(),
            theta_max: 70f64.to_radians(),
            cells: 24,
            shape_size: 8,
            expr_size: 4,
            landmarks: 40,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(v, &u)| *v += a * u);
}

/// Orthogonalises `v` against `basis` (twice, for stability) and
/// normalises it. Returns false if nothing is left.
fn orthonormalise(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    for _ in 0..2 {
        for b in basis {
            let d = dot(v, b);
            axpy(v, -d, b);
        }
    }
    let n = dot(v, v).sqrt();
    if n < 1e-9 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// Smooth random scalar field over UV.
fn smooth_field(rng: &mut Stream, freq: usize) -> impl Fn(f64, f64) -> f64 {
    let mut terms = Vec::new();
    for i in 0..=freq {
        for j in 0..=freq {
            let a = rng.normal() / (1.0 + (i + j) as f64).powi(2);
            terms.push((
                i as f64,
                j as f64,
                a,
                rng.uniform_in(0.0, 2.0 * PI),
                rng.uniform_in(0.0, 2.0 * PI),
            ));
        }
    }
    move |u, v| {
        terms
            .iter()
            .map(|&(i, j, a, p, q)| a * (PI * i * u + p).cos() * (PI * j * v + q).cos())
            .sum()
    }
}

impl MorphableModel {
    pub fn validate(&self) -> Result<()> {
        self.mean.validate()?;
        let len = 3 * self.mean.vertices.len();
        if self.shape_size == 0 || self.expr_size == 0 {
            return Err(Error::InvalidArgument(
                "model needs at least one shape and one expression component".into(),
            ));
        }
        if self.shape_basis.len() != len * self.shape_size || self.expr_basis.len() != len * self.expr_size {
            return Err(Error::InvalidArgument("basis size does not match the mesh".into()));
        }
        if let Some(&l) = self.landmarks.iter().find(|&&l| l >= self.mean.vertices.len()) {
            return Err(Error::InvalidArgument(format!("landmark vertex {l} out of range")));
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.mean.vertices.len()
    }

    pub fn shape_column(&self, k: usize) -> &[f64] {
        let len = 3 * self.vertex_count();
        &self.shape_basis[k * len..(k + 1) * len]
    }

    pub fn expr_column(&self, k: usize) -> &[f64] {
        let len = 3 * self.vertex_count();
        &self.expr_basis[k * len..(k + 1) * len]
    }

    /// All columns, shape first.
    pub(crate) fn columns(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.shape_size)
            .map(|k| self.shape_column(k))
            .chain((0..self.expr_size).map(|k| self.expr_column(k)))
    }

    /// Procedural model: an ellipsoid patch with smooth shape modes and
    /// localised expression modes, orthonormal jointly and orthogonal to
    /// rigid motion and uniform scaling of the mean.
    pub fn synthetic(rng: &mut Stream, cfg: &SyntheticModelConfig) -> Result<Self> {
        let mean = Mesh::ellipsoid_patch(cfg.radii, cfg.phi_max, cfg.theta_max, cfg.cells);
        let n = mean.vertices.len();
        let len = 3 * n;

        let mut gauge: Vec<Vec<f64>> = Vec::new();
        let push_gauge = |mut v: Vec<f64>, gauge: &mut Vec<Vec<f64>>| {
            if orthonormalise(&mut v, gauge) {
                gauge.push(v);
            }
        };
        for axis in 0..3 {
            let mut e = [0.0; 3];
            e[axis] = 1.0;
            push_gauge(mean.vertices.iter().flat_map(|_| e).collect(), &mut gauge);
            push_gauge(mean.vertices.iter().flat_map(|&x| cross(e, x)).collect(), &mut gauge);
        }
        push_gauge(mean.vertices.iter().flat_map(|&x| x).collect(), &mut gauge);
        let rigid = gauge.len();

        let add_columns =
            |count: usize, local: bool, gauge: &mut Vec<Vec<f64>>, rng: &mut Stream| -> Result<Vec<f64>> {
                let mut out = Vec::with_capacity(count * len);
                let mut tries = 0;
                while out.len() < count * len {
                    tries += 1;
                    if tries > 10 * count {
                        return Err(Error::InvalidArgument(
                            "could not build independent basis columns".into(),
                        ));
                    }
                    let fields: Vec<_> = (0..3).map(|_| smooth_field(rng, 3)).collect();
                    let (cu, cv) = (rng.uniform_in(0.35, 0.65), rng.uniform_in(0.35, 0.75));
                    let mut v = Vec::with_capacity(len);
                    for uv in &mean.uvs {
                        let w = if local {
                            (-((uv[0] - cu).powi(2) + (uv[1] - cv).powi(2)) / (2.0 * 0.15f64.powi(2))).exp()
                        } else {
                            1.0
                        };
                        v.extend(fields.iter().map(|f| w * f(uv[0], uv[1])));
                    }
                    if orthonormalise(&mut v, gauge) {
                        gauge.push(v.clone());
                        out.extend(v);
                    }
                }
                Ok(out)
            };
        let shape_basis = add_columns(cfg.shape_size, false, &mut gauge, rng)?;
        let expr_basis = add_columns(cfg.expr_size, true, &mut gauge, rng)?;
        debug_assert_eq!(gauge.len(), rigid + cfg.shape_size + cfg.expr_size);

        let front: Vec<usize> = (0..n)
            .filter(|&i| {
                let [u, v] = mean.uvs[i];
                (u - 0.5).abs() <= 0.3 && (v - 0.5).abs() <= 0.38
            })
            .collect();
        if front.len() < cfg.landmarks {
            return Err(Error::InvalidArgument(
                "not enough frontal vertices for landmarks".into(),
            ));
        }
        let mut pool = front;
        let mut landmarks = Vec::with_capacity(cfg.landmarks);
        for _ in 0..cfg.landmarks {
            landmarks.push(pool.swap_remove(rng.below(pool.len())));
        }
        landmarks.sort_unstable();

        let m = Self {
            mean,
            shape_basis,
            expr_basis,
            shape_size: cfg.shape_size,
            expr_size: cfg.expr_size,
            landmarks,
        };
        m.validate()?;
        Ok(m)
    }

    /// Coefficients with per-component standard deviation decaying from
    /// `shape_sigma` and `expr_sigma`.
    pub fn sample_coefficients(&self, rng: &mut Stream, shape_sigma: f64, expr_sigma: f64) -> (Vec<f64>, Vec<f64>) {
        let ps = (0..self.shape_size)
            .map(|k| shape_sigma * 0.85f64.powi(k as i32) * rng.normal())
            .collect();
        let pe = (0..self.expr_size)
            .map(|k| expr_sigma * 0.85f64.powi(k as i32) * rng.normal())
            .collect();
        (ps, pe)
    }

    pub fn instantiate(&self, p_s: &[f64], p_e: &[f64]) -> Result<Mesh> {
        if p_s.len() != self.shape_size || p_e.len() != self.expr_size {
            return Err(Error::InvalidArgument(format!(
                "expected {}+{} coefficients, got {}+{}",
                self.shape_size,
                self.expr_size,
                p_s.len(),
                p_e.len()
            )));
        }
        let mut flat: Vec<f64> = self.mean.vertices.iter().flat_map(|&v| v).collect();
        for (col, &p) in self.columns().zip(p_s.iter().chain(p_e)) {
            axpy(&mut flat, p, col);
        }
        self.mean
            .with_vertices(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn to_archive(&self) -> Result<Archive<f64>> {
        let n = self.vertex_count();
        let mut a = Archive::new();
        a.set("kind", "morphable_model");
        a.set("vertices", n);
        a.set("faces", self.mean.faces.len());
        a.set("shape_size", self.shape_size);
        a.set("expr_size", self.expr_size);
        a.set("landmarks", self.landmarks.len());
        let verts: Vec<f64> = self.mean.vertices.iter().flat_map(|&v| v).collect();
        a.push("mean", Tensor::new(&[n, 3], verts)?);
        let uvs: Vec<f64> = self.mean.uvs.iter().flat_map(|&v| v).collect();
        a.push("uvs", Tensor::new(&[n, 2], uvs)?);
        let faces: Vec<f64> = self.mean.faces.iter().flat_map(|f| f.map(|i| i as f64)).collect();
        a.push("faces", Tensor::new(&[self.mean.faces.len(), 3], faces)?);
        a.push(
            "shape_basis",
            Tensor::new(&[self.shape_size, 3 * n], self.shape_basis.clone())?,
        );
        a.push(
            "expr_basis",
            Tensor::new(&[self.expr_size, 3 * n], self.expr_basis.clone())?,
        );
        let lm: Vec<f64> = self.landmarks.iter().map(|&i| i as f64).collect();
        a.push("landmarks", Tensor::new(&[lm.len()], lm)?);
        Ok(a)
    }

    pub fn from_archive(a: &Archive<f64>) -> Result<Self> {
        if a.get("kind")? != "morphable_model" {
            return Err(Error::Format("archive is not a morphable model".into()));
        }
        let idx = |t: &Tensor<f64>| -> Vec<usize> { t.data().iter().map(|&v| v as usize).collect() };
        let vertices = a
            .tensor("mean")?
            .data()
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        let uvs = a.tensor("uvs")?.data().chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let faces = idx(a.tensor("faces")?)
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        let m = Self {
            mean: Mesh::new(vertices, faces, uvs)?,
            shape_basis: a.tensor("shape_basis")?.data().to_vec(),
            expr_basis: a.tensor("expr_basis")?.data().to_vec(),
            shape_size: a.parse("shape_size")?,
            expr_size: a.parse("expr_size")?,
            landmarks: idx(a.tensor("landmarks")?),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}
