use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};

use super::camera::{Camera, Mat3};
use super::model::MorphableModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub p_s: Vec<f64>,
    pub p_e: Vec<f64>,
    pub camera: Camera,
    /// Mean landmark reprojection error in pixels.
    pub residual: f64,
    /// Residual after initialisation and after every accepted iteration.
    pub history: Vec<f64>,
}

pub const MAX_FIT_ITERS: usize = 50;
pub const FIT_TOLERANCE: f64 = 1e-6;

/// Landmarks as `y`-up points so that `q = s R2 X + t`.
fn to_plane(p: [f64; 2]) -> Vector2<f64> {
    Vector2::new(p[0], -p[1])
}

#[derive(Clone)]
struct Cam {
    s: f64,
    r2: Matrix2x3<f64>,
    t: Vector2<f64>,
}

impl Cam {
    fn rotation(&self) -> Matrix3<f64> {
        let r1 = Vector3::new(self.r2[(0, 0)], self.r2[(0, 1)], self.r2[(0, 2)]);
        let r2 = Vector3::new(self.r2[(1, 0)], self.r2[(1, 1)], self.r2[(1, 2)]);
        Matrix3::from_rows(&[r1.transpose(), r2.transpose(), r1.cross(&r2).transpose()])
    }

    fn to_camera(&self) -> Result<Camera> {
        let r = self.rotation();
        let rot: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)]));
        Camera::new(self.s, rot, [self.t[0], -self.t[1]])
    }

    /// Applies `R <- exp([w]x) R`, `s += ds`, `t += dt`.
    fn perturbed(&self, w: Vector3<f64>, ds: f64, dt: Vector2<f64>) -> Option<Self> {
        let rot = nalgebra::Rotation3::new(w).matrix() * self.rotation();
        let s = self.s + ds;
        (s > 0.0).then(|| Self {
            s,
            r2: rot.fixed_rows::<2>(0).into_owned(),
            t: self.t + dt,
        })
    }
}

fn landmark_points(model: &MorphableModel, p: &[f64]) -> Vec<Vector3<f64>> {
    let (ps, pe) = p.split_at(model.shape_size);
    model
        .landmarks
        .iter()
        .map(|&v| {
            let mut x = Vector3::from(model.mean.vertices[v]);
            for (col, &c) in model.columns().zip(ps.iter().chain(pe)) {
                x += c * Vector3::new(col[3 * v], col[3 * v + 1], col[3 * v + 2]);
            }
            x
        })
        .collect()
}

fn residual(q: &[Vector2<f64>], x: &[Vector3<f64>], cam: &Cam) -> f64 {
    q.iter()
        .zip(x)
        .map(|(q, x)| (q - (cam.s * cam.r2 * x + cam.t)).norm())
        .sum::<f64>()
        / q.len() as f64
}

/// Affine least squares followed by projection onto a scaled pair of
/// orthonormal rows, then the optimal scale and translation for that
/// rotation.
fn fit_camera(q: &[Vector2<f64>], x: &[Vector3<f64>]) -> Result<Cam> {
    let n = q.len() as f64;
    let qm = q.iter().sum::<Vector2<f64>>() / n;
    let xm = x.iter().sum::<Vector3<f64>>() / n;
    let mut qx = Matrix2x3::zeros();
    let mut xx = Matrix3::zeros();
    for (q, x) in q.iter().zip(x) {
        let (dq, dx) = (q - qm, x - xm);
        qx += dq * dx.transpose();
        xx += dx * dx.transpose();
    }
    let xx_inv = xx
        .pseudo_inverse(1e-12 * xx.norm().max(1e-300))
        .map_err(|e| Error::DegenerateLandmarks(e.to_string()))?;
    let m = qx * xx_inv;
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let sv = svd.singular_values;
    if !(sv[1] > 1e-9 * sv[0].max(1e-300)) {
        return Err(Error::DegenerateLandmarks(
            "landmarks do not span two image directions".into(),
        ));
    }
    let r2 = u * vt;
    let (mut num, mut den) = (0.0, 0.0);
    for (q, x) in q.iter().zip(x) {
        let px = r2 * (x - xm);
        num += (q - qm).dot(&px);
        den += px.norm_squared();
    }
    let s = num / den;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::DegenerateLandmarks(format!("fitted scale {s} is not positive")));
    }
    Ok(Cam {
        s,
        r2,
        t: qm - s * r2 * xm,
    })
}

/// Ridge-regularised linear solve for the coefficients given the camera.
/// With `joint`, returns instead the first-order increment of the
/// coefficients together with rotation, scale and translation corrections
/// (the latter unregularised).
fn fit_coefficients(
    model: &MorphableModel,
    q: &[Vector2<f64>],
    p: &[f64],
    cam: &Cam,
    ridge: f64,
    joint: bool,
) -> Result<Vec<f64>> {
    let k = model.shape_size + model.expr_size;
    let extra = if joint { 6 } else { 0 };
    let l = model.landmarks.len();
    let mut a = DMatrix::zeros(2 * l, k + extra);
    let mut b = DVector::zeros(2 * l);
    let sr = cam.s * cam.r2;
    let rot = cam.rotation();
    let cols: Vec<&[f64]> = model.columns().collect();
    let x = landmark_points(model, p);
    for (i, &v) in model.landmarks.iter().enumerate() {
        let rhs = if joint {
            q[i] - cam.t - sr * x[i]
        } else {
            q[i] - cam.t - sr * Vector3::from(model.mean.vertices[v])
        };
        b[2 * i] = rhs[0];
        b[2 * i + 1] = rhs[1];
        for (j, col) in cols.iter().enumerate() {
            let d = sr * Vector3::new(col[3 * v], col[3 * v + 1], col[3 * v + 2]);
            a[(2 * i, j)] = d[0];
            a[(2 * i + 1, j)] = d[1];
        }
        if joint {
            let y = rot * x[i];
            // d(w x y) = -[y]x w, first two rows, times s.
            let jw = [[0.0, y[2], -y[1]], [-y[2], 0.0, y[0]]];
            for r in 0..2 {
                for c in 0..3 {
                    a[(2 * i + r, k + c)] = cam.s * jw[r][c];
                }
                a[(2 * i + r, k + 3)] = y[r];
                a[(2 * i + r, k + 4 + r)] = 1.0;
            }
        }
    }
    let mut lhs = a.transpose() * &a;
    for j in 0..k {
        lhs[(j, j)] += ridge;
    }
    let mut rhs = a.transpose() * b;
    if joint {
        // The increment is regularised so the ridge still pulls `p` to zero.
        for j in 0..k {
            rhs[j] -= ridge * p[j];
        }
    }
    let sol = lhs
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| lhs.lu().solve(&rhs))
        .ok_or_else(|| Error::DegenerateLandmarks("coefficient system is singular".into()))?;
    Ok(sol.iter().copied().collect())
}

/// Joint step of length `alpha` along the first-order solution `d`.
fn joint_step(p: &[f64], cam: &Cam, d: &[f64], alpha: f64) -> Option<(Vec<f64>, Cam)> {
    let k = p.len();
    let p_new = p.iter().zip(d).map(|(a, x)| a + alpha * x).collect();
    let w = alpha * Vector3::new(d[k], d[k + 1], d[k + 2]);
    let cam_new = cam.perturbed(w, alpha * d[k + 3], alpha * Vector2::new(d[k + 4], d[k + 5]))?;
    Some((p_new, cam_new))
}

/// Alternates camera and coefficient estimation from the mean shape. An
/// iteration is kept only if it does not increase the residual.
pub fn fit_morphable(landmarks: &[[f64; 2]], model: &MorphableModel, ridge: f64) -> Result<FitResult> {
    model.validate()?;
    if landmarks.len() != model.landmarks.len() {
        return Err(Error::InvalidArgument(format!(
            "{} landmarks for a model with {}",
            landmarks.len(),
            model.landmarks.len()
        )));
    }
    if landmarks.len() < 6 {
        return Err(Error::DegenerateLandmarks(format!(
            "need at least 6 landmarks, got {}",
            landmarks.len()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument("ridge must be non-negative".into()));
    }
    if landmarks.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("landmarks".into()));
    }
    let q: Vec<Vector2<f64>> = landmarks.iter().map(|&p| to_plane(p)).collect();
    let k = model.shape_size + model.expr_size;

    let mut p = vec![0.0; k];
    let mut cam = fit_camera(&q, &landmark_points(model, &p))?;
    let mut res = residual(&q, &landmark_points(model, &p), &cam);
    let mut history = vec![res];
    for _ in 0..MAX_FIT_ITERS {
        // Candidates: the plain coefficient solve and a joint first-order
        // step that also corrects the camera, each optionally followed by a
        // fresh camera fit. The lowest residual wins.
        let mut cands: Vec<(Vec<f64>, Cam)> = Vec::new();
        let p_lin = fit_coefficients(model, &q, &p, &cam, ridge, false)?;
        cands.push((p_lin, cam.clone()));
        if let Ok(d) = fit_coefficients(model, &q, &p, &cam, ridge, true) {
            cands.extend(
                [1.0, 0.5, 0.25, 0.125]
                    .into_iter()
                    .filter_map(|a| joint_step(&p, &cam, &d, a)),
            );
        }
        let mut best: Option<(f64, Vec<f64>, Cam)> = None;
        for (pc, c) in cands {
            let x = landmark_points(model, &pc);
            let mut options = vec![(residual(&q, &x, &c), c)];
            if let Ok(refit) = fit_camera(&q, &x) {
                options.push((residual(&q, &x, &refit), refit));
            }
            for (r, c) in options {
                if best.as_ref().map_or(true, |b| r < b.0) {
                    best = Some((r, pc.clone(), c));
                }
            }
        }
        let (cand_res, p_new, cam_new) = best.expect("at least one candidate");
        if !(cand_res <= res) {
            break;
        }
        let gain = res - cand_res;
        p = p_new;
        cam = cam_new;
        res = cand_res;
        history.push(res);
        if gain < FIT_TOLERANCE {
            break;
        }
    }
    let p_e = p.split_off(model.shape_size);
    Ok(FitResult {
        p_s: p,
        p_e,
        camera: cam.to_camera()?,
        residual: res,
        history,
    })
}
