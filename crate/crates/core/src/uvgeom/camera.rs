use crate::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

pub(crate) fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// `Rz(roll) Rx(pitch) Ry(yaw)`, angles in radians. Positive yaw turns the
/// object's `+z` face towards `+x`.
pub fn rotation_ypr(yaw: f64, pitch: f64, roll: f64) -> Mat3 {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
    let rz = [[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&rz, &mat_mul(&rx, &ry))
}

/// Weak-perspective camera. A point `X` lands at image column
/// `tx + s (R X)_x` and row `ty - s (R X)_y`; `(R X)_z` is its depth, larger
/// values nearer the viewer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: [f64; 2],
}

impl Camera {
    pub fn new(scale: f64, rotation: Mat3, translation: [f64; 2]) -> Result<Self> {
        let c = Self {
            scale,
            rotation,
            translation,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "camera scale {} must be positive",
                self.scale
            )));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > 1e-6 {
                    return Err(Error::InvalidArgument("camera rotation is not orthonormal".into()));
                }
            }
        }
        if det(r) < 0.0 {
            return Err(Error::InvalidArgument("camera rotation has det -1".into()));
        }
        Ok(())
    }

    /// Image-space `(column, row, depth)`.
    pub fn project(&self, x: [f64; 3]) -> [f64; 3] {
        let p = mat_vec(&self.rotation, x);
        [
            self.translation[0] + self.scale * p[0],
            self.translation[1] - self.scale * p[1],
            p[2],
        ]
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        mat_vec(&self.rotation, v)
    }
}

pub(crate) fn det(r: &Mat3) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}
