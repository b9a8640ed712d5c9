use crate::{Error, Result};

/// One directional light plus ambient term with a Blinn-Phong lobe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightSpec {
    pub direction: [f64; 3],
    pub diffuse_intensity: f64,
    pub ambient: f64,
    pub specular_intensity: f64,
    pub shininess: f64,
}

impl LightSpec {
    pub fn new(direction: [f64; 3], diffuse: f64, ambient: f64, specular: f64, shininess: f64) -> Result<Self> {
        let l = Self {
            direction: normalize(direction),
            diffuse_intensity: diffuse,
            ambient,
            specular_intensity: specular,
            shininess,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        let n = norm(self.direction);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("light direction has norm {n}")));
        }
        for (name, v) in [
            ("diffuse_intensity", self.diffuse_intensity),
            ("ambient", self.ambient),
            ("specular_intensity", self.specular_intensity),
        ] {
            if !(0.0..=1.5).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} = {v} outside [0, 1.5]")));
            }
        }
        if self.shininess < 1.0 {
            return Err(Error::InvalidArgument(format!("shininess {} < 1", self.shininess)));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 8] {
        let d = self.direction;
        [
            d[0],
            d[1],
            d[2],
            self.diffuse_intensity,
            self.ambient,
            self.specular_intensity,
            self.shininess,
            0.0,
        ]
    }

    pub fn from_array(a: &[f64]) -> Result<Self> {
        Self::new([a[0], a[1], a[2]], a[3], a[4], a[5], a[6])
    }
}

pub(crate) fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = norm(v);
    if n == 0.0 {
        return v;
    }
    [v[0] / n, v[1] / n, v[2] / n]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Blinn-Phong response of one texel, clamped to `[0, 1]` per channel.
pub fn shade_pixel(diffuse: [f64; 3], specular: f64, n: [f64; 3], light: &LightSpec, view: [f64; 3]) -> [f64; 3] {
    let l = light.direction;
    let h = normalize([l[0] + view[0], l[1] + view[1], l[2] + view[2]]);
    let lambert = light.ambient + light.diffuse_intensity * dot(n, l).max(0.0);
    let spec = light.specular_intensity * specular * dot(n, h).max(0.0).powf(light.shininess);
    [0, 1, 2].map(|c| (diffuse[c] * lambert + spec).clamp(0.0, 1.0))
}

/// Shades UV maps texel by texel. `diffuse` is `3 x R x R` (or `1 x R x R`),
/// `specular` is `1 x R x R`, `normals` is `3 x R x R`; all planar,
/// channel-major. Returns the `3 x R x R` texture.
pub fn shade_uv(
    diffuse: &[f64],
    specular: &[f64],
    normals: &[f64],
    light: &LightSpec,
    view: [f64; 3],
) -> Result<Vec<f64>> {
    let px = specular.len();
    if normals.len() != 3 * px || (diffuse.len() != 3 * px && diffuse.len() != px) {
        return Err(Error::InvalidArgument("UV maps do not share a resolution".into()));
    }
    if (norm(view) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("view direction must be unit length".into()));
    }
    let d_ch = diffuse.len() / px;
    let mut out = vec![0.0; 3 * px];
    for i in 0..px {
        let kd = [0, 1, 2].map(|c| diffuse[(c % d_ch) * px + i]);
        let n = [normals[i], normals[px + i], normals[2 * px + i]];
        let rgb = shade_pixel(kd, specular[i], n, light, view);
        for c in 0..3 {
            out[c * px + i] = rgb[c];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const Z: [f64; 3] = [0.0, 0.0, 1.0];

    fn maps(px: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let diffuse: Vec<f64> = (0..3 * px).map(|i| (i as f64 * 0.37).fract()).collect();
        let specular: Vec<f64> = (0..px).map(|i| (i as f64 * 0.11).fract() * 0.6).collect();
        let normals: Vec<f64> = (0..3 * px).map(|i| if i >= 2 * px { 1.0 } else { 0.0 }).collect();
        (diffuse, specular, normals)
    }

    #[test]
    fn frontal_diffuse_only_returns_albedo() {
        let (d, s, n) = maps(16);
        let light = LightSpec::new(Z, 1.0, 0.0, 0.0, 10.0).unwrap();
        let t = shade_uv(&d, &s, &n, &light, Z).unwrap();
        for (a, b) in t.iter().zip(&d) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ambient_only_scales_albedo() {
        let (d, s, n) = maps(16);
        let light = LightSpec::new([0.3, 0.2, 0.9], 0.0, 0.4, 0.0, 10.0).unwrap();
        let t = shade_uv(&d, &s, &n, &light, Z).unwrap();
        for (a, b) in t.iter().zip(&d) {
            assert!((a - 0.4 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn grazing_light_leaves_specular_only() {
        let (d, s, n) = maps(16);
        let light = LightSpec::new([1.0, 0.0, -0.2], 1.0, 0.0, 0.8, 4.0).unwrap();
        let t = shade_uv(&d, &s, &n, &light, Z).unwrap();
        let l = light.direction;
        let h = normalize([l[0], l[1], l[2] + 1.0]);
        for i in 0..16 {
            let spec = 0.8 * s[i] * h[2].max(0.0).powf(4.0);
            for c in 0..3 {
                assert!((t[c * 16 + i] - spec).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn monotone_in_intensities() {
        let (d, s, mut n) = maps(8);
        for i in 0..8 {
            n[i] = 0.3;
            n[16 + i] = (1.0f64 - 0.09).sqrt();
        }
        let v = [0.0, 0.0, 1.0];
        let base = LightSpec::new([0.2, 0.1, 1.0], 0.5, 0.2, 0.3, 8.0).unwrap();
        let t0 = shade_uv(&d, &s, &n, &base, v).unwrap();
        for bump in [
            LightSpec {
                diffuse_intensity: 0.9,
                ..base
            },
            LightSpec { ambient: 0.6, ..base },
            LightSpec {
                specular_intensity: 0.9,
                ..base
            },
        ] {
            let t1 = shade_uv(&d, &s, &n, &bump, v).unwrap();
            assert!(t0.iter().zip(&t1).all(|(a, b)| b >= a));
        }
    }

    #[test]
    fn rejects_mismatched_maps() {
        let (d, s, n) = maps(8);
        let light = LightSpec::new(Z, 1.0, 0.0, 0.0, 10.0).unwrap();
        assert!(shade_uv(&d, &s[..4], &n, &light, Z).is_err());
        assert!(LightSpec::new(Z, 2.0, 0.0, 0.0, 10.0).is_err());
        assert!(LightSpec::new(Z, 1.0, 0.0, 0.0, 0.5).is_err());
    }
}
