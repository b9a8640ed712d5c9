use std::path::Path;

use crate::{Error, Result};

/// Planar `channels x height x width` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width || !(channels == 1 || channels == 3) || height == 0 || width == 0 {
            return Err(Error::invalid_shape(
                "Image",
                format!("{channels}x{height}x{width} with {} values", data.len()),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: &[f64]) -> Result<Self> {
        if value.len() != channels {
            return Err(Error::InvalidArgument("fill colour has the wrong channel count".into()));
        }
        let data = value
            .iter()
            .flat_map(|&v| std::iter::repeat(v).take(height * width))
            .collect();
        Self::new(channels, height, width, data)
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let px = self.height * self.width;
        &self.data[c * px..(c + 1) * px]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.height + row) * self.width + col]
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centres at
    /// integer + 0.5), clamped at the border.
    pub fn sample(&self, col: f64, row: f64, out: &mut [f64]) {
        bilinear(&self.data, self.channels, self.height, self.width, col, row, out);
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let px = self.height * self.width;
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            let buf: Vec<u8> = self.data.iter().map(|&v| q(v)).collect();
            image::GrayImage::from_raw(w, h, buf).expect("buffer size").save(path)?;
        } else {
            let buf: Vec<u8> = (0..px)
                .flat_map(|i| [0, 1, 2].map(|c| q(self.data[c * px + i])))
                .collect();
            image::RgbImage::from_raw(w, h, buf).expect("buffer size").save(path)?;
        }
        Ok(())
    }

    /// Loads any PNG as RGB, or as one channel when it is greyscale.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let px = w * h;
        if matches!(img.color(), image::ColorType::L8 | image::ColorType::L16) {
            let g = img.to_luma8();
            return Self::new(1, h, w, g.as_raw().iter().map(|&v| v as f64 / 255.0).collect());
        }
        let rgb = img.to_rgb8();
        let raw = rgb.as_raw();
        let mut data = vec![0.0; 3 * px];
        for i in 0..px {
            for c in 0..3 {
                data[c * px + i] = raw[3 * i + c] as f64 / 255.0;
            }
        }
        Self::new(3, h, w, data)
    }
}

/// Bilinear lookup in a planar buffer; `col`, `row` are continuous
/// coordinates with texel centres at integer + 0.5.
pub(crate) fn bilinear(data: &[f64], channels: usize, h: usize, w: usize, col: f64, row: f64, out: &mut [f64]) {
    let x = (col - 0.5).clamp(0.0, (w - 1) as f64);
    let y = (row - 0.5).clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let px = h * w;
    for (c, o) in out.iter_mut().enumerate().take(channels) {
        let p = &data[c * px..];
        let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
        let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
        *o = top * (1.0 - fy) + bot * fy;
    }
}
