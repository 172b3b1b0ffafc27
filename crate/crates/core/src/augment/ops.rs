use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};

/// The augmentation operators, in bank order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationOp {
    Identity,
    AutoContrast,
    Equalize,
    Rotate,
    Solarize,
    Color,
    Posterize,
    Contrast,
    Brightness,
    Sharpness,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
}

impl AugmentationOp {
    pub const ALL: [AugmentationOp; 14] = [
        AugmentationOp::Identity,
        AugmentationOp::AutoContrast,
        AugmentationOp::Equalize,
        AugmentationOp::Rotate,
        AugmentationOp::Solarize,
        AugmentationOp::Color,
        AugmentationOp::Posterize,
        AugmentationOp::Contrast,
        AugmentationOp::Brightness,
        AugmentationOp::Sharpness,
        AugmentationOp::ShearX,
        AugmentationOp::ShearY,
        AugmentationOp::TranslateX,
        AugmentationOp::TranslateY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentationOp::Identity => "identity",
            AugmentationOp::AutoContrast => "auto_contrast",
            AugmentationOp::Equalize => "equalize",
            AugmentationOp::Rotate => "rotate",
            AugmentationOp::Solarize => "solarize",
            AugmentationOp::Color => "color",
            AugmentationOp::Posterize => "posterize",
            AugmentationOp::Contrast => "contrast",
            AugmentationOp::Brightness => "brightness",
            AugmentationOp::Sharpness => "sharpness",
            AugmentationOp::ShearX => "shear_x",
            AugmentationOp::ShearY => "shear_y",
            AugmentationOp::TranslateX => "translate_x",
            AugmentationOp::TranslateY => "translate_y",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    /// Inclusive magnitude range. Parameterless ops only accept 0.
    ///
    /// Rotate is in degrees, Solarize is a threshold, Posterize is a bit
    /// count, shear is the shear coefficient, translation is a fraction of the
    /// image side, and the enhance ops take a blend factor (1 = unchanged).
    pub fn range(self) -> (f32, f32) {
        match self {
            AugmentationOp::Identity | AugmentationOp::AutoContrast | AugmentationOp::Equalize => {
                (0.0, 0.0)
            }
            AugmentationOp::Rotate => (-30.0, 30.0),
            AugmentationOp::Solarize => (0.0, 256.0),
            AugmentationOp::Posterize => (1.0, 8.0),
            AugmentationOp::Color
            | AugmentationOp::Contrast
            | AugmentationOp::Brightness
            | AugmentationOp::Sharpness => (0.1, 1.9),
            AugmentationOp::ShearX
            | AugmentationOp::ShearY
            | AugmentationOp::TranslateX
            | AugmentationOp::TranslateY => (-0.3, 0.3),
        }
    }

    /// Midpoint of the range half that moves away from the unchanged image.
    pub fn default_magnitude(self) -> f32 {
        match self {
            AugmentationOp::Identity | AugmentationOp::AutoContrast | AugmentationOp::Equalize => 0.0,
            AugmentationOp::Rotate => 15.0,
            AugmentationOp::Solarize => 128.0,
            AugmentationOp::Posterize => 4.0,
            AugmentationOp::Color
            | AugmentationOp::Contrast
            | AugmentationOp::Brightness
            | AugmentationOp::Sharpness => 1.5,
            AugmentationOp::ShearX
            | AugmentationOp::ShearY
            | AugmentationOp::TranslateX
            | AugmentationOp::TranslateY => 0.15,
        }
    }
}

impl std::fmt::Display for AugmentationOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One operator at a fixed magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationAction {
    pub op: AugmentationOp,
    pub magnitude: f32,
}

impl AugmentationAction {
    pub fn new(op: AugmentationOp, magnitude: f32) -> Result<Self> {
        let action = AugmentationAction { op, magnitude };
        action.validate()?;
        Ok(action)
    }

    pub fn default_for(op: AugmentationOp) -> Self {
        AugmentationAction {
            op,
            magnitude: op.default_magnitude(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (min, max) = self.op.range();
        if !(self.magnitude >= min && self.magnitude <= max) {
            return Err(Error::MagnitudeOutOfRange {
                op: self.op.name(),
                magnitude: self.magnitude,
                min,
                max,
            });
        }
        Ok(())
    }

    pub fn apply(&self, image: &Image) -> Result<Image> {
        apply(self, image)
    }
}

/// Applies one augmentation. Pure: the same inputs always give the same bytes,
/// and the output has the input's width, height and channel count.
pub fn apply(action: &AugmentationAction, image: &Image) -> Result<Image> {
    action.validate()?;
    let m = action.magnitude;
    let (w, h) = (image.width() as f32, image.height() as f32);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    Ok(match action.op {
        AugmentationOp::Identity => image.clone(),
        AugmentationOp::AutoContrast => auto_contrast(image),
        AugmentationOp::Equalize => equalize(image),
        AugmentationOp::Rotate => {
            if m == 0.0 {
                return Ok(image.clone());
            }
            let (sin, cos) = m.to_radians().sin_cos();
            warp(image, |x, y| {
                let (dx, dy) = (x - cx, y - cy);
                (cx + cos * dx + sin * dy, cy - sin * dx + cos * dy)
            })
        }
        AugmentationOp::Solarize => map_pixels(image, |p| {
            if p as f32 >= m {
                255 - p
            } else {
                p
            }
        }),
        AugmentationOp::Posterize => {
            let bits = m.round() as u32;
            let mask = (0xFFu32 << (8 - bits)) as u8;
            map_pixels(image, |p| p & mask)
        }
        AugmentationOp::Color => {
            if image.channels() == 1 {
                image.clone()
            } else {
                let grey: Vec<u8> = image
                    .luma()
                    .iter()
                    .flat_map(|&l| [round_u8(l); 3])
                    .collect();
                blend(&grey, image, m)
            }
        }
        AugmentationOp::Contrast => {
            let luma = image.luma();
            let mean = luma.iter().map(|&l| round_u8(l) as f64).sum::<f64>() / luma.len() as f64;
            let degenerate = vec![round_u8(mean as f32); image.pixels().len()];
            blend(&degenerate, image, m)
        }
        AugmentationOp::Brightness => blend(&vec![0u8; image.pixels().len()], image, m),
        AugmentationOp::Sharpness => blend(&smooth(image), image, m),
        AugmentationOp::ShearX => warp(image, |x, y| (x + m * (y - cy), y)),
        AugmentationOp::ShearY => warp(image, |x, y| (x, y + m * (x - cx))),
        AugmentationOp::TranslateX => warp(image, |x, y| (x - m * w, y)),
        AugmentationOp::TranslateY => warp(image, |x, y| (x, y - m * h)),
    })
}

#[inline]
fn round_u8(v: f32) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn map_pixels(image: &Image, f: impl Fn(u8) -> u8) -> Image {
    image.with_pixels(image.pixels().iter().map(|&p| f(p)).collect())
}

/// `degenerate + factor * (image - degenerate)`, rounded and clamped.
fn blend(degenerate: &[u8], image: &Image, factor: f32) -> Image {
    let px = degenerate
        .iter()
        .zip(image.pixels())
        .map(|(&d, &p)| {
            let d = d as f32;
            round_u8(d + factor * (p as f32 - d))
        })
        .collect();
    image.with_pixels(px)
}

fn auto_contrast(image: &Image) -> Image {
    let c = image.channels();
    let mut out = image.pixels().to_vec();
    for ch in 0..c {
        let vals = || image.pixels().iter().skip(ch).step_by(c);
        let lo = *vals().min().expect("non-empty");
        let hi = *vals().max().expect("non-empty");
        if hi <= lo {
            continue;
        }
        let scale = 255.0 / (hi - lo) as f32;
        for v in out.iter_mut().skip(ch).step_by(c) {
            *v = round_u8((*v - lo) as f32 * scale);
        }
    }
    image.with_pixels(out)
}

fn equalize(image: &Image) -> Image {
    let c = image.channels();
    let mut out = image.pixels().to_vec();
    for ch in 0..c {
        let mut hist = [0usize; 256];
        for &p in image.pixels().iter().skip(ch).step_by(c) {
            hist[p as usize] += 1;
        }
        let nonzero: Vec<usize> = hist.iter().copied().filter(|&n| n > 0).collect();
        if nonzero.len() <= 1 {
            continue;
        }
        let step = (nonzero.iter().sum::<usize>() - nonzero[nonzero.len() - 1]) / 255;
        if step == 0 {
            continue;
        }
        let mut lut = [0u8; 256];
        let mut n = step / 2;
        for (i, entry) in lut.iter_mut().enumerate() {
            *entry = (n / step).min(255) as u8;
            n += hist[i];
        }
        for v in out.iter_mut().skip(ch).step_by(c) {
            *v = lut[*v as usize];
        }
    }
    image.with_pixels(out)
}

/// 3x3 smoothing (centre weight 5, neighbours 1, /13); border pixels are kept.
fn smooth(image: &Image) -> Vec<u8> {
    let (w, h, c) = image.dims();
    let mut out = image.pixels().to_vec();
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            for ch in 0..c {
                let mut acc = 0u32;
                for dy in 0..3 {
                    for dx in 0..3 {
                        let weight = if dx == 1 && dy == 1 { 5 } else { 1 };
                        acc += weight * image.get(x + dx - 1, y + dy - 1, ch) as u32;
                    }
                }
                out[(y * w + x) * c + ch] = round_u8(acc as f32 / 13.0);
            }
        }
    }
    out
}

/// Inverse-mapped resampling: each output pixel reads the source position
/// given by `source(x, y)` with bilinear interpolation; positions outside the
/// image read as 0.
fn warp(image: &Image, source: impl Fn(f32, f32) -> (f32, f32)) -> Image {
    let (w, h, c) = image.dims();
    let mut out = vec![0u8; image.pixels().len()];
    let fetch = |x: i64, y: i64, ch: usize| -> f32 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0.0
        } else {
            image.get(x as usize, y as usize, ch) as f32
        }
    };
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = source(x as f32, y as f32);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (xi, yi) = (x0 as i64, y0 as i64);
            for ch in 0..c {
                let v = (1.0 - fx) * (1.0 - fy) * fetch(xi, yi, ch)
                    + fx * (1.0 - fy) * fetch(xi + 1, yi, ch)
                    + (1.0 - fx) * fy * fetch(xi, yi + 1, ch)
                    + fx * fy * fetch(xi + 1, yi + 1, ch);
                out[(y * w + x) * c + ch] = round_u8(v);
            }
        }
    }
    image.with_pixels(out)
}
