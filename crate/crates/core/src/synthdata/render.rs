use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::spec::{Background, DatasetManifest, DomainSpec, PatchSource};
use crate::augment::Image;
use crate::classifier::LabeledImage;
use crate::error::Result;
use crate::rng::{self, streams};
use crate::Label;

/// Pasted-region ellipse in pixel coordinates. Reals carry the ellipse a
/// paste would have used, so seam statistics compare like with like.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeamGeometry {
    pub cx: f32,
    pub cy: f32,
    pub rx: f32,
    pub ry: f32,
}

type Rgb = [f32; 3];

#[derive(Clone, Copy, Debug)]
struct Face {
    cx: f32,
    cy: f32,
    rx: f32,
    ry: f32,
    skin: Rgb,
    feature: Rgb,
    eye_dx: f32,
    eye_dy: f32,
    mouth_dy: f32,
}

fn smoothstep(e0: f32, e1: f32, x: f32) -> f32 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn lerp(a: Rgb, b: Rgb, t: f32) -> Rgb {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn random_skin(r: &mut ChaCha8Rng) -> Rgb {
    let red = r.random_range(120.0..235.0);
    [red, red * r.random_range(0.62..0.85), red * r.random_range(0.45..0.7)]
}

fn random_face(r: &mut ChaCha8Rng, w: f32, h: f32) -> Face {
    Face {
        cx: w * r.random_range(0.44..0.56),
        cy: h * r.random_range(0.44..0.56),
        rx: w * r.random_range(0.26..0.32),
        ry: h * r.random_range(0.32..0.38),
        skin: random_skin(r),
        feature: [r.random_range(20.0..70.0), r.random_range(15.0..50.0), r.random_range(15.0..50.0)],
        eye_dx: r.random_range(0.28..0.4),
        eye_dy: r.random_range(0.15..0.3),
        mouth_dy: r.random_range(0.35..0.5),
    }
}

impl Face {
    /// Colour of the face surface at pixel centre `(x, y)`, ignoring the outline.
    fn color_at(&self, x: f32, y: f32) -> Rgb {
        let u = (x - self.cx) / self.rx;
        let v = (y - self.cy) / self.ry;
        let shade = 1.0 - 0.18 * (u * u + v * v).min(1.0);
        let mut c = self.skin.map(|s| s * shade);
        let eye = |ex: f32| {
            let du = (u - ex) / 0.14;
            let dv = (v + self.eye_dy) / 0.1;
            du * du + dv * dv <= 1.0
        };
        let mouth = (v - self.mouth_dy).abs() < 0.06 && u.abs() < 0.35;
        if eye(-self.eye_dx) || eye(self.eye_dx) || mouth {
            c = self.feature;
        }
        c
    }

    fn coverage(&self, x: f32, y: f32) -> f32 {
        let u = (x - self.cx) / self.rx;
        let v = (y - self.cy) / self.ry;
        let rho = (u * u + v * v).sqrt();
        // about one pixel of anti-aliasing
        let edge = 1.0 / self.rx.min(self.ry);
        1.0 - smoothstep(1.0 - edge, 1.0 + edge, rho)
    }
}

fn value_noise(r: &mut ChaCha8Rng, grid: usize, w: usize, h: usize) -> Vec<f32> {
    let g: Vec<f32> = (0..(grid + 1) * (grid + 1)).map(|_| r.random()).collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let gx = x as f32 / w as f32 * grid as f32;
            let gy = y as f32 / h as f32 * grid as f32;
            let (ix, iy) = (gx as usize, gy as usize);
            let (fx, fy) = (smoothstep(0.0, 1.0, gx - ix as f32), smoothstep(0.0, 1.0, gy - iy as f32));
            let at = |i: usize, j: usize| g[j * (grid + 1) + i];
            let top = at(ix, iy) + (at(ix + 1, iy) - at(ix, iy)) * fx;
            let bot = at(ix, iy + 1) + (at(ix + 1, iy + 1) - at(ix, iy + 1)) * fx;
            out[y * w + x] = top + (bot - top) * fy;
        }
    }
    out
}

fn background(spec: &DomainSpec, r: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<Rgb> {
    let c0: Rgb = [r.random_range(20.0..235.0), r.random_range(20.0..235.0), r.random_range(20.0..235.0)];
    let c1: Rgb = [r.random_range(20.0..235.0), r.random_range(20.0..235.0), r.random_range(20.0..235.0)];
    match spec.background {
        Background::Gradient => {
            let theta: f32 = r.random_range(0.0..std::f32::consts::TAU);
            let (dx, dy) = (theta.cos(), theta.sin());
            (0..w * h)
                .map(|i| {
                    let (x, y) = ((i % w) as f32 / w as f32 - 0.5, (i / w) as f32 / h as f32 - 0.5);
                    lerp(c0, c1, (x * dx + y * dy + 0.5).clamp(0.0, 1.0))
                })
                .collect()
        }
        Background::Noise => {
            let coarse = value_noise(r, 4, w, h);
            let fine = value_noise(r, 8, w, h);
            coarse
                .iter()
                .zip(&fine)
                .map(|(a, b)| lerp(c0, c1, 0.65 * a + 0.35 * b))
                .collect()
        }
    }
}

fn gaussian_blur(buf: &mut [Rgb], w: usize, h: usize, sigma: f32) {
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f32 = kernel.iter().sum();
    let pass = |src: &[Rgb], horizontal: bool| -> Vec<Rgb> {
        let mut dst = vec![[0.0; 3]; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0f32; 3];
                for (k, &kw) in kernel.iter().enumerate() {
                    let o = k as isize - radius;
                    let (sx, sy) = if horizontal {
                        ((x as isize + o).clamp(0, w as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + o).clamp(0, h as isize - 1) as usize)
                    };
                    let p = src[sy * w + sx];
                    for c in 0..3 {
                        acc[c] += kw * p[c];
                    }
                }
                dst[y * w + x] = acc.map(|a| a / norm);
            }
        }
        dst
    };
    let tmp = pass(buf, true);
    let out = pass(&tmp, false);
    buf.copy_from_slice(&out);
}

/// Keeps 4x4 block means and quantizes deviations from them, which flattens
/// fine detail the way coarse transform coding does.
fn block_quantize(buf: &mut [Rgb], w: usize, h: usize, strength: f32) {
    if strength <= 0.0 {
        return;
    }
    let step = 1.0 + strength * 40.0;
    for by in (0..h).step_by(4) {
        for bx in (0..w).step_by(4) {
            let (ey, ex) = ((by + 4).min(h), (bx + 4).min(w));
            let n = ((ey - by) * (ex - bx)) as f32;
            for c in 0..3 {
                let mut mean = 0.0;
                for y in by..ey {
                    for x in bx..ex {
                        mean += buf[y * w + x][c];
                    }
                }
                mean /= n;
                for y in by..ey {
                    for x in bx..ex {
                        let d = buf[y * w + x][c] - mean;
                        buf[y * w + x][c] = mean + (d / step).round() * step;
                    }
                }
            }
        }
    }
}

/// Renders one sample. Every random draw happens for both labels so that a
/// real and a fake with the same seed share their host scene.
pub fn render_sample(
    spec: &DomainSpec,
    width: usize,
    height: usize,
    channels: usize,
    label: Label,
    seed: u64,
) -> Result<(Image, SeamGeometry)> {
    spec.validate()?;
    let mut r = rng::rng(seed);
    let (w, h) = (width, height);
    let (wf, hf) = (w as f32, h as f32);
    let mut buf = background(spec, &mut r, w, h);
    let host = random_face(&mut r, wf, hf);
    let mut donor = match spec.patch_source {
        PatchSource::Donor => random_face(&mut r, wf, hf),
        PatchSource::Retinted => host,
    };
    // swapped faces are aligned to the host's geometry but keep their colours
    donor.cx = host.cx;
    donor.cy = host.cy;
    donor.rx = host.rx;
    donor.ry = host.ry;
    // guarantee a visible colour mismatch across the seam
    let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
    let shift = sign * r.random_range(22.0..45.0);
    let tint: Rgb = [r.random_range(-12.0..12.0), r.random_range(-12.0..12.0), r.random_range(-12.0..12.0)];
    for c in 0..3 {
        donor.skin[c] = (host.skin[c] + shift + tint[c]).clamp(0.0, 255.0);
    }
    let seam = SeamGeometry {
        cx: host.cx + wf * r.random_range(-0.03..0.03),
        cy: host.cy + hf * r.random_range(-0.03..0.03),
        rx: host.rx * r.random_range(0.68..0.78),
        ry: host.ry * r.random_range(0.7..0.8),
    };
    let feather = 0.02 + (1.0 - spec.seam_sharpness) * 0.3;

    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            let cov = host.coverage(px, py);
            if cov <= 0.0 {
                continue;
            }
            let mut face = host.color_at(px, py);
            if label == Label::Fake {
                let u = (px - seam.cx) / seam.rx;
                let v = (py - seam.cy) / seam.ry;
                let rho = (u * u + v * v).sqrt();
                let alpha = 1.0 - smoothstep(1.0 - feather, 1.0 + feather, rho);
                face = lerp(face, donor.color_at(px, py), alpha);
            }
            let i = y * w + x;
            buf[i] = lerp(buf[i], face, cov);
        }
    }

    gaussian_blur(&mut buf, w, h, spec.blur_sigma);
    block_quantize(&mut buf, w, h, spec.quantization);
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, spec.noise_sigma).expect("validated sigma");
        for p in buf.iter_mut() {
            for c in p.iter_mut() {
                *c += normal.sample(&mut r);
            }
        }
    }

    let mut planes: Vec<Vec<f32>> = if channels == 3 {
        (0..3).map(|c| buf.iter().map(|p| p[c]).collect()).collect()
    } else {
        vec![buf.iter().map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).collect()]
    };
    let (lo, hi) = (spec.tone_low as f32, spec.tone_high as f32);
    for plane in planes.iter_mut() {
        let min = plane.iter().copied().fold(f32::INFINITY, f32::min);
        let max = plane.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let span = (max - min).max(1e-3);
        for v in plane.iter_mut() {
            *v = lo + (*v - min) / span * (hi - lo);
        }
    }
    let mut pixels = Vec::with_capacity(w * h * channels);
    for i in 0..w * h {
        for plane in &planes {
            pixels.push((plane[i] + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
    }
    Ok((Image::new(w, h, channels, pixels)?, seam))
}

/// All samples of one domain: reals first in seed order, then fakes, each
/// rendered from its own derived seed.
pub fn generate(spec: &DomainSpec, manifest: &DatasetManifest, seed: u64) -> Result<Vec<LabeledImage>> {
    spec.validate()?;
    manifest.validate()?;
    let counts = manifest.counts_for(spec.id)?;
    let labels: Vec<Label> = std::iter::repeat_n(Label::Real, counts.real)
        .chain(std::iter::repeat_n(Label::Fake, counts.fake))
        .collect();
    let domain_seed = rng::derive_seed(seed, streams::SYNTH, spec.id as u64);
    labels
        .par_iter()
        .enumerate()
        .map(|(i, &label)| {
            let s = rng::derive_seed(domain_seed, streams::SYNTH, i as u64);
            let (image, _) = render_sample(spec, manifest.width, manifest.height, manifest.channels, label, s)?;
            Ok(LabeledImage {
                image,
                label,
                domain: spec.id,
            })
        })
        .collect()
}
