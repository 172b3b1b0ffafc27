use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit image with interleaved channels (`HWC` order).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero-sized image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("{channels} channels (need 1 or 3)")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "buffer of {} bytes for {width}x{height}x{channels}",
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Same geometry, new pixel buffer.
    pub(crate) fn with_pixels(&self, pixels: Vec<u8>) -> Image {
        debug_assert_eq!(pixels.len(), self.pixels.len());
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            pixels,
        }
    }

    /// Planar `[C, H, W]` floats scaled to `[0, 1]`.
    pub fn to_chw(&self) -> Vec<f32> {
        let (w, h, c) = self.dims();
        let mut out = vec![0.0f32; w * h * c];
        for (i, &p) in self.pixels.iter().enumerate() {
            let ch = i % c;
            let pix = i / c;
            out[ch * w * h + pix] = p as f32 / 255.0;
        }
        out
    }

    /// ITU-R 601 luma per pixel, as used by the colour-balance blend.
    pub fn luma(&self) -> Vec<f32> {
        match self.channels {
            1 => self.pixels.iter().map(|&p| p as f32).collect(),
            _ => self
                .pixels
                .chunks_exact(3)
                .map(|px| (px[0] as f32 * 299.0 + px[1] as f32 * 587.0 + px[2] as f32 * 114.0) / 1000.0)
                .collect(),
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            color,
        )?;
        Ok(())
    }

    /// Reads a PNG; grayscale stays single-channel, everything else becomes RGB.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img.color().channel_count() {
            1 | 2 => Image::new(w, h, 1, img.into_luma8().into_raw()),
            _ => Image::new(w, h, 3, img.into_rgb8().into_raw()),
        }
    }
}
