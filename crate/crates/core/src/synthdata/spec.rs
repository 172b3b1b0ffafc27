use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::Label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Gradient,
    /// Two-octave value noise.
    Noise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchSource {
    /// Face region of an independently drawn sample.
    Donor,
    /// The host's own face region, re-tinted.
    Retinted,
}

/// Rendering and post-processing parameters of one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    pub id: u8,
    pub background: Background,
    /// Gaussian blur sigma in pixels, `[0, 3]`.
    pub blur_sigma: f32,
    /// Additive Gaussian noise sigma in gray levels, `[0, 40]`.
    pub noise_sigma: f32,
    /// Block quantization strength, `[0, 1]`; 0 disables it.
    pub quantization: f32,
    /// 1 is a hard paste edge, 0 a wide feather; `[0, 1]`.
    pub seam_sharpness: f32,
    pub patch_source: PatchSource,
    /// Every channel of the final image is stretched to `[tone_low, tone_high]`.
    pub tone_low: u8,
    pub tone_high: u8,
}

impl DomainSpec {
    /// Training domain: full tonal range, crisp seams, clean capture.
    pub fn domain_a() -> Self {
        DomainSpec {
            name: "A".into(),
            id: 0,
            background: Background::Gradient,
            blur_sigma: 0.0,
            noise_sigma: 2.0,
            quantization: 0.0,
            seam_sharpness: 0.9,
            patch_source: PatchSource::Donor,
            tone_low: 0,
            tone_high: 255,
        }
    }

    /// Shifted domain: compressed tones, blur, noise, coarse quantization.
    pub fn domain_b() -> Self {
        DomainSpec {
            name: "B".into(),
            id: 1,
            background: Background::Noise,
            blur_sigma: 0.6,
            noise_sigma: 6.0,
            quantization: 0.3,
            seam_sharpness: 0.6,
            patch_source: PatchSource::Donor,
            tone_low: 60,
            tone_high: 180,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f32, lo: f32, hi: f32| {
            if v.is_finite() && (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("domain `{}`: {name} = {v} outside [{lo}, {hi}]", self.name)))
            }
        };
        check("blur_sigma", self.blur_sigma, 0.0, 3.0)?;
        check("noise_sigma", self.noise_sigma, 0.0, 40.0)?;
        check("quantization", self.quantization, 0.0, 1.0)?;
        check("seam_sharpness", self.seam_sharpness, 0.0, 1.0)?;
        if self.tone_low >= self.tone_high {
            return Err(Error::invalid(format!(
                "domain `{}`: tone range [{}, {}] is empty",
                self.name, self.tone_low, self.tone_high
            )));
        }
        Ok(())
    }

    /// Number of rendering parameters in which two domains differ.
    pub fn differences(&self, other: &DomainSpec) -> usize {
        [
            self.background != other.background,
            self.blur_sigma != other.blur_sigma,
            self.noise_sigma != other.noise_sigma,
            self.quantization != other.quantization,
            self.seam_sharpness != other.seam_sharpness,
            self.patch_source != other.patch_source,
            (self.tone_low, self.tone_high) != (other.tone_low, other.tone_high),
        ]
        .iter()
        .filter(|&&d| d)
        .count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainCounts {
    pub domain: u8,
    pub real: usize,
    pub fake: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub counts: Vec<DomainCounts>,
    pub splits: SplitRatios,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 || self.width > 1024 || self.height > 1024 {
            return Err(Error::invalid(format!(
                "image size {}x{} outside 8..=1024",
                self.width, self.height
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::invalid(format!("{} channels (expected 1 or 3)", self.channels)));
        }
        if self.counts.is_empty() || self.counts.iter().any(|c| c.real == 0 || c.fake == 0) {
            return Err(Error::invalid("every domain needs positive real and fake counts"));
        }
        let s = self.splits;
        let parts = [s.train, s.val, s.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split ratios must be in [0, 1] and sum to 1"));
        }
        Ok(())
    }

    pub fn counts_for(&self, domain: u8) -> Result<DomainCounts> {
        self.counts
            .iter()
            .copied()
            .find(|c| c.domain == domain)
            .ok_or_else(|| Error::invalid(format!("manifest has no counts for domain {domain}")))
    }
}

/// Disjoint, exhaustive index sets.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Stratified by label: each class is shuffled and cut by the ratios, the
    /// remainder going to test. Each set is returned in ascending order.
    pub fn stratified(labels: &[Label], ratios: SplitRatios, seed: u64) -> Splits {
        let mut out = Splits::default();
        for (c, class) in [Label::Real, Label::Fake].into_iter().enumerate() {
            let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            idx.shuffle(&mut rng::rng_for(seed, streams::SPLIT, c as u64));
            let n = idx.len();
            let n_train = (n as f64 * ratios.train).floor() as usize;
            let n_val = ((n as f64 * ratios.val).floor() as usize).min(n - n_train);
            out.train.extend_from_slice(&idx[..n_train]);
            out.val.extend_from_slice(&idx[n_train..n_train + n_val]);
            out.test.extend_from_slice(&idx[n_train + n_val..]);
        }
        out.train.sort_unstable();
        out.val.sort_unstable();
        out.test.sort_unstable();
        out
    }
}
