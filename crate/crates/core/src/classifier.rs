//! The supervised real/fake classifier that acts as the RL environment.
//!
//! Architecture: two `conv3x3 -> relu -> maxpool2` blocks, a batchnorm over the
//! pooled maps, a `dense(D) -> relu` feature layer and a `dense(2)` head. The
//! post-ReLU feature layer activations are the feature map used as RL state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::Image;
use crate::error::{Error, Result};
use crate::nn::{
    cross_entropy, cross_entropy_batch, softmax, Adam, AdamConfig, BatchNorm, Checkpoint, Conv2d,
    Dense, Layer, Mode, Network, Tensor,
};
use crate::rng::{self, streams};
use crate::Label;

/// Penultimate-layer activations of the classifier.
pub type FeatureMap = Vec<f32>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabeledImage {
    pub image: Image,
    pub label: Label,
    /// Identifier of the domain that produced the image.
    pub domain: u8,
}

/// What the RL environment and the TTA stage need from a classifier.
pub trait Detector: Sync {
    fn input_dims(&self) -> (usize, usize, usize);

    fn feature_map(&self, image: &Image) -> Result<FeatureMap>;

    /// Probability of the fake class.
    fn predict_proba(&self, image: &Image) -> Result<f32>;

    /// Per-sample cross-entropy in inference mode.
    fn loss_of(&self, image: &Image, label: Label) -> Result<f32> {
        let p = self.predict_proba(image)? as f64;
        let p_label = match label {
            Label::Fake => p,
            Label::Real => 1.0 - p,
        };
        Ok((-p_label.max(1e-12).ln()) as f32)
    }

    /// Feature map and loss from a single pass where possible.
    fn observe(&self, image: &Image, label: Label) -> Result<(FeatureMap, f32)> {
        Ok((self.feature_map(image)?, self.loss_of(image, label)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub feature_dim: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            width: 32,
            height: 32,
            channels: 3,
            conv1: 8,
            conv2: 16,
            feature_dim: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 10,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,accuracy\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.mean_loss, e.accuracy));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    config: ClassifierConfig,
    network: Network,
    /// Number of leading layers that produce the feature map.
    feature_end: usize,
    steps: u64,
}

const CHECKPOINT_KIND: &str = "classifier";

impl ClassifierModel {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self> {
        if config.width < 4 || config.height < 4 {
            return Err(Error::invalid("classifier input must be at least 4x4"));
        }
        let mut r = rng::rng_for(seed, streams::INIT, 0);
        let (w4, h4) = (config.width / 4, config.height / 4);
        let layers = vec![
            Layer::Conv2d(Conv2d::new(config.channels, config.conv1, 3, 1, &mut r)),
            Layer::Relu,
            Layer::MaxPool2d { size: 2 },
            Layer::Conv2d(Conv2d::new(config.conv1, config.conv2, 3, 1, &mut r)),
            Layer::Relu,
            Layer::MaxPool2d { size: 2 },
            Layer::BatchNorm(BatchNorm::new(config.conv2)),
            Layer::Dense(Dense::new(config.conv2 * w4 * h4, config.feature_dim, &mut r)),
            Layer::Relu,
            Layer::Dense(Dense::new(config.feature_dim, 2, &mut r)),
        ];
        let network = Network::new(vec![config.channels, config.height, config.width], layers)?;
        Ok(ClassifierModel {
            config,
            network,
            feature_end: 9,
            steps: 0,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.steps
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        let want = (self.config.width, self.config.height, self.config.channels);
        if image.dims() != want {
            return Err(Error::InvalidImage(format!(
                "image is {:?}, classifier expects {want:?} (w, h, c)",
                image.dims()
            )));
        }
        Ok(())
    }

    fn batch_tensor(&self, images: &[&Image]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(images.len() * self.network.input_shape().iter().product::<usize>());
        for img in images {
            self.check_image(img)?;
            data.extend(img.to_chw());
        }
        let mut shape = vec![images.len()];
        shape.extend_from_slice(self.network.input_shape());
        Tensor::new(shape, data)
    }

    /// Feature maps and logits for a batch, inference mode.
    pub fn forward_batch(&self, images: &[&Image]) -> Result<(Tensor, Tensor)> {
        let x = self.batch_tensor(images)?;
        let features = self.network.infer_range(&x, 0..self.feature_end)?;
        let logits = self
            .network
            .infer_range(&features, self.feature_end..self.network.layers().len())?;
        if !logits.is_finite() {
            return Err(Error::NonFinite("classifier logits".into()));
        }
        Ok((features, logits))
    }

    pub fn logits(&self, image: &Image) -> Result<Vec<f32>> {
        Ok(self.forward_batch(&[image])?.1.into_data())
    }

    /// Fake-class probabilities for many images, evaluated in parallel.
    pub fn predict_many(&self, images: &[&Image]) -> Result<Vec<f32>> {
        let chunks: Vec<Vec<f32>> = images
            .par_chunks(32)
            .map(|chunk| {
                let (_, logits) = self.forward_batch(chunk)?;
                Ok((0..chunk.len()).map(|i| softmax(logits.row(i))[1]).collect())
            })
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Trains in place with Adam on mean cross-entropy. Deterministic in
    /// `opts.seed`; returns one log entry per epoch.
    pub fn train(&mut self, data: &[LabeledImage], opts: &TrainOptions) -> Result<TrainLog> {
        let fake = data.iter().filter(|d| d.label == Label::Fake).count();
        let real = data.len() - fake;
        if real == 0 || fake == 0 {
            return Err(Error::SingleClass { real, fake });
        }
        if opts.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        for d in data {
            self.check_image(&d.image)?;
        }
        let per = self.network.input_shape().iter().product::<usize>();
        let inputs: Vec<Vec<f32>> = data.par_iter().map(|d| d.image.to_chw()).collect();
        let mut adam = Adam::new(opts.adam);
        adam.set_steps(self.steps);
        let mut log = TrainLog::default();
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..opts.epochs {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng::rng_for(opts.seed, streams::SHUFFLE, epoch as u64));
            let (mut loss_sum, mut correct) = (0.0f64, 0usize);
            for batch in order.chunks(opts.batch_size) {
                let mut x = Vec::with_capacity(batch.len() * per);
                let mut labels = Vec::with_capacity(batch.len());
                for &i in batch {
                    x.extend_from_slice(&inputs[i]);
                    labels.push(data[i].label.index());
                }
                let mut shape = vec![batch.len()];
                shape.extend_from_slice(self.network.input_shape());
                let x = Tensor::new(shape, x)?;
                let (logits, cache) = self.network.forward(&x, Mode::Train)?;
                let (loss, grad) = cross_entropy_batch(&logits, &labels)?;
                loss_sum += loss * batch.len() as f64;
                correct += labels
                    .iter()
                    .enumerate()
                    .filter(|&(i, &y)| logits.argmax_row(i) == y)
                    .count();
                self.network.zero_grad();
                self.network.backward(cache, &grad)?;
                adam.step(&mut self.network)?;
            }
            log.epochs.push(EpochStats {
                epoch: epoch + 1,
                mean_loss: loss_sum / data.len() as f64,
                accuracy: correct as f64 / data.len() as f64,
            });
        }
        self.steps = adam.steps();
        Ok(log)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(CHECKPOINT_KIND, self.steps, vec![self.network.clone()])
            .with_meta("width", self.config.width)
            .with_meta("height", self.config.height)
            .with_meta("channels", self.config.channels)
            .with_meta("conv1", self.config.conv1)
            .with_meta("conv2", self.config.conv2)
            .with_meta("feature_dim", self.config.feature_dim)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND || ck.networks.len() != 1 {
            return Err(Error::invalid(format!(
                "checkpoint kind `{}` with {} networks is not a classifier",
                ck.kind,
                ck.networks.len()
            )));
        }
        let config = ClassifierConfig {
            width: ck.meta_parse("width")?,
            height: ck.meta_parse("height")?,
            channels: ck.meta_parse("channels")?,
            conv1: ck.meta_parse("conv1")?,
            conv2: ck.meta_parse("conv2")?,
            feature_dim: ck.meta_parse("feature_dim")?,
        };
        let mut model = ClassifierModel::new(config, 0)?;
        if model.network.input_shape() != ck.networks[0].input_shape()
            || model.network.param_count() != ck.networks[0].param_count()
        {
            return Err(Error::invalid("checkpoint network does not match its metadata"));
        }
        model.network = ck.networks[0].clone();
        model.steps = ck.step;
        Ok(model)
    }
}

impl Detector for ClassifierModel {
    fn input_dims(&self) -> (usize, usize, usize) {
        (self.config.width, self.config.height, self.config.channels)
    }

    fn feature_map(&self, image: &Image) -> Result<FeatureMap> {
        Ok(self.forward_batch(&[image])?.0.into_data())
    }

    fn predict_proba(&self, image: &Image) -> Result<f32> {
        Ok(softmax(&self.logits(image)?)[1])
    }

    fn loss_of(&self, image: &Image, label: Label) -> Result<f32> {
        Ok(cross_entropy(&self.logits(image)?, label.index())? as f32)
    }

    fn observe(&self, image: &Image, label: Label) -> Result<(FeatureMap, f32)> {
        let (f, logits) = self.forward_batch(&[image])?;
        Ok((f.into_data(), cross_entropy(logits.data(), label.index())? as f32))
    }
}
