use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use super::layers::{Layer, LayerCache, Mode, Param};
use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// A feed-forward stack of layers operating on batched tensors.
///
/// `input_shape` excludes the batch axis. Every parameter update bumps an
/// internal version; a [`ForwardCache`] is only accepted by `backward` if it was
/// produced by this network at its current version.
#[derive(Debug)]
pub struct Network {
    id: u64,
    version: u64,
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Network {
            id: next_id(),
            version: 0,
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
        }
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

/// Intermediates recorded by a training-mode forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    network: u64,
    version: u64,
    mode: Mode,
    output_shape: Vec<usize>,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let mut shape = vec![1];
        shape.extend_from_slice(&input_shape);
        for (i, layer) in layers.iter().enumerate() {
            shape = layer.output_shape(i, &shape)?;
        }
        Ok(Network {
            id: next_id(),
            version: 0,
            input_shape,
            layers,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the layers; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> Vec<usize> {
        let mut shape = vec![1];
        shape.extend_from_slice(&self.input_shape);
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(i, &shape).expect("validated at construction");
        }
        shape[1..].to_vec()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.version += 1;
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                p.grad.fill(0.0);
            }
        }
    }

    /// Copies parameter values (and batchnorm statistics) from `other`.
    pub fn copy_from(&mut self, other: &Network) {
        self.version += 1;
        self.layers = other.layers.clone();
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape().len() != self.input_shape.len() + 1 || input.shape()[1..] != self.input_shape[..] {
            let kind = self.layers.first().map(|l| l.kind()).unwrap_or("input");
            return Err(Error::ShapeMismatch {
                layer: 0,
                kind,
                expected: format!("[N, {:?}]", self.input_shape),
                actual: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Forward pass. In [`Mode::Train`] the returned cache can be fed to
    /// [`Network::backward`] and batchnorm layers use and update batch
    /// statistics; in [`Mode::Infer`] statistics are frozen and the cache is
    /// empty.
    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<(Tensor, ForwardCache)> {
        self.check_input(input)?;
        let mut caches = Vec::new();
        let out = match mode {
            Mode::Infer => self.infer(input)?,
            Mode::Train => {
                let mut x = input.clone();
                for (i, layer) in self.layers.iter_mut().enumerate() {
                    let (y, cache) = layer.forward_train(i, x)?;
                    caches.push(cache);
                    x = y;
                }
                x
            }
        };
        if !out.is_finite() {
            return Err(Error::NonFinite("forward output".into()));
        }
        Ok((
            out.clone(),
            ForwardCache {
                network: self.id,
                version: self.version,
                mode,
                output_shape: out.shape().to_vec(),
                layers: caches,
            },
        ))
    }

    /// Inference-mode forward pass; never mutates the network.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        self.infer_range(input, 0..self.layers.len())
    }

    /// Runs only `layers[range]` in inference mode. The input must already have
    /// the shape produced by `layers[..range.start]`.
    pub fn infer_range(&self, input: &Tensor, range: Range<usize>) -> Result<Tensor> {
        let mut x = input.clone();
        for i in range {
            x = self.layers[i].forward_infer(i, &x)?;
        }
        Ok(x)
    }

    /// Backpropagates `grad_output` through the cached pass, adding into every
    /// parameter's gradient accumulator. Returns the gradient w.r.t. the input.
    pub fn backward(&mut self, cache: ForwardCache, grad_output: &Tensor) -> Result<Tensor> {
        if cache.network != self.id {
            return Err(Error::StaleCache("cache came from a different network"));
        }
        if cache.mode != Mode::Train {
            return Err(Error::StaleCache("cache was produced in inference mode"));
        }
        if cache.version != self.version || cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache("parameters changed since the forward pass"));
        }
        if grad_output.shape() != cache.output_shape.as_slice() {
            return Err(Error::InvalidTensor(format!(
                "output gradient shape {:?} != output shape {:?}",
                grad_output.shape(),
                cache.output_shape
            )));
        }
        let mut g = grad_output.clone();
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers).rev() {
            g = layer.backward(lc, &g)?;
        }
        if self.params().iter().any(|p| !p.grad.is_finite()) {
            return Err(Error::NonFinite("parameter gradients".into()));
        }
        Ok(g)
    }
}
