//! Minimal tensor core: batched dense/conv layers with hand-written reverse
//! passes, cross-entropy, Adam, and a binary checkpoint format.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod layers;
mod loss;
mod network;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, MAGIC as CHECKPOINT_MAGIC};
pub use layers::{softmax, BatchNorm, Conv2d, Dense, Layer, Mode, Param};
pub use loss::{cross_entropy, cross_entropy_batch};
pub use network::{ForwardCache, Network};
pub use tensor::{argmax, Tensor};

use rand::Rng;


/// `inputs -> hidden (relu) -> ... -> outputs` multilayer perceptron. When
/// `zero_last` is set the output layer starts at zero, so every output is equal.
pub fn mlp<R: Rng>(
    inputs: usize,
    hidden: &[usize],
    outputs: usize,
    zero_last: bool,
    rng: &mut R,
) -> Network {
    let mut layers = Vec::new();
    let mut prev = inputs;
    for &h in hidden {
        layers.push(Layer::Dense(Dense::new(prev, h, rng)));
        layers.push(Layer::Relu);
        prev = h;
    }
    let last = if zero_last {
        Dense::zeroed(prev, outputs)
    } else {
        let mut d = Dense::new(prev, outputs, rng);
        // small output layer keeps initial logits/values near zero
        d.weight.value.data_mut().iter_mut().for_each(|w| *w *= 0.1);
        d
    };
    layers.push(Layer::Dense(last));
    Network::new(vec![inputs], layers).expect("mlp shapes are consistent")
}
