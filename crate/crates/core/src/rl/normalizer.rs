use crate::error::{Error, Result};
use crate::nn::{Dense, Layer, Network};

/// Per-feature standardization of agent inputs, fitted once on the initial
/// states of the training set. Features with (near) zero spread are only
/// centred.
#[derive(Clone, Debug, PartialEq)]
pub struct StateNormalizer {
    mean: Vec<f32>,
    inv_std: Vec<f32>,
}

impl StateNormalizer {
    pub fn identity(dim: usize) -> Self {
        StateNormalizer {
            mean: vec![0.0; dim],
            inv_std: vec![1.0; dim],
        }
    }

    pub fn fit<'s>(dim: usize, states: impl IntoIterator<Item = &'s [f32]>) -> Result<Self> {
        let mut sum = vec![0.0f64; dim];
        let mut sq = vec![0.0f64; dim];
        let mut n = 0usize;
        for s in states {
            if s.len() != dim {
                return Err(Error::invalid(format!("state has length {}, expected {dim}", s.len())));
            }
            for (j, &v) in s.iter().enumerate() {
                sum[j] += v as f64;
                sq[j] += v as f64 * v as f64;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::invalid("cannot fit a normalizer without states"));
        }
        let mut out = Self::identity(dim);
        for j in 0..dim {
            let mean = sum[j] / n as f64;
            let var = (sq[j] / n as f64 - mean * mean).max(0.0);
            out.mean[j] = mean as f32;
            let std = var.sqrt();
            out.inv_std[j] = if std > 1e-6 { (1.0 / std) as f32 } else { 1.0 };
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_identity(&self) -> bool {
        self.mean.iter().all(|&m| m == 0.0) && self.inv_std.iter().all(|&s| s == 1.0)
    }

    pub fn apply_into(&self, state: &[f32], out: &mut Vec<f32>) {
        out.extend(state.iter().zip(&self.mean).zip(&self.inv_std).map(|((&x, &m), &s)| (x - m) * s));
    }

    /// Stored as a diagonal dense layer holding `inv_std` and `mean`.
    pub(crate) fn to_network(&self) -> Network {
        let dim = self.dim();
        let mut d = Dense::zeroed(dim, dim);
        for j in 0..dim {
            d.weight.value.data_mut()[j * dim + j] = self.inv_std[j];
        }
        d.bias.value.data_mut().copy_from_slice(&self.mean);
        Network::new(vec![dim], vec![Layer::Dense(d)]).expect("square dense layer")
    }

    pub(crate) fn from_network(net: &Network) -> Result<Self> {
        match net.layers() {
            [Layer::Dense(d)] if d.inputs == d.outputs => {
                let dim = d.inputs;
                Ok(StateNormalizer {
                    mean: d.bias.value.data().to_vec(),
                    inv_std: (0..dim).map(|j| d.weight.value.data()[j * dim + j]).collect(),
                })
            }
            _ => Err(Error::invalid("malformed state normalizer")),
        }
    }
}
