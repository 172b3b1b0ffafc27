//! Central finite-difference gradient checking.
//!
//! The scalar probed is `sum_i c_i * out_i` for fixed random coefficients
//! `c`, evaluated with training-mode forward passes only; the analytic side
//! comes from one `backward` call with `c` as the output gradient.

use rand::Rng;

use super::layers::Mode;
use super::network::Network;
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct TensorCheck {
    /// `layer:param` or `input`.
    pub name: String,
    pub analytic: Vec<f32>,
    pub numeric: Vec<f32>,
}

impl TensorCheck {
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)`; 0 when
    /// both vanish.
    pub fn relative_error(&self) -> f64 {
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let diff = norm(&mut self.analytic.iter().zip(&self.numeric).map(|(a, n)| (*a - *n) as f64));
        let scale = norm(&mut self.analytic.iter().map(|&a| a as f64))
            .max(norm(&mut self.numeric.iter().map(|&n| n as f64)));
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.relative_error())
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.relative_error().total_cmp(&b.relative_error()))
    }
}

fn probe(net: &Network, x: &Tensor, coeffs: &[f32]) -> Result<f64> {
    let mut scratch = net.clone();
    let (out, _) = scratch.forward(x, Mode::Train)?;
    Ok(out
        .data()
        .iter()
        .zip(coeffs)
        .map(|(&o, &c)| o as f64 * c as f64)
        .sum())
}

/// Compares every parameter gradient and the input gradient of `net` at `x`
/// against central differences with step `h`.
pub fn check<R: Rng>(net: &Network, x: &Tensor, h: f32, rng: &mut R) -> Result<GradCheckReport> {
    let mut analytic_net = net.clone();
    let (out, cache) = analytic_net.forward(x, Mode::Train)?;
    let coeffs: Vec<f32> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    analytic_net.zero_grad();
    let gx = analytic_net.backward(cache, &Tensor::new(out.shape().to_vec(), coeffs.clone())?)?;

    let mut tensors = Vec::new();
    let mut slot = 0;
    for (li, layer) in net.layers().iter().enumerate() {
        for (pi, _) in layer.params().iter().enumerate() {
            let analytic = analytic_net.params()[slot].grad.data().to_vec();
            let mut numeric = Vec::with_capacity(analytic.len());
            for j in 0..analytic.len() {
                let mut plus = net.clone();
                plus.params_mut()[slot].value.data_mut()[j] += h;
                let mut minus = net.clone();
                minus.params_mut()[slot].value.data_mut()[j] -= h;
                let d = (probe(&plus, x, &coeffs)? - probe(&minus, x, &coeffs)?) / (2.0 * h as f64);
                numeric.push(d as f32);
            }
            tensors.push(TensorCheck {
                name: format!("{li}:{}:{pi}", layer.kind()),
                analytic,
                numeric,
            });
            slot += 1;
        }
    }

    let mut numeric = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[j] += h;
        let mut xm = x.clone();
        xm.data_mut()[j] -= h;
        let d = (probe(net, &xp, &coeffs)? - probe(net, &xm, &coeffs)?) / (2.0 * h as f64);
        numeric.push(d as f32);
    }
    tensors.push(TensorCheck {
        name: "input".into(),
        analytic: gx.into_data(),
        numeric,
    });
    Ok(GradCheckReport { tensors })
}
