use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A trainable tensor and its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param { value, grad }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs, inputs]`
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    /// He-uniform weights, zero bias.
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / inputs as f32).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Dense {
            inputs,
            outputs,
            weight: Param::new(Tensor::new(vec![outputs, inputs], w).expect("dense shape")),
            bias: Param::new(Tensor::zeros(&[outputs])),
        }
    }

    pub fn zeroed(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: Param::new(Tensor::zeros(&[outputs, inputs])),
            bias: Param::new(Tensor::zeros(&[outputs])),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    /// `[out_channels, in_channels, kernel, kernel]`
    pub weight: Param,
    pub bias: Param,
}

impl Conv2d {
    /// Stride-1 convolution; `padding = kernel / 2` keeps the spatial size.
    pub fn new<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let bound = (6.0 / fan_in as f32).sqrt();
        let w = (0..out_channels * fan_in)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            padding,
            weight: Param::new(
                Tensor::new(vec![out_channels, in_channels, kernel, kernel], w)
                    .expect("conv shape"),
            ),
            bias: Param::new(Tensor::zeros(&[out_channels])),
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ho = (h + 2 * self.padding).checked_sub(self.kernel)? + 1;
        let wo = (w + 2 * self.padding).checked_sub(self.kernel)? + 1;
        Some((ho, wo))
    }
}

/// Per-channel normalization over every axis except axis 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub channels: usize,
    /// Weight kept on the old running statistic at each training batch.
    pub momentum: f32,
    pub eps: f32,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            momentum: 0.9,
            eps: 1e-5,
            gamma: Param::new(Tensor::full(&[channels], 1.0)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    Relu,
    MaxPool2d { size: usize },
    BatchNorm(BatchNorm),
    /// Softmax over each batch entry's values.
    Softmax,
}

#[derive(Clone, Debug)]
pub(crate) enum LayerCache {
    Dense { input: Tensor },
    Conv2d { input: Tensor },
    Relu { input: Tensor },
    MaxPool { input_shape: Vec<usize>, argmax: Vec<usize> },
    BatchNorm { xhat: Tensor, inv_std: Vec<f32> },
    Softmax { output: Tensor },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Softmax => "softmax",
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            _ => Vec::new(),
        }
    }

    /// Output shape for an input of shape `shape` (batch axis included).
    pub fn output_shape(&self, index: usize, shape: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: String| Error::ShapeMismatch {
            layer: index,
            kind: self.kind(),
            expected,
            actual: shape.to_vec(),
        };
        if shape.len() < 2 {
            return Err(mismatch("a batch axis plus at least one data axis".into()));
        }
        match self {
            Layer::Dense(d) => {
                let per: usize = shape[1..].iter().product();
                if per != d.inputs {
                    return Err(mismatch(format!("{} values per sample", d.inputs)));
                }
                Ok(vec![shape[0], d.outputs])
            }
            Layer::Conv2d(c) => {
                let expected = || format!("[N, {}, H, W] with H, W >= {}", c.in_channels, c.kernel);
                if shape.len() != 4 || shape[1] != c.in_channels {
                    return Err(mismatch(expected()));
                }
                let (ho, wo) = c.out_hw(shape[2], shape[3]).ok_or_else(|| mismatch(expected()))?;
                Ok(vec![shape[0], c.out_channels, ho, wo])
            }
            Layer::MaxPool2d { size } => {
                if shape.len() != 4 || shape[2] < *size || shape[3] < *size {
                    return Err(mismatch(format!("[N, C, H, W] with H, W >= {size}")));
                }
                Ok(vec![shape[0], shape[1], shape[2] / size, shape[3] / size])
            }
            Layer::BatchNorm(b) => {
                if shape[1] != b.channels {
                    return Err(mismatch(format!("{} channels on axis 1", b.channels)));
                }
                Ok(shape.to_vec())
            }
            Layer::Relu | Layer::Softmax => Ok(shape.to_vec()),
        }
    }

    pub(crate) fn forward_infer(&self, index: usize, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(index, x.shape())?;
        Ok(match self {
            Layer::Dense(d) => dense_forward(d, x),
            Layer::Conv2d(c) => conv_forward(c, x, &out_shape),
            Layer::Relu => relu(x),
            Layer::MaxPool2d { size } => maxpool_forward(*size, x, &out_shape).0,
            Layer::BatchNorm(b) => {
                let inv_std: Vec<f32> = b
                    .running_var
                    .iter()
                    .map(|v| 1.0 / (v + b.eps).sqrt())
                    .collect();
                let xhat = normalize(x, &b.running_mean, &inv_std);
                scale_shift(&xhat, b)
            }
            Layer::Softmax => softmax_rows(x),
        })
    }

    pub(crate) fn forward_train(&mut self, index: usize, x: Tensor) -> Result<(Tensor, LayerCache)> {
        let out_shape = self.output_shape(index, x.shape())?;
        Ok(match self {
            Layer::Dense(d) => (dense_forward(d, &x), LayerCache::Dense { input: x }),
            Layer::Conv2d(c) => (
                conv_forward(c, &x, &out_shape),
                LayerCache::Conv2d { input: x },
            ),
            Layer::Relu => (relu(&x), LayerCache::Relu { input: x }),
            Layer::MaxPool2d { size } => {
                let (y, argmax) = maxpool_forward(*size, &x, &out_shape);
                (
                    y,
                    LayerCache::MaxPool {
                        input_shape: x.shape().to_vec(),
                        argmax,
                    },
                )
            }
            Layer::BatchNorm(b) => {
                let (mean, var, count) = channel_moments(&x);
                let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + b.eps).sqrt()).collect();
                let xhat = normalize(&x, &mean, &inv_std);
                let y = scale_shift(&xhat, b);
                let unbias = if count > 1 {
                    count as f32 / (count - 1) as f32
                } else {
                    1.0
                };
                for c in 0..b.channels {
                    b.running_mean[c] = b.momentum * b.running_mean[c] + (1.0 - b.momentum) * mean[c];
                    b.running_var[c] =
                        b.momentum * b.running_var[c] + (1.0 - b.momentum) * var[c] * unbias;
                }
                (y, LayerCache::BatchNorm { xhat, inv_std })
            }
            Layer::Softmax => {
                let y = softmax_rows(&x);
                (y.clone(), LayerCache::Softmax { output: y })
            }
        })
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub(crate) fn backward(&mut self, cache: &LayerCache, gy: &Tensor) -> Result<Tensor> {
        match (self, cache) {
            (Layer::Dense(d), LayerCache::Dense { input }) => Ok(dense_backward(d, input, gy)),
            (Layer::Conv2d(c), LayerCache::Conv2d { input }) => Ok(conv_backward(c, input, gy)),
            (Layer::Relu, LayerCache::Relu { input }) => {
                let data = input
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                Tensor::new(input.shape().to_vec(), data)
            }
            (Layer::MaxPool2d { .. }, LayerCache::MaxPool { input_shape, argmax }) => {
                let mut gx = Tensor::zeros(input_shape);
                let gxd = gx.data_mut();
                for (&src, &g) in argmax.iter().zip(gy.data()) {
                    gxd[src] += g;
                }
                Ok(gx)
            }
            (Layer::BatchNorm(b), LayerCache::BatchNorm { xhat, inv_std }) => {
                Ok(batchnorm_backward(b, xhat, inv_std, gy))
            }
            (Layer::Softmax, LayerCache::Softmax { output }) => {
                let w = output.row_len();
                let mut gx = Tensor::zeros(output.shape());
                for n in 0..output.batch() {
                    let y = output.row(n);
                    let g = &gy.data()[n * w..(n + 1) * w];
                    let dot: f32 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                    for (i, o) in gx.data_mut()[n * w..(n + 1) * w].iter_mut().enumerate() {
                        *o = y[i] * (g[i] - dot);
                    }
                }
                Ok(gx)
            }
            _ => Err(Error::StaleCache("cache does not belong to this layer")),
        }
    }
}

fn dense_forward(d: &Dense, x: &Tensor) -> Tensor {
    let n = x.batch();
    let w = d.weight.value.data();
    let b = d.bias.value.data();
    let mut out = Vec::with_capacity(n * d.outputs);
    for i in 0..n {
        let xi = x.row(i);
        for o in 0..d.outputs {
            let wo = &w[o * d.inputs..(o + 1) * d.inputs];
            let dot: f32 = wo.iter().zip(xi).map(|(a, b)| a * b).sum();
            out.push(dot + b[o]);
        }
    }
    Tensor::new(vec![n, d.outputs], out).expect("dense output")
}

fn dense_backward(d: &mut Dense, x: &Tensor, gy: &Tensor) -> Tensor {
    let n = x.batch();
    let (inp, outp) = (d.inputs, d.outputs);
    let mut gx = Tensor::zeros(x.shape());
    {
        let gw = d.weight.grad.data_mut();
        for i in 0..n {
            let xi = x.row(i);
            let gyi = &gy.data()[i * outp..(i + 1) * outp];
            for (o, &g) in gyi.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (w, &xv) in gw[o * inp..(o + 1) * inp].iter_mut().zip(xi) {
                    *w += g * xv;
                }
            }
        }
    }
    {
        let gb = d.bias.grad.data_mut();
        for i in 0..n {
            for o in 0..outp {
                gb[o] += gy.data()[i * outp + o];
            }
        }
    }
    let w = d.weight.value.data();
    let gxd = gx.data_mut();
    for i in 0..n {
        let gxi = &mut gxd[i * inp..(i + 1) * inp];
        for o in 0..outp {
            let g = gy.data()[i * outp + o];
            if g == 0.0 {
                continue;
            }
            for (a, &wv) in gxi.iter_mut().zip(&w[o * inp..(o + 1) * inp]) {
                *a += g * wv;
            }
        }
    }
    gx
}

/// Valid output-x range for kernel column `kx`: output x such that the input
/// column `x + kx - pad` lies in `[0, w)`.
fn x_range(kx: usize, pad: usize, w: usize, wo: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx);
    let hi = (w + pad).saturating_sub(kx).min(wo);
    (lo, hi.max(lo))
}

fn conv_forward(c: &Conv2d, x: &Tensor, out_shape: &[usize]) -> Tensor {
    let (n, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
    let (ho, wo) = (out_shape[2], out_shape[3]);
    let (k, p, ic, oc) = (c.kernel, c.padding, c.in_channels, c.out_channels);
    let wt = c.weight.value.data();
    let bias = c.bias.value.data();
    let mut out = Tensor::zeros(out_shape);
    let od = out.data_mut();
    let xd = x.data();
    for b in 0..n {
        for o in 0..oc {
            let plane = &mut od[(b * oc + o) * ho * wo..(b * oc + o + 1) * ho * wo];
            plane.iter_mut().for_each(|v| *v = bias[o]);
            for ci in 0..ic {
                let src = &xd[(b * ic + ci) * h * w..(b * ic + ci + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wt[((o * ic + ci) * k + ky) * k + kx];
                        let (x0, x1) = x_range(kx, p, w, wo);
                        for y in 0..ho {
                            let iy = y + ky;
                            if iy < p || iy - p >= h {
                                continue;
                            }
                            let srow = &src[(iy - p) * w..(iy - p + 1) * w];
                            let orow = &mut plane[y * wo..(y + 1) * wo];
                            for xo in x0..x1 {
                                orow[xo] += wv * srow[xo + kx - p];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(c: &mut Conv2d, x: &Tensor, gy: &Tensor) -> Tensor {
    let (n, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
    let (ho, wo) = (gy.shape()[2], gy.shape()[3]);
    let (k, p, ic, oc) = (c.kernel, c.padding, c.in_channels, c.out_channels);
    let mut gx = Tensor::zeros(x.shape());
    let xd = x.data();
    let gyd = gy.data();
    {
        let gb = c.bias.grad.data_mut();
        for b in 0..n {
            for o in 0..oc {
                gb[o] += gyd[(b * oc + o) * ho * wo..(b * oc + o + 1) * ho * wo]
                    .iter()
                    .sum::<f32>();
            }
        }
    }
    let wt = c.weight.value.data().to_vec();
    let gw = c.weight.grad.data_mut();
    let gxd = gx.data_mut();
    for b in 0..n {
        for o in 0..oc {
            let gplane = &gyd[(b * oc + o) * ho * wo..(b * oc + o + 1) * ho * wo];
            for ci in 0..ic {
                let base = (b * ic + ci) * h * w;
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * ic + ci) * k + ky) * k + kx;
                        let wv = wt[widx];
                        let (x0, x1) = x_range(kx, p, w, wo);
                        let mut acc = 0.0f32;
                        for y in 0..ho {
                            let iy = y + ky;
                            if iy < p || iy - p >= h {
                                continue;
                            }
                            let row = base + (iy - p) * w;
                            let grow = &gplane[y * wo..(y + 1) * wo];
                            for xo in x0..x1 {
                                let g = grow[xo];
                                acc += g * xd[row + xo + kx - p];
                                gxd[row + xo + kx - p] += wv * g;
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    gx
}

fn maxpool_forward(size: usize, x: &Tensor, out_shape: &[usize]) -> (Tensor, Vec<usize>) {
    let (n, ch, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (ho, wo) = (out_shape[2], out_shape[3]);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * ch * ho * wo);
    let mut argmax = Vec::with_capacity(out.capacity());
    for plane in 0..n * ch {
        let base = plane * h * w;
        for y in 0..ho {
            for xo in 0..wo {
                let mut best = base + y * size * w + xo * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = base + (y * size + dy) * w + xo * size + dx;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                }
                out.push(xd[best]);
                argmax.push(best);
            }
        }
    }
    (
        Tensor::new(out_shape.to_vec(), out).expect("pool output"),
        argmax,
    )
}

fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("relu output")
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f32]) -> Vec<f32> {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = row.iter().map(|&v| ((v - max) as f64).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / sum) as f32).collect()
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let mut data = Vec::with_capacity(x.len());
    for n in 0..x.batch() {
        data.extend(softmax(x.row(n)));
    }
    Tensor::new(x.shape().to_vec(), data).expect("softmax output")
}

fn spatial(x: &Tensor) -> usize {
    x.shape()[2..].iter().product()
}

/// Per-channel mean and biased variance, accumulated in f64.
fn channel_moments(x: &Tensor) -> (Vec<f32>, Vec<f32>, usize) {
    let (n, ch, r) = (x.shape()[0], x.shape()[1], spatial(x));
    let count = n * r;
    let mut mean = vec![0.0f64; ch];
    let mut sq = vec![0.0f64; ch];
    for b in 0..n {
        for c in 0..ch {
            for &v in &x.data()[(b * ch + c) * r..(b * ch + c + 1) * r] {
                mean[c] += v as f64;
                sq[c] += (v as f64) * (v as f64);
            }
        }
    }
    let mut var = vec![0.0f32; ch];
    let mut m32 = vec![0.0f32; ch];
    for c in 0..ch {
        let m = mean[c] / count as f64;
        m32[c] = m as f32;
        var[c] = (sq[c] / count as f64 - m * m).max(0.0) as f32;
    }
    (m32, var, count)
}

fn normalize(x: &Tensor, mean: &[f32], inv_std: &[f32]) -> Tensor {
    let (ch, r) = (x.shape()[1], spatial(x));
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = (i / r) % ch;
            (v - mean[c]) * inv_std[c]
        })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("normalized")
}

fn scale_shift(xhat: &Tensor, b: &BatchNorm) -> Tensor {
    let (ch, r) = (xhat.shape()[1], spatial(xhat));
    let g = b.gamma.value.data();
    let be = b.beta.value.data();
    let data = xhat
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = (i / r) % ch;
            g[c] * v + be[c]
        })
        .collect();
    Tensor::new(xhat.shape().to_vec(), data).expect("batchnorm output")
}

fn batchnorm_backward(b: &mut BatchNorm, xhat: &Tensor, inv_std: &[f32], gy: &Tensor) -> Tensor {
    let (n, ch, r) = (xhat.shape()[0], xhat.shape()[1], spatial(xhat));
    let m = (n * r) as f32;
    let mut sum_g = vec![0.0f32; ch];
    let mut sum_gx = vec![0.0f32; ch];
    for (i, (&g, &xh)) in gy.data().iter().zip(xhat.data()).enumerate() {
        let c = (i / r) % ch;
        sum_g[c] += g;
        sum_gx[c] += g * xh;
    }
    for c in 0..ch {
        b.gamma.grad.data_mut()[c] += sum_gx[c];
        b.beta.grad.data_mut()[c] += sum_g[c];
    }
    let gamma = b.gamma.value.data();
    let data = gy
        .data()
        .iter()
        .zip(xhat.data())
        .enumerate()
        .map(|(i, (&g, &xh))| {
            let c = (i / r) % ch;
            gamma[c] * inv_std[c] / m * (m * g - sum_g[c] - xh * sum_gx[c])
        })
        .collect();
    Tensor::new(xhat.shape().to_vec(), data).expect("batchnorm grad")
}
