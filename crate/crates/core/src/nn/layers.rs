//! Layers with explicit forward and backward passes.
//!
//! Training-mode forward passes cache what their backward pass needs;
//! inference passes are read-only so a trained network can be shared.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::rng::Rng;

/// A trainable parameter tensor with its gradient and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
    #[serde(skip)]
    pub first_moment: Vec<f64>,
    #[serde(skip)]
    pub second_moment: Vec<f64>,
    /// Whether L2 regularization applies (weights yes, biases and scales no).
    pub decay: bool,
}

impl Param {
    pub fn new(value: Vec<f64>, decay: bool) -> Self {
        let n = value.len();
        Self {
            value,
            grad: vec![0.0; n],
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            decay,
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`.
    fn glorot(n: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::new((0..n).map(|_| rng.uniform_range(-limit, limit)).collect(), true)
    }

    pub fn zero_grad(&mut self) {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        } else {
            self.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    fn accumulate(&mut self, g: &[f64]) {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        }
        for (a, b) in self.grad.iter_mut().zip(g) {
            *a += b;
        }
    }
}

/// Fully connected layer over the flattened `(channels, len)` sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim × in_dim`, row-major.
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: Param::glorot(in_dim * out_dim, in_dim, out_dim, rng),
            bias: Param::new(vec![0.0; out_dim], false),
            input: None,
        }
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.sample_len(), self.in_dim, "dense input width");
        let mut out = Tensor::zeros(x.batch, self.out_dim, 1);
        out.data
            .par_chunks_mut(self.out_dim)
            .enumerate()
            .for_each(|(b, y)| {
                let xb = x.sample(b);
                for (o, yo) in y.iter_mut().enumerate() {
                    let w = &self.weight.value[o * self.in_dim..(o + 1) * self.in_dim];
                    *yo = self.bias.value[o] + w.iter().zip(xb).map(|(a, c)| a * c).sum::<f64>();
                }
            });
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.input.as_ref().expect("forward_train before backward");
        let (n_in, n_out) = (self.in_dim, self.out_dim);
        let mut gw = vec![0.0; n_in * n_out];
        gw.par_chunks_mut(n_in).enumerate().for_each(|(o, row)| {
            for b in 0..x.batch {
                let g = grad.data[b * n_out + o];
                if g != 0.0 {
                    for (r, xi) in row.iter_mut().zip(x.sample(b)) {
                        *r += g * xi;
                    }
                }
            }
        });
        let gb: Vec<f64> = (0..n_out)
            .map(|o| (0..x.batch).map(|b| grad.data[b * n_out + o]).sum())
            .collect();
        let w = &self.weight.value;
        let mut gx = Tensor::zeros(x.batch, x.channels, x.len);
        gx.data.par_chunks_mut(n_in).enumerate().for_each(|(b, gxb)| {
            for o in 0..n_out {
                let g = grad.data[b * n_out + o];
                if g != 0.0 {
                    for (acc, wi) in gxb.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *acc += g * wi;
                    }
                }
            }
        });
        self.weight.accumulate(&gw);
        self.bias.accumulate(&gb);
        gx
    }
}

/// One-dimensional convolution with odd kernel and zero "same" padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `out × in × kernel`.
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    input: Option<Tensor>,
}

impl Conv1d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut Rng) -> Self {
        assert!(kernel % 2 == 1, "kernel length must be odd");
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: Param::glorot(
                out_channels * in_channels * kernel,
                in_channels * kernel,
                out_channels * kernel,
                rng,
            ),
            bias: Param::new(vec![0.0; out_channels], false),
            input: None,
        }
    }

    fn w(&self, o: usize, i: usize) -> &[f64] {
        let k = self.kernel;
        let start = (o * self.in_channels + i) * k;
        &self.weight.value[start..start + k]
    }

    /// Valid output range `[lo, hi)` for kernel tap `k` with padding `pad`.
    fn tap_range(tap: usize, pad: usize, len: usize) -> (usize, usize) {
        // Output t reads input t + tap - pad.
        let lo = pad.saturating_sub(tap);
        let hi = (len + pad).saturating_sub(tap).min(len);
        (lo, hi.max(lo))
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.channels, self.in_channels, "conv input channels");
        let len = x.len;
        let pad = self.kernel / 2;
        let mut out = Tensor::zeros(x.batch, self.out_channels, len);
        out.data
            .par_chunks_mut(self.out_channels * len)
            .enumerate()
            .for_each(|(b, yb)| {
                let xb = x.sample(b);
                for o in 0..self.out_channels {
                    let y = &mut yb[o * len..(o + 1) * len];
                    y.iter_mut().for_each(|v| *v = self.bias.value[o]);
                    for i in 0..self.in_channels {
                        let xi = &xb[i * len..(i + 1) * len];
                        for (tap, &w) in self.w(o, i).iter().enumerate() {
                            let (lo, hi) = Self::tap_range(tap, pad, len);
                            let shift = tap as isize - pad as isize;
                            let src = &xi[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                            for (yv, xv) in y[lo..hi].iter_mut().zip(src) {
                                *yv += w * xv;
                            }
                        }
                    }
                }
            });
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let x = self.input.as_ref().expect("forward_train before backward");
        let len = x.len;
        let pad = self.kernel / 2;
        let (n_in, n_out, k) = (self.in_channels, self.out_channels, self.kernel);

        let mut gw = vec![0.0; n_out * n_in * k];
        gw.par_chunks_mut(n_in * k).enumerate().for_each(|(o, gwo)| {
            for b in 0..x.batch {
                let g = &grad.data[(b * n_out + o) * len..(b * n_out + o + 1) * len];
                let xb = x.sample(b);
                for i in 0..n_in {
                    let xi = &xb[i * len..(i + 1) * len];
                    for tap in 0..k {
                        let (lo, hi) = Self::tap_range(tap, pad, len);
                        let shift = tap as isize - pad as isize;
                        let src = &xi[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                        gwo[i * k + tap] += g[lo..hi].iter().zip(src).map(|(a, c)| a * c).sum::<f64>();
                    }
                }
            }
        });
        let gb: Vec<f64> = (0..n_out)
            .map(|o| {
                (0..x.batch)
                    .map(|b| grad.data[(b * n_out + o) * len..(b * n_out + o + 1) * len].iter().sum::<f64>())
                    .sum()
            })
            .collect();

        let mut gx = Tensor::zeros(x.batch, n_in, len);
        gx.data.par_chunks_mut(n_in * len).enumerate().for_each(|(b, gxb)| {
            for o in 0..n_out {
                let g = &grad.data[(b * n_out + o) * len..(b * n_out + o + 1) * len];
                for i in 0..n_in {
                    let gxi = &mut gxb[i * len..(i + 1) * len];
                    for (tap, &w) in self.w(o, i).iter().enumerate() {
                        let (lo, hi) = Self::tap_range(tap, pad, len);
                        let shift = tap as isize - pad as isize;
                        let dst = &mut gxi[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                        for (d, gv) in dst.iter_mut().zip(&g[lo..hi]) {
                            *d += w * gv;
                        }
                    }
                }
            }
        });
        self.weight.accumulate(&gw);
        self.bias.accumulate(&gb);
        gx
    }
}

/// Non-overlapping max pooling; the length must be a multiple of the size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPool {
    pub size: usize,
    #[serde(skip)]
    argmax: Vec<usize>,
    #[serde(skip)]
    input_shape: (usize, usize, usize),
}

impl MaxPool {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            argmax: Vec::new(),
            input_shape: (0, 0, 0),
        }
    }

    fn run(&self, x: &Tensor) -> (Tensor, Vec<usize>) {
        assert_eq!(x.len % self.size, 0, "pool size must divide the length");
        let out_len = x.len / self.size;
        let mut out = Tensor::zeros(x.batch, x.channels, out_len);
        let mut arg = vec![0usize; out.data.len()];
        for (row, (y, a)) in out.data.chunks_mut(out_len).zip(arg.chunks_mut(out_len)).enumerate() {
            let base = row * x.len;
            for (t, (yv, av)) in y.iter_mut().zip(a.iter_mut()).enumerate() {
                let start = base + t * self.size;
                let mut best = start;
                for j in start + 1..start + self.size {
                    if x.data[j] > x.data[best] {
                        best = j;
                    }
                }
                *yv = x.data[best];
                *av = best;
            }
        }
        (out, arg)
    }

    fn backward(&self, grad: &Tensor) -> Tensor {
        let (b, c, l) = self.input_shape;
        let mut gx = Tensor::zeros(b, c, l);
        for (g, &src) in grad.data.iter().zip(&self.argmax) {
            gx.data[src] += g;
        }
        gx
    }
}

/// Nearest-neighbour upsampling: every value repeated `factor` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Upsample {
    pub factor: usize,
}

impl Upsample {
    fn infer(&self, x: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(x.batch, x.channels, x.len * self.factor);
        for (i, &v) in x.data.iter().enumerate() {
            out.data[i * self.factor..(i + 1) * self.factor].iter_mut().for_each(|o| *o = v);
        }
        out
    }

    fn backward(&self, grad: &Tensor) -> Tensor {
        let mut gx = Tensor::zeros(grad.batch, grad.channels, grad.len / self.factor);
        for (i, g) in gx.data.iter_mut().enumerate() {
            *g = grad.data[i * self.factor..(i + 1) * self.factor].iter().sum();
        }
        gx
    }
}

/// Per-channel batch normalization over batch and length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    #[serde(skip)]
    cache: Option<BatchNormCache>,
}

#[derive(Debug, Clone, PartialEq)]
struct BatchNormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(vec![1.0; channels], false),
            beta: Param::new(vec![0.0; channels], false),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn for_each_channel(x: &Tensor, c: usize, mut f: impl FnMut(usize)) {
        for b in 0..x.batch {
            let start = (b * x.channels + c) * x.len;
            for i in start..start + x.len {
                f(i);
            }
        }
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for c in 0..self.channels {
            let inv = 1.0 / (self.running_var[c] + self.eps).sqrt();
            let (g, bt, m) = (self.gamma.value[c], self.beta.value[c], self.running_mean[c]);
            Self::for_each_channel(x, c, |i| out.data[i] = g * (x.data[i] - m) * inv + bt);
        }
        out
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        assert_eq!(x.channels, self.channels, "batch-norm channels");
        let count = (x.batch * x.len) as f64;
        let mut normalized = x.clone();
        let mut out = x.clone();
        let mut inv_std = vec![0.0; self.channels];
        for c in 0..self.channels {
            let mut mean = 0.0;
            Self::for_each_channel(x, c, |i| mean += x.data[i]);
            mean /= count;
            let mut var = 0.0;
            Self::for_each_channel(x, c, |i| var += (x.data[i] - mean).powi(2));
            var /= count;
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_std[c] = inv;
            let (g, bt) = (self.gamma.value[c], self.beta.value[c]);
            Self::for_each_channel(x, c, |i| {
                let n = (x.data[i] - mean) * inv;
                normalized.data[i] = n;
                out.data[i] = g * n + bt;
            });
            self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean;
            self.running_var[c] = (1.0 - self.momentum) * self.running_var[c] + self.momentum * var;
        }
        self.cache = Some(BatchNormCache { normalized, inv_std });
        out
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let cache = self.cache.as_ref().expect("forward_train before backward");
        let xhat = &cache.normalized;
        let count = (grad.batch * grad.len) as f64;
        let mut gx = grad.clone();
        let mut g_gamma = vec![0.0; self.channels];
        let mut g_beta = vec![0.0; self.channels];
        for c in 0..self.channels {
            let (mut sum_g, mut sum_gx) = (0.0, 0.0);
            Self::for_each_channel(grad, c, |i| {
                sum_g += grad.data[i];
                sum_gx += grad.data[i] * xhat.data[i];
            });
            g_beta[c] = sum_g;
            g_gamma[c] = sum_gx;
            let scale = self.gamma.value[c] * cache.inv_std[c] / count;
            Self::for_each_channel(grad, c, |i| {
                gx.data[i] = scale * (count * grad.data[i] - sum_g - xhat.data[i] * sum_gx);
            });
        }
        self.gamma.accumulate(&g_gamma);
        self.beta.accumulate(&g_beta);
        gx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakyRelu {
    pub slope: f64,
    #[serde(skip)]
    input: Option<Tensor>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        Self { slope, input: None }
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        out.data.iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v *= self.slope
            }
        });
        out
    }

    fn backward(&self, grad: &Tensor) -> Tensor {
        let x = self.input.as_ref().expect("forward_train before backward");
        let mut gx = grad.clone();
        for (g, &xv) in gx.data.iter_mut().zip(&x.data) {
            if xv < 0.0 {
                *g *= self.slope;
            }
        }
        gx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    MaxPool(MaxPool),
    Upsample(Upsample),
    BatchNorm(BatchNorm),
    LeakyRelu(LeakyRelu),
}

impl Layer {
    /// Forward pass without caching; batch norm uses running statistics.
    pub fn infer(&self, x: &Tensor) -> Tensor {
        match self {
            Layer::Dense(l) => l.infer(x),
            Layer::Conv1d(l) => l.infer(x),
            Layer::MaxPool(l) => l.run(x).0,
            Layer::Upsample(l) => l.infer(x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::LeakyRelu(l) => l.infer(x),
        }
    }

    /// Training forward pass; caches inputs for [`Layer::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        match self {
            Layer::Dense(l) => {
                let y = l.infer(x);
                l.input = Some(x.clone());
                y
            }
            Layer::Conv1d(l) => {
                let y = l.infer(x);
                l.input = Some(x.clone());
                y
            }
            Layer::MaxPool(l) => {
                let (y, arg) = l.run(x);
                l.argmax = arg;
                l.input_shape = (x.batch, x.channels, x.len);
                y
            }
            Layer::Upsample(l) => l.infer(x),
            Layer::BatchNorm(l) => l.forward_train(x),
            Layer::LeakyRelu(l) => {
                let y = l.infer(x);
                l.input = Some(x.clone());
                y
            }
        }
    }

    /// Gradient with respect to the input; parameter gradients accumulate.
    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        match self {
            Layer::Dense(l) => l.backward(grad),
            Layer::Conv1d(l) => l.backward(grad),
            Layer::MaxPool(l) => l.backward(grad),
            Layer::Upsample(l) => l.backward(grad),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::LeakyRelu(l) => l.backward(grad),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Conv1d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Conv1d(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            _ => Vec::new(),
        }
    }

    /// Drops cached activations.
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Dense(l) => l.input = None,
            Layer::Conv1d(l) => l.input = None,
            Layer::MaxPool(l) => l.argmax = Vec::new(),
            Layer::BatchNorm(l) => l.cache = None,
            Layer::LeakyRelu(l) => l.input = None,
            Layer::Upsample(_) => {}
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv1d(_) => "conv1d",
            Layer::MaxPool(_) => "max_pool",
            Layer::Upsample(_) => "upsample",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::LeakyRelu(_) => "leaky_relu",
        }
    }
}
