use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, Conv1d, Dense, Layer, LeakyRelu, MaxPool, Param, Upsample};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::Rng;

/// Weight-free description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { in_dim: usize, out_dim: usize },
    Conv1d { in_channels: usize, out_channels: usize, kernel: usize },
    MaxPool { size: usize },
    Upsample { factor: usize },
    BatchNorm { channels: usize },
    LeakyRelu { slope: f64 },
}

impl LayerSpec {
    /// Output `(channels, len)` for an input of `(channels, len)`.
    pub fn output_shape(&self, (c, l): (usize, usize)) -> Result<(usize, usize)> {
        let mismatch = |expected, found| Err(Error::DimMismatch { expected, found });
        match *self {
            LayerSpec::Dense { in_dim, out_dim } => {
                if c * l != in_dim {
                    return mismatch(in_dim, c * l);
                }
                Ok((out_dim, 1))
            }
            LayerSpec::Conv1d { in_channels, out_channels, .. } => {
                if c != in_channels {
                    return mismatch(in_channels, c);
                }
                Ok((out_channels, l))
            }
            LayerSpec::MaxPool { size } => {
                if size == 0 || l % size != 0 {
                    return Err(Error::NonIntegralWidth(format!("length {l} is not divisible by pool size {size}")));
                }
                Ok((c, l / size))
            }
            LayerSpec::Upsample { factor } => Ok((c, l * factor)),
            LayerSpec::BatchNorm { channels } => {
                if c != channels {
                    return mismatch(channels, c);
                }
                Ok((c, l))
            }
            LayerSpec::LeakyRelu { .. } => Ok((c, l)),
        }
    }

    /// Weight and bias count.
    pub fn parameter_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { in_dim, out_dim } => in_dim * out_dim + out_dim,
            LayerSpec::Conv1d { in_channels, out_channels, kernel } => {
                in_channels * out_channels * kernel + out_channels
            }
            LayerSpec::BatchNorm { channels } => 2 * channels,
            _ => 0,
        }
    }

    fn instantiate(&self, rng: &mut Rng) -> Layer {
        match *self {
            LayerSpec::Dense { in_dim, out_dim } => Layer::Dense(Dense::new(in_dim, out_dim, rng)),
            LayerSpec::Conv1d { in_channels, out_channels, kernel } => {
                Layer::Conv1d(Conv1d::new(in_channels, out_channels, kernel, rng))
            }
            LayerSpec::MaxPool { size } => Layer::MaxPool(MaxPool::new(size)),
            LayerSpec::Upsample { factor } => Layer::Upsample(Upsample { factor }),
            LayerSpec::BatchNorm { channels } => Layer::BatchNorm(BatchNorm::new(channels)),
            LayerSpec::LeakyRelu { slope } => Layer::LeakyRelu(LeakyRelu::new(slope)),
        }
    }

    fn of(layer: &Layer) -> Self {
        match layer {
            Layer::Dense(l) => LayerSpec::Dense { in_dim: l.in_dim, out_dim: l.out_dim },
            Layer::Conv1d(l) => LayerSpec::Conv1d {
                in_channels: l.in_channels,
                out_channels: l.out_channels,
                kernel: l.kernel,
            },
            Layer::MaxPool(l) => LayerSpec::MaxPool { size: l.size },
            Layer::Upsample(l) => LayerSpec::Upsample { factor: l.factor },
            Layer::BatchNorm(l) => LayerSpec::BatchNorm { channels: l.channels },
            Layer::LeakyRelu(l) => LayerSpec::LeakyRelu { slope: l.slope },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Raw outputs (reconstruction).
    Linear,
    /// Logits turned into class probabilities by softmax.
    Softmax,
}

/// Architecture without weights: input shape, layers, coding layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blueprint {
    pub input: (usize, usize),
    pub layers: Vec<LayerSpec>,
    /// Index of the layer whose output is the code, if any.
    pub code_layer: Option<usize>,
    pub output: OutputKind,
}

impl Blueprint {
    /// Shape after every layer; checks adjacent compatibility.
    pub fn shapes(&self) -> Result<Vec<(usize, usize)>> {
        let mut shape = self.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            shape = l.output_shape(shape)?;
            out.push(shape);
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<(usize, usize)> {
        Ok(self.shapes()?.last().copied().unwrap_or(self.input))
    }

    /// Flattened code width, if the blueprint has a coding layer.
    pub fn code_width(&self) -> Result<Option<usize>> {
        let shapes = self.shapes()?;
        Ok(self.code_layer.map(|i| shapes[i].0 * shapes[i].1))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::parameter_count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input: (usize, usize),
    layers: Vec<Layer>,
    code_layer: Option<usize>,
    output: OutputKind,
}

impl Network {
    /// Instantiates a blueprint with seeded Glorot-uniform weights.
    pub fn new(blueprint: &Blueprint, rng: &mut Rng) -> Result<Self> {
        blueprint.shapes()?;
        if let Some(i) = blueprint.code_layer {
            if i >= blueprint.layers.len() {
                return Err(Error::InvalidConfig(format!("coding layer {i} out of range")));
            }
        }
        Ok(Self {
            input: blueprint.input,
            layers: blueprint.layers.iter().map(|l| l.instantiate(rng)).collect(),
            code_layer: blueprint.code_layer,
            output: blueprint.output,
        })
    }

    pub fn blueprint(&self) -> Blueprint {
        Blueprint {
            input: self.input,
            layers: self.layers.iter().map(LayerSpec::of).collect(),
            code_layer: self.code_layer,
            output: self.output,
        }
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.input
    }

    pub fn input_width(&self) -> usize {
        self.input.0 * self.input.1
    }

    pub fn output_kind(&self) -> OutputKind {
        self.output
    }

    pub fn code_layer(&self) -> Option<usize> {
        self.code_layer
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    /// Inference pass through the first `upto` layers.
    fn infer_prefix(&self, x: &Tensor, upto: usize) -> Tensor {
        let mut h = x.clone();
        for layer in &self.layers[..upto] {
            h = layer.infer(&h);
        }
        h
    }

    /// Inference output (logits for softmax networks).
    pub fn infer(&self, x: &Tensor) -> Tensor {
        self.infer_prefix(x, self.layers.len())
    }

    /// Training pass; caches activations for [`Network::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward_train(&h);
        }
        h
    }

    /// Back-propagates `grad` (of the raw output) and returns the input gradient.
    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    fn check_width(&self, matrix: &FeatureMatrix) -> Result<()> {
        if matrix.n_cols() != self.input_width() {
            return Err(Error::DimMismatch {
                expected: self.input_width(),
                found: matrix.n_cols(),
            });
        }
        Ok(())
    }

    /// Runs inference over all rows in fixed-size chunks, in parallel.
    fn map_rows(&self, matrix: &FeatureMatrix, upto: usize) -> Result<(Vec<f64>, usize)> {
        self.check_width(matrix)?;
        const CHUNK: usize = 64;
        let indices: Vec<usize> = (0..matrix.n_rows()).collect();
        let parts: Vec<Tensor> = indices
            .par_chunks(CHUNK)
            .map(|idx| {
                let x = Tensor::from_rows(matrix, idx, self.input.0).expect("checked width");
                self.infer_prefix(&x, upto)
            })
            .collect::<Vec<_>>();
        let width = parts.first().map_or(0, Tensor::sample_len);
        Ok((parts.into_iter().flat_map(|t| t.data).collect(), width))
    }

    /// Network outputs per row; softmax networks return probabilities.
    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        let (flat, width) = self.map_rows(matrix, self.layers.len())?;
        Ok(flat
            .chunks(width.max(1))
            .take(matrix.n_rows())
            .map(|row| match self.output {
                OutputKind::Linear => row.to_vec(),
                OutputKind::Softmax => softmax(row),
            })
            .collect())
    }

    /// Coding-layer activations per row.
    pub fn encode(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        let code = self
            .code_layer
            .ok_or_else(|| Error::InvalidConfig("network has no coding layer".into()))?;
        let (flat, width) = self.map_rows(matrix, code + 1)?;
        let names = (0..width).map(|j| format!("code_{j:03}")).collect();
        FeatureMatrix::new(
            flat,
            width,
            names,
            matrix.labels().to_vec(),
            matrix.class_names().to_vec(),
        )
    }

    /// Most probable class per row; ties go to the smallest index.
    pub fn predict_classes(&self, matrix: &FeatureMatrix) -> Result<Vec<usize>> {
        if self.output != OutputKind::Softmax {
            return Err(Error::InvalidConfig("class prediction needs a softmax network".into()));
        }
        let (flat, width) = self.map_rows(matrix, self.layers.len())?;
        Ok(flat.chunks(width.max(1)).take(matrix.n_rows()).map(argmax).collect())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Coding-layer activations of a trained AE or CAE.
pub fn encode(net: &Network, segments: &FeatureMatrix) -> Result<FeatureMatrix> {
    net.encode(segments)
}

/// Class indices predicted by a trained CNN.
pub fn predict_cnn(net: &Network, segments: &FeatureMatrix) -> Result<Vec<usize>> {
    net.predict_classes(segments)
}
