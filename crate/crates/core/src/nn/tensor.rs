use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Dense `(batch, channels, length)` tensor, row-major.
///
/// Fully connected layers produce `(batch, features, 1)`, so per-channel
/// batch normalization covers both convolutional and dense activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub data: Vec<f64>,
    pub batch: usize,
    pub channels: usize,
    pub len: usize,
}

impl Tensor {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self {
            data: vec![0.0; batch * channels * len],
            batch,
            channels,
            len,
        }
    }

    pub fn from_vec(data: Vec<f64>, batch: usize, channels: usize, len: usize) -> Result<Self> {
        if data.len() != batch * channels * len {
            return Err(Error::LengthMismatch {
                expected: batch * channels * len,
                found: data.len(),
            });
        }
        Ok(Self {
            data,
            batch,
            channels,
            len,
        })
    }

    /// Rows `indices` of `matrix`, each reshaped to `(channels, len)`.
    pub fn from_rows(matrix: &FeatureMatrix, indices: &[usize], channels: usize) -> Result<Self> {
        let width = matrix.n_cols();
        if channels == 0 || !width.is_multiple_of(channels) {
            return Err(Error::DimMismatch {
                expected: channels,
                found: width,
            });
        }
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            data.extend_from_slice(matrix.row(i));
        }
        Self::from_vec(data, indices.len(), channels, width / channels)
    }

    /// Values per sample.
    pub fn sample_len(&self) -> usize {
        self.channels * self.len
    }

    pub fn sample(&self, b: usize) -> &[f64] {
        let w = self.sample_len();
        &self.data[b * w..(b + 1) * w]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.batch == other.batch && self.channels == other.channels && self.len == other.len
    }
}
