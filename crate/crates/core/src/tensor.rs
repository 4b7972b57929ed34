//! Dense n-dimensional array of f64, row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat row-major array of 64-bit reals carrying its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// 1-D tensor from a slice.
    pub fn vector(data: &[f64]) -> Self {
        Tensor {
            shape: vec![data.len()],
            data: data.to_vec(),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Same data, new shape. Element count must match.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                actual: self.shape.clone(),
                context: "reshape".into(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Debug-mode guard against NaN/Inf leaking out of a pass.
    #[inline]
    pub fn debug_assert_finite(&self, what: &str) {
        debug_assert!(self.is_finite(), "non-finite values in {what}");
    }
}

/// Mean over all elements of squared differences.
pub fn mse_loss(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            actual: y.shape().to_vec(),
            context: "mse_loss".into(),
        });
    }
    let n = x.numel() as f64;
    let sum: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n)
}

/// Gradient of `mse_loss(x, y)` with respect to `y`, scaled by `1/extra_batch`
/// so per-sample gradients of a batch-mean loss can be accumulated directly.
pub fn mse_grad(x: &Tensor, y: &Tensor, extra_batch: usize) -> Result<Tensor> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            actual: y.shape().to_vec(),
            context: "mse_grad".into(),
        });
    }
    let scale = 2.0 / (x.numel() as f64 * extra_batch as f64);
    let data = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| scale * (b - a))
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Sum of squared differences over all features (no normalization).
/// Shared definition between boosting weight updates and anomaly scores.
pub fn sq_error_sum(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.numel() != y.numel() {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            actual: y.shape().to_vec(),
            context: "sq_error_sum".into(),
        });
    }
    Ok(x.data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}
