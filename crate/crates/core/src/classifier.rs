//! Linear softmax frame classifier.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SegError};
use crate::types::ProbabilityStream;

/// `p(a | x_t) = softmax(W x_t + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxModel {
    /// `|A| x F1`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Parameter gradients of [`LinearSoftmaxModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearSoftmaxModel {
    pub fn zeros(num_actions: usize, feature_dim: usize) -> Self {
        LinearSoftmaxModel {
            weights: Array2::zeros((num_actions, feature_dim)),
            bias: Array1::zeros(num_actions),
        }
    }

    /// Gaussian weights with standard deviation `scale`, zero bias.
    pub fn random<R: Rng + ?Sized>(num_actions: usize, feature_dim: usize, scale: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, scale).map_err(|e| SegError::Config(format!("init scale {scale}: {e}")))?;
        Ok(LinearSoftmaxModel {
            weights: Array2::from_shape_simple_fn((num_actions, feature_dim), || normal.sample(rng)),
            bias: Array1::zeros(num_actions),
        })
    }

    pub fn num_actions(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn check(&self, features: &ArrayView2<'_, f64>) -> Result<()> {
        if features.ncols() != self.feature_dim() {
            return Err(SegError::Dimension {
                what: "feature width",
                expected: self.feature_dim(),
                got: features.ncols(),
            });
        }
        Ok(())
    }

    fn softmax(&self, features: &ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = features.dot(&self.weights.t()) + &self.bias;
        for mut row in z.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        z
    }

    pub fn forward(&self, features: ArrayView2<'_, f64>) -> Result<ProbabilityStream> {
        self.check(&features)?;
        ProbabilityStream::new(self.softmax(&features))
    }

    /// Backpropagates `dL / d ln p(a | x_t)` through the log-softmax.
    pub fn backward(&self, features: ArrayView2<'_, f64>, grad_log_posterior: &Array2<f64>) -> Result<LinearGrad> {
        self.check(&features)?;
        let expected = (features.nrows(), self.num_actions());
        if grad_log_posterior.dim() != expected {
            return Err(SegError::Dimension {
                what: "gradient rows x columns",
                expected: expected.0 * expected.1,
                got: grad_log_posterior.len(),
            });
        }
        let p = self.softmax(&features);
        let row_sums = grad_log_posterior.sum_axis(Axis(1));
        let mut dz = grad_log_posterior.clone();
        for ((mut row, prow), s) in dz.rows_mut().into_iter().zip(p.rows()).zip(row_sums.iter()) {
            row.zip_mut_with(&prow, |g, &pv| *g -= pv * s);
        }
        Ok(LinearGrad {
            weights: dz.t().dot(&features),
            bias: dz.sum_axis(Axis(0)),
        })
    }

    /// `theta -= step * grad`.
    pub fn apply(&mut self, grad: &LinearGrad, step: f64) {
        self.weights.scaled_add(-step, &grad.weights);
        self.bias.scaled_add(-step, &grad.bias);
    }
}
