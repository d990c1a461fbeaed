//! Statistical learners: diagonal-covariance Gaussian mixtures fit by EM and
//! a small multi-layer perceptron trained by full-batch gradient descent.

pub mod document;
pub mod gmm;
pub mod mlp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gmm::{gmm_fit, gmm_loglik, GaussianComponent, GmmFit, GmmModel};
pub use mlp::{mlp_predict, mlp_train, Activation, MlpModel, MlpTraining, Network, Standardizer};

/// Smallest per-dimension variance a mixture component may have.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Training knobs shared by both learners. `k` only matters for mixtures,
/// `learning_rate` and `hidden_layers` only for the perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub learning_rate: f64,
    pub k: usize,
    pub hidden_layers: Vec<usize>,
    pub variance_floor: f64,
}

impl TrainConfig {
    /// EM defaults: two components, relative tolerance 1e-6, 200 iterations.
    pub fn gmm() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            seed: 0,
            learning_rate: 0.05,
            k: 2,
            hidden_layers: vec![16],
            variance_floor: VARIANCE_FLOOR,
        }
    }

    /// Perceptron defaults: one tanh layer of 16 units, rate 0.05, 5000 epochs.
    pub fn mlp() -> Self {
        Self {
            max_iterations: 5000,
            ..Self::gmm()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("k must be positive".into()));
        }
        if !(self.tolerance > 0.0) || !(self.learning_rate > 0.0) || !(self.variance_floor > 0.0) {
            return Err(Error::Parameter(
                "tolerance, learning rate and variance floor must be positive".into(),
            ));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Parameter("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}
